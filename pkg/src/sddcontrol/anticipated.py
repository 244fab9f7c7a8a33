"""Forward solver for anticipated (time-advanced) SDEs

    dm = drift(t, m(t), A(t)) dt + diffusion(t, m(t), A(t)) dW,
    A(t) = E[ g(m(t + delta)) | F_t ],   m(0) = h1,   m = lambda on (T, T + delta].

The conditional expectation of the advanced value couples the whole path, so
the equation is solved by Picard iteration: the advanced inputs ``A_i`` are
regressed from the previous iterate, then one Euler sweep produces the next.
On the last delta-block of ``[0, T]`` the advanced time lies in
``[T, T + delta]`` and ``A_i`` is read from ``lambda`` (its right limit at
``T``), so that block is an ordinary SDE from the first pass on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bsde import DEFAULT_MAX_ITER, DEFAULT_TOL, _check_divergence, _rms
from .errors import ShapeMismatch
from .grid import BrownianDriver, PathEnsemble, TimeGrid
from .regression import Projector, RegressionBasis


@dataclass(frozen=True)
class AdjointSolution:
    grid: TimeGrid
    m: PathEnsemble
    h0: float
    h1: np.ndarray
    picard_iterations: int
    picard_residual: float
    gaps: tuple = field(default=())
    block_gaps: tuple = field(default=())

    @property
    def terminal(self) -> np.ndarray:
        return self.m.at(self.grid.n_steps)

    def scaled(self, c: float) -> AdjointSolution:
        """The solution for multipliers ``(c h0, c h1)``; valid for linear adjoints."""
        return AdjointSolution(self.grid, PathEnsemble(self.m.values * c, 0, self.m.last_index),
                               self.h0 * c, self.h1 * c, self.picard_iterations,
                               self.picard_residual, self.gaps, self.block_gaps)


@dataclass(frozen=True)
class ContractionReport:
    rate: float
    converged: bool


def contraction_diagnostic(gaps) -> ContractionReport:
    """Geometric rate of a Picard gap history from a least-squares fit of ``log(gap_k)``."""
    gaps = np.asarray(list(gaps), dtype=float)
    if gaps.size < 3:
        raise ValueError("need at least 3 recorded gaps")
    pos = gaps > 0
    if pos.sum() < 2:
        return ContractionReport(0.0, True)
    k = np.flatnonzero(pos)
    slope = np.polyfit(k.astype(float), np.log(gaps[pos]), 1)[0]
    rate = float(np.exp(slope))
    return ContractionReport(rate, rate < 1.0)


def _features(state, mk, i, m):
    cols = []
    if state is not None:
        for j in (i, i - m):
            j = min(max(j, state.first_index), state.last_index)
            cols.append(state.at(j).reshape(state.n_paths, -1))
    cols.append(mk[:, i].reshape(mk.shape[0], -1))
    return np.column_stack(cols)


def solve_anticipated_sde(drift, diffusion, h1, driver: BrownianDriver,
                          tol: float = DEFAULT_TOL, terminal_segment=None,
                          advance=None, state: PathEnsemble | None = None,
                          basis: RegressionBasis | None = None,
                          max_iter: int = DEFAULT_MAX_ITER, h0: float = 0.0,
                          linear=None) -> AdjointSolution:
    """Solve the anticipated SDE on ``[0, T + delta]``.

    Args:
        drift, diffusion: ``fn(t, m, A)`` returning ``(P, n)`` and ``(P, n, d)``.
        h1: initial value ``m(0)``, shape ``(n,)``.
        driver: Brownian increments.
        tol: stop when the sup-in-time RMS gap between iterates is <= tol.
        terminal_segment: ``lambda`` on grid indices ``N+1..N+m`` as ``(P, m, n)``;
            zero when omitted.
        advance: ``fn(j, m_j)`` mapping the advanced value to the regression
            target (identity by default).
        state: optional ensemble whose current and delayed values join the
            regression features; the current iterate ``m`` always does.
        h0: recorded on the solution (the caller folds it into the coefficients).
        linear: for ``n = d = 1``, arrays ``(a, c, e, g)`` of shape ``(P, N)`` with
            ``drift = a m + A + c`` and ``diffusion = e m + g``; runs the
            compiled sweep and ignores ``drift``/``diffusion``.

    Raises:
        PicardDivergence: the gap grew three times in a row or max_iter was hit.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = driver.grid
    mdl, N, P, d = grid.delay_steps, grid.n_steps, driver.n_paths, driver.dim
    h1 = np.atleast_1d(np.asarray(h1, dtype=float))
    n = h1.shape[0]
    basis = basis or RegressionBasis()
    dt = grid.dt
    dW = driver.increments
    advance = advance or (lambda j, v: v)

    lam = np.zeros((P, mdl, n))
    if terminal_segment is not None:
        lam_in = terminal_segment.values if isinstance(terminal_segment, PathEnsemble) else terminal_segment
        lam = np.asarray(lam_in, dtype=float).reshape(P, mdl, n)

    mk = np.empty((P, N + mdl + 1, n))
    mk[:, :N + 1] = h1
    mk[:, N + 1:] = lam

    # advanced inputs on the final block come from lambda only
    A_block = np.zeros((P, mdl, n))
    if np.any(lam):
        for b, i in enumerate(range(N - mdl, N)):
            j = max(i + mdl, N + 1)
            target = np.asarray(advance(j, lam[:, j - N - 1]), dtype=float).reshape(P, n)
            feats = _features(state, mk, i, mdl)
            A_block[:, b] = Projector(feats, basis).project(target)

    gaps, block_gaps = [], []
    A_prev_block = A_block.copy()
    while True:
        A = np.zeros((P, N, n))
        for i in range(N - mdl):
            target = np.asarray(advance(i + mdl, mk[:, i + mdl]), dtype=float).reshape(P, n)
            if not target.any():
                continue
            A[:, i] = Projector(_features(state, mk, i, mdl), basis).project(target)
        A[:, N - mdl:] = A_block
        block_gaps.append(_rms(A[:, N - mdl:] - A_prev_block))
        A_prev_block = A[:, N - mdl:].copy()

        mnew = np.empty_like(mk)
        mnew[:, 0] = h1
        mnew[:, N + 1:] = lam
        if linear is not None and n == 1 and d == 1:
            a, c, e, g = linear
            y = np.zeros((P, N + 1))
            y[:, 0] = h1[0]
            kernels.linear_sweep(y, a, A[..., 0], c, e, g, dW[..., 0], dt)
            mnew[:, :N + 1, 0] = y
        else:
            for i in range(N):
                t = float(grid.time(i))
                x = mnew[:, i]
                dr = np.asarray(drift(t, x, A[:, i]), dtype=float).reshape(P, n)
                df = np.asarray(diffusion(t, x, A[:, i]), dtype=float).reshape(P, n, d)
                mnew[:, i + 1] = x + dr * dt + np.einsum("pjk,pk->pj", df, dW[:, i])
        gap = max(_rms(mnew[:, i] - mk[:, i]) for i in range(N + 1))
        gaps.append(gap)
        mk = mnew
        if gap <= tol:
            break
        _check_divergence(gaps, max_iter)

    if mk.shape[0] != P:
        raise ShapeMismatch("internal shape error")
    return AdjointSolution(grid, PathEnsemble(mk, 0, N + mdl), float(h0), h1,
                           len(gaps), gaps[-1], tuple(gaps), tuple(block_gaps))
