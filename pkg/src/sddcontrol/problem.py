"""The backward-formulated control problem: state solve, cost, linearization, adjoint.

With ``xi = X(T)`` as the decision variable the state ``(X, q)`` solves the
time-delayed BSDE with generator ``f = -b(., sigma_inv(.))`` and initial
segment ``eta``. The cost is

    J(xi) = E[ sum_i l(t_i, X_i, X_{i-m}, q_i) dt + phi(xi) ].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anticipated import AdjointSolution, solve_anticipated_sde
from .bsde import DEFAULT_MAX_ITER, DEFAULT_TOL, BsdeSolution, TerminalControl, solve_delayed_bsde
from .coefficients import CoefficientSet, InitialSegment
from .grid import BrownianDriver
from .regression import RegressionBasis, StepRegressor


def solve_state(model: CoefficientSet, xi: TerminalControl, eta: InitialSegment,
                driver: BrownianDriver, tol: float = DEFAULT_TOL,
                regressor: StepRegressor | None = None, **kw) -> BsdeSolution:
    """Solve the backward state equation for terminal value ``xi``."""
    return solve_delayed_bsde(lambda t, y, yd, z: model.f(t, y, yd, z), xi, eta, driver,
                              tol=tol, regressor=regressor, **kw)


def running_cost_paths(model: CoefficientSet, state: BsdeSolution) -> np.ndarray:
    """``l(t_i, X_i, X_{i-m}, q_i)`` per path and step, shape ``(P, N)``."""
    grid = state.grid
    m, N = grid.delay_steps, grid.n_steps
    P = state.Y.n_paths
    if not model.has_running_cost:
        return np.zeros((P, N))
    out = np.empty((P, N))
    for i in range(N):
        out[:, i] = model.l(float(grid.time(i)), state.Y.at(i), state.Y.at(i - m), state.Z.at(i))
    return out


def cost(model: CoefficientSet, state: BsdeSolution, xi: TerminalControl) -> float:
    """Sample value of ``J(xi)`` given the solved state."""
    run = running_cost_paths(model, state).sum(axis=1) * state.grid.dt
    term = np.asarray(model.phi(xi.values), dtype=float).reshape(xi.n_paths)
    return float(np.mean(run + term))


@dataclass(frozen=True)
class CoefficientPaths:
    """First derivatives of ``f`` and ``l`` frozen along a solved state.

    Arrays are indexed by step ``0..N``; index ``N`` uses ``q_{N-1}`` (the
    left limit) because ``q`` lives on steps ``0..N-1``. Beyond ``T`` the
    advanced coefficient multiplies ``m = 0`` and is never stored.
    """

    f_x: np.ndarray    # (P, N+1, n, n)
    f_xd: np.ndarray   # (P, N+1, n, n)
    f_q: np.ndarray    # (P, N+1, n, n, d)
    l_x: np.ndarray    # (P, N+1, n)
    l_xd: np.ndarray   # (P, N+1, n)
    l_q: np.ndarray    # (P, N+1, n, d)

    @property
    def depends_on_delay(self) -> bool:
        return bool(np.any(self.f_xd) or np.any(self.l_xd))


def linearize(model: CoefficientSet, state: BsdeSolution) -> CoefficientPaths:
    grid = state.grid
    m, N = grid.delay_steps, grid.n_steps
    P = state.Y.n_paths
    n = state.Y.values.shape[2]
    d = state.Z.values.shape[3]
    names = ("f_x", "f_xd", "f_q", "l_x", "l_xd", "l_q")
    shapes = ((n, n), (n, n), (n, n, d), (n,), (n,), (n, d))
    out = {k: np.empty((P, N + 1) + s) for k, s in zip(names, shapes)}
    for i in range(N + 1):
        q = state.Z.at(min(i, N - 1))
        part = model.partials(float(grid.time(i)), state.Y.at(i), state.Y.at(i - m), q)
        for k, s in zip(names, shapes):
            out[k][:, i] = np.asarray(part[k], dtype=float).reshape((P,) + s)
    return CoefficientPaths(**out)


def adjoint_coefficients(paths: CoefficientPaths, h0: float):
    """Drift, diffusion and advance transform of the adjoint for fixed ``h0``."""

    def advance(j, mj):
        return np.einsum("pkj,pk->pj", paths.f_xd[:, j], mj) + h0 * paths.l_xd[:, j]

    return advance


def solve_adjoint(paths: CoefficientPaths, state: BsdeSolution, driver: BrownianDriver,
                  h0: float, h1, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  basis: RegressionBasis | None = None) -> AdjointSolution:
    """Adjoint equation along a solved state.

        dm = [f_x^T m + E_t[f_xd|_{t+delta}^T m(t+delta)] + h0 (l_x + E_t[l_xd|_{t+delta}])] dt
             + [f_q^T m + h0 l_q] dW,
        m(0) = h1, m = 0 on (T, T + delta].

    The ``l_xd`` term only matters for running costs that see the delayed
    state; it is zero for both shipped models.
    """
    grid = state.grid
    N = grid.n_steps
    h1 = np.atleast_1d(np.asarray(h1, dtype=float))
    n = h1.shape[0]
    d = driver.dim

    def index(t):
        return min(grid.index_of(t), N - 1)

    def drift(t, x, A):
        i = index(t)
        return np.einsum("pkj,pk->pj", paths.f_x[:, i], x) + A + h0 * paths.l_x[:, i]

    def diffusion(t, x, A):
        i = index(t)
        return np.einsum("pkjl,pk->pjl", paths.f_q[:, i], x) + h0 * paths.l_q[:, i]

    advance = adjoint_coefficients(paths, h0)
    if not paths.depends_on_delay:
        advance = lambda j, v: np.zeros_like(v)  # noqa: E731
    linear = None
    if n == 1 and d == 1:
        linear = (paths.f_x[:, :N, 0, 0], h0 * paths.l_x[:, :N, 0],
                  paths.f_q[:, :N, 0, 0, 0], h0 * paths.l_q[:, :N, 0, 0])
    return solve_anticipated_sde(drift, diffusion, h1, driver, tol=tol, advance=advance,
                                 state=state.Y, basis=basis, max_iter=max_iter, h0=h0,
                                 linear=linear)
