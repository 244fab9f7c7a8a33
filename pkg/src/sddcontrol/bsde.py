"""Time-delayed BSDE solver.

Solves

    -dY = f(t, Y(t), Y(t - delta), Z(t)) dt - Z(t) dW,   Y(T) = xi,
     Y = phi on [-delta, 0)

by an explicit backward regression scheme wrapped in a Picard iteration on
the delayed slot. Given the previous iterate ``Y^k``, one backward sweep is

    Z_i     = E_i[(Y_{i+1} - E_i[Y_{i+1}]) dW_i] / dt
    Y_i     = E_i[Y_{i+1}] + f(t_i, E_i[Y_{i+1}], Y^k_{i-m}, Z_i) dt

with ``E_i`` the regression of :class:`~sddcontrol.regression.StepRegressor`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import InitialSegment
from .errors import PicardDivergence, ShapeMismatch
from .grid import BrownianDriver, PathEnsemble, TimeGrid
from .regression import RegressionBasis, StepRegressor

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class TerminalControl:
    """Per-path terminal values ``xi`` of shape ``(P, n)``."""

    values: np.ndarray
    in_set: bool | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def second_moment(self) -> float:
        return float(np.mean(np.sum(self.values ** 2, axis=1)))

    def shifted(self, other: TerminalControl, rho: float) -> TerminalControl:
        """``self + rho * (other - self)``."""
        return TerminalControl(self.values + rho * (other.values - self.values))


@dataclass(frozen=True)
class BsdeSolution:
    grid: TimeGrid
    Y: PathEnsemble
    Z: PathEnsemble
    picard_iterations: int
    picard_residual: float
    gaps: tuple = field(default=())
    representation_residual: float = 0.0

    @property
    def initial_value(self) -> np.ndarray:
        """Sample mean of ``Y(0)`` (deterministic in theory)."""
        return self.Y.at(0).mean(axis=0)

    @property
    def initial_spread(self) -> np.ndarray:
        return self.Y.at(0).std(axis=0)


def _rms(a):
    return float(np.sqrt(np.mean(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))))


def _check_divergence(gaps, max_iter):
    if not np.isfinite(gaps[-1]):
        raise PicardDivergence("Picard iterate became non-finite", gaps)
    if len(gaps) >= 4 and all(gaps[-k] > gaps[-k - 1] for k in (1, 2, 3)):
        raise PicardDivergence(
            f"Picard gap grew for 3 consecutive iterations ({gaps[-4]:.3g} -> {gaps[-1]:.3g})", gaps)
    if len(gaps) >= max_iter:
        raise PicardDivergence(f"Picard iteration hit max_iter={max_iter} (gap {gaps[-1]:.3g})", gaps)


def solve_delayed_bsde(f, xi: TerminalControl, phi_seg: InitialSegment, driver: BrownianDriver,
                       tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                       regressor: StepRegressor | None = None,
                       basis: RegressionBasis | None = None,
                       initial_guess: np.ndarray | None = None) -> BsdeSolution:
    """Solve the time-delayed BSDE on the driver's grid.

    Args:
        f: generator ``f(t, y, y_delayed, z)`` returning ``(P, n)``.
        xi: terminal values.
        phi_seg: prescribed values on ``[-delta, 0)`` (the sample at 0 is ignored).
        driver: Brownian increments; also the default regression features.
        tol: stop when the sup-in-time RMS gap between iterates is <= tol.
        regressor: reuse cached projections across calls.
        initial_guess: optional ``(P, m + N + 1, n)`` starting iterate.

    Raises:
        PicardDivergence: the gap grew three times in a row or max_iter was hit.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = driver.grid
    m, N, P = grid.delay_steps, grid.n_steps, driver.n_paths
    xi_v = xi.values
    n = xi_v.shape[1]
    d = driver.dim
    if xi_v.shape[0] != P:
        raise ShapeMismatch("terminal control and driver disagree on the number of paths")
    if phi_seg.values.shape != (m + 1, n):
        raise ShapeMismatch("initial segment does not match grid and dimension")
    reg = regressor or StepRegressor(driver, basis)
    dt = grid.dt
    dW = driver.increments

    if initial_guess is not None:
        Yk = np.array(initial_guess, dtype=float)
    else:
        Yk = np.empty((P, m + N + 1, n))
        Yk[:, m:] = xi_v[:, None, :]
    Yk[:, :m] = phi_seg.values[:m]

    gaps = []
    while True:
        Y = np.empty_like(Yk)
        Z = np.empty((P, N, n, d))
        Y[:, :m] = phi_seg.values[:m]
        Y[:, m + N] = xi_v
        mart = np.zeros((P, n))
        for i in range(N - 1, -1, -1):
            j = i + m
            y_next = Y[:, j + 1]
            cont = reg.project(i, y_next)
            # E_i[cont dW] = 0, so subtracting it leaves Z unbiased and removes
            # the O(1) part of Y_{i+1} from the noisy product
            innov = y_next - cont
            z = reg.project(i, (innov[:, :, None] * dW[:, i, None, :]).reshape(P, n * d))
            z = z.reshape(P, n, d) / dt
            t = float(grid.time(i))
            Y[:, j] = cont + np.asarray(f(t, cont, Yk[:, j - m], z), dtype=float).reshape(P, n) * dt
            Z[:, i] = z
            mart += y_next - cont - np.einsum("pjk,pk->pj", z, dW[:, i])
        gap = max(_rms(Y[:, m + i] - Yk[:, m + i]) for i in range(N + 1))
        gaps.append(gap)
        Yk = Y
        if gap <= tol:
            break
        _check_divergence(gaps, max_iter)

    return BsdeSolution(
        grid=grid,
        Y=PathEnsemble(Y, -m, N),
        Z=PathEnsemble(Z, 0, N - 1),
        picard_iterations=len(gaps),
        picard_residual=gaps[-1],
        gaps=tuple(gaps),
        representation_residual=_rms(mart),
    )


@dataclass(frozen=True)
class StabilityGap:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf") if self.lhs > 0 else 0.0


def bsde_stability_gap(sol: BsdeSolution, sol2: BsdeSolution,
                       xi: TerminalControl, xi2: TerminalControl) -> StabilityGap:
    """Sample ``E[sup|Y - Y'|^2 + 1/2 int |Z - Z'|^2]`` against ``E|xi - xi'|^2``."""
    if sol.Y.values.shape != sol2.Y.values.shape:
        raise ShapeMismatch("solutions live on different grids")
    N = sol.grid.n_steps
    dY = sol.Y.window(0, N) - sol2.Y.window(0, N)
    sup = np.max(np.sum(dY.reshape(dY.shape[0], dY.shape[1], -1) ** 2, axis=2), axis=1)
    dZ = sol.Z.values - sol2.Z.values
    zint = np.sum(dZ.reshape(dZ.shape[0], dZ.shape[1], -1) ** 2, axis=(1, 2))
    lhs = float(np.mean(sup + 0.5 * zint * sol.grid.dt))
    rhs = float(np.mean(np.sum((xi.values - xi2.values) ** 2, axis=1)))
    return StabilityGap(lhs, rhs)


def bsde_energy(sol: BsdeSolution, xi: TerminalControl, f0_sq_integral: float = 0.0) -> StabilityGap:
    """Sample a priori estimate: ``E[sup|Y|^2 + int |Z|^2]`` against ``E[|xi|^2 + int |f(t,0,0,0)|^2]``."""
    N = sol.grid.n_steps
    Y = sol.Y.window(0, N)
    sup = np.max(np.sum(Y.reshape(Y.shape[0], Y.shape[1], -1) ** 2, axis=2), axis=1)
    Z = sol.Z.values
    zint = np.sum(Z.reshape(Z.shape[0], Z.shape[1], -1) ** 2, axis=(1, 2)) * sol.grid.dt
    lhs = float(np.mean(sup + zint))
    rhs = xi.second_moment + float(f0_sq_integral)
    return StabilityGap(lhs, rhs)


