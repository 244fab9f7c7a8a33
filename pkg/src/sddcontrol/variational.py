"""Variational (linearized) equation, its difference-quotient diagnostic and the penalty functional."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import DEFAULT_TOL, BsdeSolution, TerminalControl, solve_delayed_bsde
from .coefficients import CoefficientSet, InitialSegment
from .errors import ShapeMismatch
from .grid import BrownianDriver, PathEnsemble
from .problem import CoefficientPaths, cost, solve_state
from .regression import StepRegressor


@dataclass(frozen=True)
class VariationalSolution:
    X_hat: PathEnsemble
    q_hat: PathEnsemble
    bsde: BsdeSolution


def linear_generator(paths: CoefficientPaths, grid):
    """``f(t, y, y_d, z) = f_x y + f_xd y_d + f_q z`` with coefficients frozen per step."""

    def f(t, y, yd, z):
        i = grid.index_of(t)
        return (np.einsum("pjk,pk->pj", paths.f_x[:, i], y)
                + np.einsum("pjk,pk->pj", paths.f_xd[:, i], yd)
                + np.einsum("pjkl,pkl->pj", paths.f_q[:, i], z))

    return f


def solve_variational(xi: TerminalControl, xi_star: TerminalControl, paths: CoefficientPaths,
                      driver: BrownianDriver, tol: float = DEFAULT_TOL,
                      regressor: StepRegressor | None = None) -> VariationalSolution:
    """Solve the linearized state equation with terminal value ``xi - xi*`` and zero initial segment."""
    if xi.values.shape != xi_star.values.shape:
        raise ShapeMismatch("xi and xi* differ in shape")
    grid = driver.grid
    n = xi.values.shape[1]
    zero = InitialSegment(np.zeros((grid.delay_steps + 1, n)))
    dxi = TerminalControl(xi.values - xi_star.values)
    sol = solve_delayed_bsde(linear_generator(paths, grid), dxi, zero, driver,
                             tol=tol, regressor=regressor)
    return VariationalSolution(sol.Y, sol.Z, sol)


@dataclass(frozen=True)
class VariationalGap:
    state_gap: float    # sup_t E|X~|^2
    control_gap: float  # E int |q~|^2 dt


def variational_gap(rho: float, xi: TerminalControl, xi_star: TerminalControl,
                    model: CoefficientSet, eta: InitialSegment, driver: BrownianDriver,
                    star: BsdeSolution, variational: VariationalSolution,
                    tol: float = DEFAULT_TOL, regressor: StepRegressor | None = None) -> VariationalGap:
    """Size of ``(X^rho - X*)/rho - X_hat`` for ``xi^rho = xi* + rho (xi - xi*)``."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    grid = driver.grid
    N = grid.n_steps
    sol = solve_state(model, xi_star.shifted(xi, rho), eta, driver, tol=tol, regressor=regressor)
    dX = (sol.Y.window(0, N) - star.Y.window(0, N)) / rho - variational.X_hat.window(0, N)
    dq = (sol.Z.values - star.Z.values) / rho - variational.q_hat.values
    P = dX.shape[0]
    sup = float(np.max(np.mean(np.sum(dX.reshape(P, N + 1, -1) ** 2, axis=2), axis=0)))
    integ = float(np.mean(np.sum(dq.reshape(P, N, -1) ** 2, axis=(1, 2))) * grid.dt)
    return VariationalGap(sup, integ)


@dataclass(frozen=True)
class PenaltyParams:
    eps: float
    xi_star: TerminalControl
    a: np.ndarray
    reference_cost: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    initial_gap: float     # |mean Y(0) - a|
    cost_excess: float     # J(xi) - J(xi*) + eps
    spread: float          # per-path std of Y(0)

    def __float__(self) -> float:
        return self.value


def penalty_value(xi: TerminalControl, params: PenaltyParams, model: CoefficientSet,
                  eta: InitialSegment, driver: BrownianDriver, tol: float = DEFAULT_TOL,
                  regressor: StepRegressor | None = None) -> PenaltyValue:
    """``F_eps(xi) = sqrt(|X(0) - a|^2 + max(0, J(xi) - J(xi*) + eps)^2)``.

    ``X(0)`` is the sample mean of the per-path ``Y(0)``.
    """
    sol = solve_state(model, xi, eta, driver, tol=tol, regressor=regressor)
    ref = params.reference_cost
    if ref is None:
        star = solve_state(model, params.xi_star, eta, driver, tol=tol, regressor=regressor)
        ref = cost(model, star, params.xi_star)
    gap = float(np.linalg.norm(sol.initial_value - params.a))
    excess = cost(model, sol, xi) - ref + params.eps
    value = float(np.hypot(gap, max(0.0, excess)))
    return PenaltyValue(value, gap, excess, float(np.max(sol.initial_spread)))
