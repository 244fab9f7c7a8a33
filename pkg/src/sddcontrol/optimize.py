"""Penalized projected-gradient solver for the terminal-control problem

    minimize J(xi)  over per-path xi in K,  subject to  X^xi(0) = a,

and recovery of the forward control from the optimal state.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .anticipated import AdjointSolution
from .bsde import DEFAULT_TOL, BsdeSolution, TerminalControl
from .coefficients import CoefficientSet, InitialSegment
from .errors import InfeasibleStall, InversionFailure
from .grid import BrownianDriver, PathEnsemble
from .problem import cost, linearize, solve_adjoint, solve_state
from .regression import Projector, RegressionBasis, StepRegressor
from .sets import ConvexSet

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iteration", "lambda", "objective", "constraint_gap", "step_size", "grad_rms")
ABNORMAL_RATIO = 1e6


@dataclass(frozen=True)
class SolverOptions:
    lambda0: float = 1.0
    lambda_factor: float = 10.0
    n_stages: int = 4
    max_stages: int = 8
    grad_tol: float = 1e-6
    stage_grad_tol: float = 1e-3
    feas_tol: float = 1e-3
    max_inner: int = 200
    armijo: float = 1e-4
    max_halvings: int = 20
    ftol: float = 1e-12
    ftol_window: int = 3
    initial_step: float = 1.0
    stall_ratio: float = 0.9
    picard_tol: float = DEFAULT_TOL
    gradient_space: str = "full"
    basis: RegressionBasis = field(default_factory=RegressionBasis)


@dataclass
class SolveResult:
    xi: TerminalControl
    h0: float
    h1: np.ndarray
    state: BsdeSolution
    adjoint: AdjointSolution
    objective: float
    constraint_gap: float
    iterations: int
    history: list
    penalty: float
    abnormal: bool = False

    def write_history(self, path) -> None:
        write_history(path, self.history)


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


class _Evaluator:
    """Objective, state and gradient at a given ``xi`` for one penalty weight."""

    def __init__(self, model, eta, driver, a, opts):
        self.model, self.eta, self.driver, self.a, self.opts = model, eta, driver, a, opts
        self.reg = StepRegressor(driver, opts.basis)
        self.guess = None
        self._span = None
        if opts.gradient_space not in ("full", "terminal-span"):
            raise ValueError(f"unknown gradient_space {opts.gradient_space!r}")

    def span(self) -> Projector:
        # The discrete state reads xi only through the last-step regressions
        # of xi and xi * dW, so its exact gradient lies in this span.
        if self._span is None:
            N = self.driver.grid.n_steps
            base = self.reg.projector(N - 1).design
            dW = self.driver.increments[:, N - 1, :]
            cols = [base] + [base * dW[:, k:k + 1] for k in range(dW.shape[1])]
            self._span = Projector.from_design(np.hstack(cols))
        return self._span

    def state(self, xi):
        st = solve_state(self.model, xi, self.eta, self.driver, tol=self.opts.picard_tol,
                         regressor=self.reg, initial_guess=self.guess)
        self.guess = st.Y.values
        return st

    def objective(self, xi, st, lam):
        J = cost(self.model, st, xi)
        gap = st.initial_value - self.a
        return J + lam * float(gap @ gap), J, float(np.linalg.norm(gap))

    def gradient(self, xi, st, lam):
        h1 = 2.0 * lam * (st.initial_value - self.a)
        paths = linearize(self.model, st)
        adj = solve_adjoint(paths, st, self.driver, 1.0, h1, tol=self.opts.picard_tol,
                            basis=self.opts.basis)
        P, n = xi.values.shape
        mT = adj.terminal.reshape(P, n)
        if self.opts.gradient_space == "terminal-span":
            mT = self.span().project(mT)
        g = mT + np.asarray(
            self.model.terminal_gradient(xi.values), dtype=float).reshape(P, n)
        return g, adj


def _rms(a):
    return float(np.sqrt(np.mean(np.sum(a * a, axis=1))))


def solve_problem_b(model: CoefficientSet, K: ConvexSet, a, eta: InitialSegment,
                    driver: BrownianDriver, opts: SolverOptions | None = None,
                    xi0: TerminalControl | None = None) -> SolveResult:
    """Quadratic-penalty projected gradient over a rising penalty schedule.

    Each stage minimizes ``J(xi) + lam |X^xi(0) - a|^2`` over ``K``. The
    per-path gradient is ``m(T) + phi_x(xi)`` with the adjoint solved for
    ``h0 = 1`` and ``h1 = 2 lam (X^xi(0) - a)``. Steps start from a
    Barzilai-Borwein guess and are halved until the Armijo condition holds.

    With ``gradient_space="terminal-span"`` the adjoint part ``m(T)`` is
    projected onto the span of the last-step regression basis and its
    products with the last Brownian increment. The discrete state depends on
    ``xi`` only through that span, so directions outside it change neither
    ``X(0)`` nor the running cost. When ``phi`` is linear they are flat, and
    the unprojected gradient would push ``xi`` along them without bound.

    Raises:
        InfeasibleStall: the constraint gap stopped shrinking across two stages,
            or it is still above ``feas_tol`` after ``max_stages``.
    """
    opts = opts or SolverOptions()
    a = np.atleast_1d(np.asarray(a, dtype=float))
    P = driver.n_paths
    n = a.shape[0]
    ev = _Evaluator(model, eta, driver, a, opts)
    xi = TerminalControl(K.project(xi0.values if xi0 is not None else np.zeros((P, n))))

    history = []
    stage_gaps = []
    lam = opts.lambda0
    it = 0
    stage = 0
    st = ev.state(xi)
    while True:
        stage += 1
        phi, J, gap = ev.objective(xi, st, lam)
        g, adj = ev.gradient(xi, st, lam)
        step = opts.initial_step
        prev = None
        n_small = 0
        # intermediate stages only need to move the penalty path along
        tol = opts.grad_tol if stage >= opts.n_stages else max(opts.grad_tol, opts.stage_grad_tol)
        for _ in range(opts.max_inner):
            pg = xi.values - K.project(xi.values - g)
            grad_rms = _rms(pg)
            it += 1
            history.append((it, lam, phi, gap, step, grad_rms))
            if grad_rms <= tol:
                break
            if prev is not None:
                s = xi.values - prev[0]
                y = g - prev[1]
                sy = float(np.mean(np.sum(s * y, axis=1)))
                if sy > 0:
                    step = float(np.mean(np.sum(s * s, axis=1))) / sy
            accepted = False
            for _ in range(opts.max_halvings):
                cand = TerminalControl(K.project(xi.values - step * g))
                d = cand.values - xi.values
                st_c = ev.state(cand)
                phi_c, J_c, gap_c = ev.objective(cand, st_c, lam)
                if phi_c <= phi + opts.armijo * float(np.mean(np.sum(g * d, axis=1))):
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                log.info("line search failed at iteration %d; ending stage", it)
                break
            prev = (xi.values, g)
            small = phi - phi_c <= opts.ftol * (1.0 + abs(phi))
            n_small = n_small + 1 if small else 0
            xi, st, phi, J, gap = cand, st_c, phi_c, J_c, gap_c
            g, adj = ev.gradient(xi, st, lam)
            if n_small >= opts.ftol_window:
                log.info("objective stalled at iteration %d; ending stage", it)
                break
        stage_gaps.append(gap)
        log.info("stage %d lambda=%g gap=%.3e J=%.6g", stage, lam, gap, J)
        feasible = gap <= opts.feas_tol * (1.0 + np.linalg.norm(a))
        if stage >= opts.n_stages and feasible:
            break
        if not feasible and len(stage_gaps) >= 3 and all(
                stage_gaps[-k] > opts.stall_ratio * stage_gaps[-k - 1] for k in (1, 2)):
            raise InfeasibleStall(
                f"constraint gap stalled at {gap:.3g} over two penalty stages", history)
        if stage >= opts.max_stages:
            raise InfeasibleStall(
                f"constraint gap {gap:.3g} above tolerance after {stage} stages", history)
        lam *= opts.lambda_factor

    h1 = 2.0 * lam * (st.initial_value - a)
    norm = float(np.sqrt(1.0 + h1 @ h1))
    abnormal = bool(np.linalg.norm(h1) > ABNORMAL_RATIO)
    if abnormal:
        log.warning("constraint multiplier dominates the cost by more than %g", ABNORMAL_RATIO)
    return SolveResult(
        xi=xi, h0=1.0 / norm, h1=h1 / norm, state=st, adjoint=adj.scaled(1.0 / norm),
        objective=J, constraint_gap=gap, iterations=it, history=history, penalty=lam,
        abnormal=abnormal,
    )


def recover_control(state: BsdeSolution, model: CoefficientSet) -> PathEnsemble:
    """``u_i = sigma_inv(t_i, X_i, X_{i-m}, q_i)`` per path and step."""
    grid = state.grid
    m, N = grid.delay_steps, grid.n_steps
    q = state.Z.values
    u = np.empty_like(q)
    for i in range(N):
        u[:, i] = model.inverse(float(grid.time(i)), state.Y.at(i), state.Y.at(i - m),
                                q[:, i], step=i)
        if not np.isfinite(u[:, i]).all():
            bad = int(np.flatnonzero(~np.isfinite(u[:, i].reshape(u.shape[0], -1)).all(axis=1))[0])
            raise InversionFailure(f"non-finite control on path {bad} at step {i}", path=bad, step=i)
    return PathEnsemble(u, 0, N - 1)
