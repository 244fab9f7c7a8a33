"""Reusable experiment pieces shared by the command line and the test suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import DEFAULT_TOL, TerminalControl
from .coefficients import CoefficientSet, InitialSegment
from .grid import BrownianDriver, PathEnsemble, make_grid, sample_brownian
from .models import LqParams, RamseyParams, ramsey_deterministic_policy
from .problem import linearize, solve_adjoint, solve_state
from .regression import RegressionBasis, StepRegressor
from .sdde import solve_sdde
from .variational import solve_variational
from .verify import DualityReport, duality_report

# delayed LQ instance used for duality checks: every adjoint term is active
DUALITY_LQ = LqParams(A1=0.1, A2=0.5, A3=0.3, B3=1.0)


def open_loop_control(fn, driver: BrownianDriver) -> PathEnsemble:
    """Deterministic control ``u(t_i) = fn(t_i)`` broadcast over paths, shape ``(P, N, 1, 1)``."""
    grid = driver.grid
    t = grid.times(0, grid.n_steps - 1)
    vals = np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape)
    u = np.broadcast_to(vals[None, :, None, None], (driver.n_paths, grid.n_steps, 1, 1)).copy()
    return PathEnsemble(u, 0, grid.n_steps - 1)


def polynomial_probe(driver: BrownianDriver, rng: np.random.Generator, degree: int = 2,
                     scale: float = 0.5) -> np.ndarray:
    """Random polynomial ``sum_k c_k (W_T / sqrt(T))^k`` per path, shape ``(P, 1)``.

    Coefficients are ``N(0, scale^2)``. Probes in the span of the regression
    basis keep the product of the two projection errors (adjoint and
    variational process) out of the duality residual.
    """
    grid = driver.grid
    w = driver.W(grid.n_steps)[:, 0] / np.sqrt(grid.horizon)
    coef = scale * rng.standard_normal(degree + 1)
    return np.polynomial.polynomial.polyval(w, coef)[:, None]


@dataclass(frozen=True)
class DualityLevel:
    n_steps: int
    n_paths: int
    reports: tuple

    @staticmethod
    def _rms(values) -> float:
        return float(np.sqrt(np.mean(np.square(values))))

    @property
    def delta1(self) -> float:
        """RMS of ``delta1`` over the probes."""
        return self._rms([r.delta1 for r in self.reports])

    @property
    def residual(self) -> float:
        """RMS of ``lhs - delta1 - delta2`` over the probes."""
        return self._rms([r.residual for r in self.reports])

    @property
    def scale(self) -> float:
        return self._rms([r.scale for r in self.reports])

    @property
    def relative_residual(self) -> float:
        return self.residual / self.scale


def duality_level(model: CoefficientSet, T: float, delta: float, N: int, P: int, seed: int,
                  probe_seed: int = 0, n_probes: int = 4, basis: RegressionBasis | None = None,
                  h0: float = 1.0, h1=0.7, x0: float = 1.0,
                  tol: float = DEFAULT_TOL) -> DualityLevel:
    """Duality reports at one resolution, one per random probe.

    The reference terminal value is ``xi* = x0 + 0.3 W_T``; each perturbation
    ``xi - xi*`` is a random quadratic in ``W_T / sqrt(T)`` drawn from
    ``probe_seed``, so the probes are the same functionals of the Brownian
    path at every level. A single signed residual can cancel by chance;
    the RMS over several probes shrinks smoothly with the resolution.
    """
    basis = basis or RegressionBasis()
    grid = make_grid(T, delta, N)
    driver = sample_brownian(grid, P, 1, seed)
    WT = driver.W(N)
    xs = TerminalControl(x0 + 0.3 * WT)
    eta = InitialSegment.constant(grid, x0)
    reg = StepRegressor(driver, basis)
    st = solve_state(model, xs, eta, driver, tol=tol, regressor=reg)
    paths = linearize(model, st)
    adj = solve_adjoint(paths, st, driver, h0=h0, h1=np.atleast_1d(h1), tol=tol, basis=basis)
    rng = np.random.default_rng(probe_seed)
    reports = []
    for _ in range(n_probes):
        xi = TerminalControl(xs.values + polynomial_probe(driver, rng))
        var = solve_variational(xi, xs, paths, driver, tol=tol, regressor=reg)
        reports.append(duality_report(var, adj, paths))
    return DualityLevel(N, P, tuple(reports))


def duality_sweep(model: CoefficientSet, T: float, delta: float, N0: int, P0: int, levels: int,
                  seed: int, step_factor: int = 2, path_factor: int = 4, n_seeds: int = 1,
                  **kw) -> list[DualityLevel]:
    """``levels`` resolutions, multiplying ``N`` by ``step_factor`` and paths by ``path_factor``.

    Each level pools the probe reports of ``n_seeds`` independent drivers
    (seeds ``seed .. seed + n_seeds - 1``, the same at every level).
    """
    if levels < 1 or n_seeds < 1:
        raise ValueError("need at least one level and one seed")
    out = []
    for k in range(levels):
        N, P = N0 * step_factor ** k, P0 * path_factor ** k
        reports = []
        for s in range(n_seeds):
            reports.extend(duality_level(model, T, delta, N, P, seed + s, **kw).reports)
        out.append(DualityLevel(N, P, tuple(reports)))
    return out


def ramsey_start(p: RamseyParams, eta: InitialSegment, driver: BrownianDriver,
                 model: CoefficientSet, scale: float = 1.0) -> TerminalControl:
    """Terminal wealth of the deterministic consumption plan, used as an optimizer start.

    For ``sigma0 != 0`` the plan still comes from the ``sigma0 = 0`` formula.
    """
    policy = ramsey_deterministic_policy(
        RamseyParams(K=p.K, y=p.y, sigma0=0.0, sigma1=p.sigma1, r=p.r, gamma=p.gamma, Q=p.Q),
        driver.grid)
    c = policy.consumption
    u = open_loop_control(lambda t: scale * c, driver)
    X = solve_sdde(model, eta, u, driver)
    return TerminalControl(X.at(driver.grid.n_steps))


@dataclass(frozen=True)
class RoundTrip:
    rms_error: float
    tolerance: float     # Picard tolerance plus the martingale representation residual
    initial_gap: float   # |Y(0) - eta(0)|, the constraint gap of the state

    @property
    def ratio(self) -> float:
        return self.rms_error / self.tolerance


def recovery_round_trip(model: CoefficientSet, eta: InitialSegment, state, xi: TerminalControl,
                        driver: BrownianDriver, tol: float = DEFAULT_TOL) -> RoundTrip:
    """Recover ``u*`` from ``(X*, q*)``, simulate forward and compare ``X(T)`` with ``xi*``.

    The forward run starts from the state's own initial segment (``eta`` on
    ``[-delta, 0)`` and the solved ``Y(0)``), so a remaining constraint gap
    does not enter the comparison; it is reported separately. The backward
    scheme matches ``Y_{i+1}`` only up to the part not spanned by
    ``E_i[Y_{i+1}] + Z_i dW_i``; that representation residual is added to the
    Picard tolerance to form the comparison scale.
    """
    from .optimize import recover_control

    m, N = driver.grid.delay_steps, driver.grid.n_steps
    y0 = state.initial_value
    seg = InitialSegment(np.vstack([eta.values[:m], y0[None, :]]))
    u = recover_control(state, model)
    X = solve_sdde(model, seg, u, driver)
    err = X.at(N) - xi.values
    rms = float(np.sqrt(np.mean(np.sum(err * err, axis=1))))
    gap = float(np.linalg.norm(y0 - eta.endpoint))
    return RoundTrip(rms, tol + state.representation_residual, gap)
