"""Numerical checks of the first-order conditions: duality, variational inequality, complementarity."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .anticipated import AdjointSolution
from .errors import DegenerateMultipliers, EmptyConstraintSet, ShapeMismatch
from .problem import CoefficientPaths
from .sets import BOUNDARY_RTOL, ConvexSet
from .variational import VariationalSolution

DEFAULT_PROBES = 20


def mc_standard_error(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def _dot(a, b):
    P = a.shape[0]
    return np.sum(a.reshape(P, -1) * b.reshape(P, -1), axis=1)


@dataclass(frozen=True)
class DualityReport:
    lhs: float
    delta1: float
    delta2: float
    residual: float
    scale: float

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.scale if self.scale > 0 else abs(self.residual)


def duality_report(variational: VariationalSolution, adjoint: AdjointSolution,
                   paths: CoefficientPaths) -> DualityReport:
    """Left-point quadrature of both sides of the duality identity.

    ``lhs = E[<m(T), X_hat(T)> - <m(0), X_hat(0)>]``,
    ``delta1 = E sum_i [<F_{i+m}^T m_{i+m}, X_hat_i> - <F_i^T m_i, X_hat_{i-m}>] dt`` with
    ``F = f_xd`` (zero past ``T``), ``delta2 = h0 E sum_i [<l_x, X_hat_i> + <l_q, q_hat_i>] dt``.
    """
    grid = adjoint.grid
    m, N = grid.delay_steps, grid.n_steps
    Xh, qh, mm = variational.X_hat, variational.q_hat, adjoint.m
    if Xh.n_paths != mm.n_paths or Xh.last_index != N or mm.last_index != N + m:
        raise ShapeMismatch("variational and adjoint solutions do not share a grid")
    dt = grid.dt
    lhs = float(np.mean(_dot(mm.at(N), Xh.at(N)) - _dot(mm.at(0), Xh.at(0))))

    def fxd_t_m(j):
        if j > N:
            return np.zeros_like(mm.at(0))
        return np.einsum("pkj,pk->pj", paths.f_xd[:, j], mm.at(j))

    d1 = np.zeros(Xh.n_paths)
    d2 = np.zeros(Xh.n_paths)
    scale = np.zeros(Xh.n_paths)
    for i in range(N):
        d1 += (_dot(fxd_t_m(i + m), Xh.at(i)) - _dot(fxd_t_m(i), Xh.at(i - m))) * dt
        d2 += (_dot(paths.l_x[:, i], Xh.at(i)) + _dot(paths.l_q[:, i], qh.at(i))) * dt
        scale += np.linalg.norm(mm.at(i).reshape(mm.n_paths, -1), axis=1) \
            * np.linalg.norm(Xh.at(i).reshape(Xh.n_paths, -1), axis=1) * dt
    delta1 = float(np.mean(d1))
    delta2 = float(adjoint.h0 * np.mean(d2))
    return DualityReport(lhs, delta1, delta2, lhs - delta1 - delta2, float(np.mean(scale)))


def _check_multipliers(h0, h1):
    h1 = np.atleast_1d(np.asarray(h1, dtype=float))
    if h0 == 0 and not np.any(h1):
        raise DegenerateMultipliers("h0 = 0 and h1 = 0")
    if h0 < 0:
        raise ValueError("h0 must be non-negative")
    return h1


def variational_inequality(xi, xi_star, h0: float, h1, variational: VariationalSolution,
                           paths: CoefficientPaths | None, phi_x) -> float:
    """Sample value of ``<h1, X_hat(0)> + h0 E[<phi_x(xi*), xi - xi*> + int <l_x, X_hat> + <l_q, q_hat> dt]``."""
    h1 = _check_multipliers(h0, h1)
    Xh, qh = variational.X_hat, variational.q_hat
    x0 = Xh.at(0).mean(axis=0)
    dxi = xi.values - xi_star.values
    val = float(h1 @ x0) + h0 * float(np.mean(_dot(np.asarray(phi_x(xi_star.values)), dxi)))
    if paths is not None and (np.any(paths.l_x) or np.any(paths.l_q)):
        dt = variational.bsde.grid.dt
        run = np.zeros(Xh.n_paths)
        for i in range(qh.values.shape[1]):
            run += (_dot(paths.l_x[:, i], Xh.at(i)) + _dot(paths.l_q[:, i], qh.at(i))) * dt
        val += h0 * float(np.mean(run))
    return val


@dataclass(frozen=True)
class MpResidualReport:
    g: np.ndarray
    boundary_mask: np.ndarray
    interior_violation: float
    boundary_violation: float
    standard_error: float
    n_boundary: int
    weak_interior: float = float("nan")
    weak_boundary: float = float("nan")

    def summary(self) -> dict:
        return {
            "interior_violation": self.interior_violation,
            "boundary_violation": self.boundary_violation,
            "standard_error": self.standard_error,
            "n_boundary": self.n_boundary,
            "n_interior": int(self.boundary_mask.size - self.n_boundary),
            "weak_interior": self.weak_interior,
            "weak_boundary": self.weak_boundary,
        }


def _scaled_mean(x, weight, se: float) -> float:
    """``mean(x)`` in units of ``se * rms(weight)``."""
    denom = se * float(np.sqrt(np.mean(np.square(weight))))
    mean = float(np.mean(x))
    if denom == 0.0:
        return 0.0 if mean == 0.0 else float(np.copysign(np.inf, mean))
    return mean / denom


def hermite_test_functions(driver, degree: int = 3) -> np.ndarray:
    """Probabilists' Hermite polynomials of the normalized ``W(T)`` and ``W(T - delta)``, columns ``(P, k)``."""
    grid = driver.grid
    N, m = grid.n_steps, grid.delay_steps
    cols = [np.ones(driver.n_paths)]
    for j, t in ((N, grid.horizon), (N - m, grid.horizon - grid.delay)):
        if t <= 0:
            continue
        w = driver.W(j) / np.sqrt(t)
        for k in range(w.shape[1]):
            he = np.polynomial.hermite_e.hermevander(w[:, k], degree)
            cols.extend(he[:, 1:].T)
    return np.column_stack(cols)


def mp_residual(xi_star, adjoint: AdjointSolution, K: ConvexSet, phi_x,
                probes: int = DEFAULT_PROBES, seed: int = 0,
                boundary_rtol: float = BOUNDARY_RTOL, probe_scale: float = 1.0,
                test_functions: np.ndarray | None = None) -> MpResidualReport:
    """Per-path residual ``g = m(T) + h0 phi_x(xi*)`` split by the boundary of ``K``.

    ``interior_violation`` is ``max |g|`` off the boundary; ``boundary_violation``
    is the most negative ``<g, eta - xi*>`` over boundary paths, with probe points
    ``eta = P_K(xi* + probe_scale * Z)``, normalized by ``|eta - xi*|``.
    ``standard_error`` is the larger Monte Carlo standard error of the two
    terms of ``g``; it sets the resolution at which ``g = 0`` can be judged.

    The per-path values carry the regression error of the adjoint, which does
    not average out path by path. ``test_functions`` (columns ``h_k``) give the
    weak form instead: ``weak_interior`` is the largest ``|E[g h_k 1_int]|``
    in units of ``standard_error * rms(h_k)``, and ``weak_boundary`` the
    smallest ``E[<g, eta - xi*> h_k^2 1_bd]`` in units of
    ``standard_error * rms(|eta - xi*| h_k^2)``.
    """
    xs = xi_star.values
    P, n = xs.shape
    if K.kind == "box" and np.any(K.lo > K.hi):
        raise EmptyConstraintSet("K is empty")
    if not K.contains(xs, atol=1e-9).all():
        raise ValueError("xi* lies outside K")
    mT = adjoint.terminal.reshape(P, n)
    cost_part = adjoint.h0 * np.asarray(phi_x(xs), dtype=float).reshape(P, n)
    g = mT + cost_part
    se = max(max(mc_standard_error(mT[:, k]), mc_standard_error(cost_part[:, k])) for k in range(n))
    mask = K.on_boundary(xs, boundary_rtol)
    gn = np.linalg.norm(g, axis=1)
    interior = float(gn[~mask].max()) if (~mask).any() else 0.0
    H = None if test_functions is None else np.asarray(test_functions, dtype=float).reshape(P, -1)
    weak_int = weak_bd = float("nan")
    if H is not None:
        inside = ~mask
        weak_int = max(abs(_scaled_mean(g[:, k] * H[:, j] * inside, H[:, j] * inside, se))
                       for k in range(n) for j in range(H.shape[1]))
    worst = 0.0
    if mask.any():
        rng = np.random.default_rng(seed)
        xb, gb = xs[mask], g[mask]
        weak_bd = float("inf") if H is not None else weak_bd
        for _ in range(probes):
            eta = K.project(xb + probe_scale * rng.standard_normal(xb.shape))
            step = eta - xb
            norm = np.linalg.norm(step, axis=1)
            ok = norm > 0
            if ok.any():
                worst = min(worst, float(np.min(_dot(gb[ok], step[ok]) / norm[ok])))
            if H is not None:
                inner = np.zeros(P)
                inner[mask] = _dot(gb, step)
                size = np.zeros(P)
                size[mask] = norm
                weak_bd = min(weak_bd, min(_scaled_mean(inner * H[:, j] ** 2, size * H[:, j] ** 2, se)
                                           for j in range(H.shape[1])))
    return MpResidualReport(g, mask, interior, worst, se, int(mask.sum()), weak_int, weak_bd)


def write_report(path, items: dict) -> None:
    """Key-value text report, one ``key = value`` per line, keys in insertion order."""
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, float):
                v = repr(v)
            fh.write(f"{k} = {v}\n")


def write_csv(path, columns: dict) -> None:
    """Columns of equal length to a CSV with a header row."""
    keys = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def report_dict(obj) -> dict:
    return {k: v for k, v in asdict(obj).items() if not isinstance(v, np.ndarray)}
