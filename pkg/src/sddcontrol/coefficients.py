"""Model coefficients of a controlled SDDE and their backward reformulation.

Shapes, with ``P`` paths, state dimension ``n`` and noise dimension ``d``:

    x, x_d      (P, n)
    u, q        (P, n, d)
    b           (P, n)
    sigma       (P, n, d)
    costs       (P,)

The backward generator is ``f(t, x, x_d, q) = -b(t, x, x_d, sigma_inv(t, x, x_d, q))``
and the backward running cost is ``l(t, x, x_d, q) = l~(t, x, sigma_inv(...))``.
Partial derivatives not supplied in closed form are taken by central finite
differences with step ``1e-6 * (1 + |arg|)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InversionFailure
from .grid import TimeGrid

FD_REL_STEP = 1e-6
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50


def fd_partial(fn, args, which):
    """Central-difference derivative of ``fn(*args)`` w.r.t. ``args[which]``.

    Returns an array of shape ``(P, *out_shape, *arg_shape)``.
    """
    arg = np.asarray(args[which], dtype=float)
    P = arg.shape[0]
    arg_shape = arg.shape[1:]
    flat = arg.reshape(P, -1)
    cols = []
    for c in range(flat.shape[1]):
        h = FD_REL_STEP * (1.0 + np.abs(flat[:, c]))
        plus, minus = flat.copy(), flat.copy()
        plus[:, c] += h
        minus[:, c] -= h
        a_plus = list(args)
        a_minus = list(args)
        a_plus[which] = plus.reshape(arg.shape)
        a_minus[which] = minus.reshape(arg.shape)
        diff = np.asarray(fn(*a_plus)) - np.asarray(fn(*a_minus))
        hb = (2.0 * h).reshape((P,) + (1,) * (diff.ndim - 1))
        cols.append(diff / hb)
    out = np.stack(cols, axis=-1)
    return out.reshape(out.shape[:-1] + arg_shape)


@dataclass(frozen=True)
class InitialSegment:
    """Deterministic initial path sampled at grid indices ``-m..0``, shape ``(m + 1, n)``."""

    values: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("initial segment has non-finite samples")

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable, n: int = 1):
        ts = grid.times(-grid.delay_steps, 0)
        vals = np.array([np.broadcast_to(np.asarray(fn(t), dtype=float), (n,)) for t in ts])
        vals.flags.writeable = False
        return cls(vals)

    @classmethod
    def constant(cls, grid: TimeGrid, value, n: int = 1):
        return cls.from_function(grid, lambda t: value, n)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def endpoint(self) -> np.ndarray:
        """``eta(0)``: the target ``a`` of the initial constraint."""
        return self.values[-1]


@dataclass(frozen=True)
class CoefficientSet:
    """Drift, diffusion, costs and derived backward functions of one model.

    Only ``b``, ``sigma`` and ``phi`` are required. Everything else has a
    generic fallback (Newton inversion, finite differences, zero running cost).
    ``affine`` optionally describes scalar affine coefficients as
    ``((a0, a1, a2, a3), (b0, b1, b2, b3))`` so the compiled Euler kernel
    can be used.
    """

    b: Callable
    sigma: Callable
    phi: Callable
    n: int = 1
    d: int = 1
    running_cost: Optional[Callable] = None
    sigma_inv: Optional[Callable] = None
    lipschitz: float = 1.0
    alpha: float = 0.0
    # closed forms of the backward quantities (optional)
    generator: Optional[Callable] = None
    backward_cost: Optional[Callable] = None
    f_x: Optional[Callable] = None
    f_xd: Optional[Callable] = None
    f_q: Optional[Callable] = None
    l_x: Optional[Callable] = None
    l_xd: Optional[Callable] = None
    l_q: Optional[Callable] = None
    phi_x: Optional[Callable] = None
    affine: Optional[tuple] = None
    name: str = "model"

    # -- inversion ---------------------------------------------------------
    def inverse(self, t, x, xd, q, step=None):
        """``u`` with ``sigma(t, x, xd, u) = q``; closed form when available."""
        if self.sigma_inv is not None:
            return np.asarray(self.sigma_inv(t, x, xd, q), dtype=float)
        return newton_inverse(self.sigma, t, x, xd, q, step=step)

    # -- backward functions ----------------------------------------------
    def f(self, t, x, xd, q):
        if self.generator is not None:
            return np.asarray(self.generator(t, x, xd, q), dtype=float)
        return -np.asarray(self.b(t, x, xd, self.inverse(t, x, xd, q)), dtype=float)

    def l(self, t, x, xd, q):
        if self.backward_cost is not None:
            return np.asarray(self.backward_cost(t, x, xd, q), dtype=float)
        if self.running_cost is None:
            return np.zeros(np.shape(x)[0])
        return np.asarray(self.running_cost(t, x, self.inverse(t, x, xd, q)), dtype=float)

    @property
    def has_running_cost(self) -> bool:
        return self.running_cost is not None or self.backward_cost is not None

    def partials(self, t, x, xd, q):
        """All first derivatives of ``f`` and ``l`` at ``(t, x, xd, q)``."""
        out = {}
        args = (t, x, xd, q)
        for key, closed, which in (("f_x", self.f_x, 1), ("f_xd", self.f_xd, 2), ("f_q", self.f_q, 3)):
            if closed is not None:
                out[key] = np.asarray(closed(*args), dtype=float)
            else:
                out[key] = fd_partial(lambda *a: self.f(*a), args, which)
        for key, closed, which in (("l_x", self.l_x, 1), ("l_xd", self.l_xd, 2), ("l_q", self.l_q, 3)):
            if closed is not None:
                out[key] = np.asarray(closed(*args), dtype=float)
            elif not self.has_running_cost:
                shape = np.shape(q) if which == 3 else np.shape(x)
                out[key] = np.zeros(shape)
            else:
                out[key] = fd_partial(lambda *a: self.l(*a), args, which)
        return out

    def terminal_gradient(self, xi):
        if self.phi_x is not None:
            return np.asarray(self.phi_x(xi), dtype=float)
        return fd_partial(self.phi, (xi,), 0)

    def check_inversion(self, n_probes: int = 100, seed: int = 0) -> float:
        """Max relative round-trip error of ``sigma_inv(sigma(u))`` on random probes."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 1)
        x = rng.standard_normal((n_probes, self.n))
        xd = rng.standard_normal((n_probes, self.n))
        u = rng.standard_normal((n_probes, self.n, self.d))
        back = self.inverse(t, x, xd, np.asarray(self.sigma(t, x, xd, u)))
        err = np.abs(back - u).reshape(n_probes, -1).max(axis=1)
        return float(np.max(err / (1.0 + np.abs(u).reshape(n_probes, -1).max(axis=1))))


def newton_inverse(sigma, t, x, xd, q, step=None):
    """Damped Newton solve of ``sigma(t, x, xd, u) = q`` per path, starting at ``u = 0``."""
    q = np.asarray(q, dtype=float)
    P = q.shape[0]
    shape = q.shape[1:]
    u = np.zeros_like(q)
    target = q.reshape(P, -1)
    scale = 1.0 + np.abs(target).max(axis=1)

    def resid(uu):
        return np.asarray(sigma(t, x, xd, uu), dtype=float).reshape(P, -1) - target

    r = resid(u)
    for _ in range(NEWTON_MAX_ITER):
        norm = np.abs(r).max(axis=1)
        if np.all(norm <= NEWTON_TOL * scale):
            return u
        J = fd_partial(lambda uu: sigma(t, x, xd, uu), (u,), 0).reshape(P, r.shape[1], r.shape[1])
        try:
            du = np.linalg.solve(J, -r[..., None])[..., 0].reshape(q.shape)
        except np.linalg.LinAlgError:
            break
        lam = np.ones(P)
        for _ in range(30):
            trial = u + lam.reshape((P,) + (1,) * len(shape)) * du
            r_new = resid(trial)
            worse = np.abs(r_new).max(axis=1) > norm
            if not worse.any():
                break
            lam = np.where(worse, lam * 0.5, lam)
        u, r = trial, r_new
    norm = np.abs(r).max(axis=1)
    bad = np.flatnonzero(~(norm <= NEWTON_TOL * scale))
    if bad.size:
        raise InversionFailure(
            f"sigma inversion did not converge on path {bad[0]}"
            + (f" at step {step}" if step is not None else ""),
            path=int(bad[0]), step=step,
        )
    return u


@dataclass(frozen=True)
class LipschitzReport:
    drift_ratio: float
    diffusion_ratio: float
    inversion_ratio: float
    violation: bool


def lipschitz_probe(coeffs: CoefficientSet, n_probes: int = 1000, seed: int = 0,
                    t_range=(0.0, 1.0)) -> LipschitzReport:
    """Empirical Lipschitz and inversion moduli on random argument pairs.

    Reports the largest ``|db| / (|dx| + |dy| + |du|)``, the same for sigma,
    and the smallest ``|dsigma| / |du|`` at fixed ``(t, x, x_d)``; flags a
    violation when that modulus drops below ``alpha / 2``.
    """
    if n_probes < 2:
        raise ValueError("need at least 2 probes")
    rng = np.random.default_rng(seed)
    n, d = coeffs.n, coeffs.d
    t = rng.uniform(*t_range, size=n_probes)
    x1, x2, y1, y2 = (rng.standard_normal((n_probes, n)) for _ in range(4))
    u1, u2 = (rng.standard_normal((n_probes, n, d)) for _ in range(2))

    def norm(a):
        return np.sqrt((np.asarray(a).reshape(n_probes, -1) ** 2).sum(axis=1))

    ratios = []
    for fn in (coeffs.b, coeffs.sigma):
        # coefficient functions are vectorised over paths at one time value
        diff = np.empty(n_probes)
        for k in range(n_probes):
            a = np.asarray(fn(t[k], x1[k:k + 1], y1[k:k + 1], u1[k:k + 1]), dtype=float)
            b = np.asarray(fn(t[k], x2[k:k + 1], y2[k:k + 1], u2[k:k + 1]), dtype=float)
            diff[k] = np.sqrt(((a - b) ** 2).sum())
        denom = norm(x1 - x2) + norm(y1 - y2) + norm(u1 - u2)
        ratios.append(float(np.max(diff / denom)))
    inv = np.empty(n_probes)
    for k in range(n_probes):
        a = np.asarray(coeffs.sigma(t[k], x1[k:k + 1], y1[k:k + 1], u1[k:k + 1]), dtype=float)
        b = np.asarray(coeffs.sigma(t[k], x1[k:k + 1], y1[k:k + 1], u2[k:k + 1]), dtype=float)
        inv[k] = np.sqrt(((a - b) ** 2).sum()) / np.sqrt(((u1[k] - u2[k]) ** 2).sum())
    min_inv = float(inv.min())
    violation = bool(min_inv < coeffs.alpha / 2 or min_inv == 0.0)
    return LipschitzReport(ratios[0], ratios[1], min_inv, violation)
