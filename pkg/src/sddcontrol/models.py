"""Preset models: delayed linear-quadratic control and a delayed production-consumption problem.

Both are scalar (``n = d = 1``).

Linear-quadratic
    dX = (A1 X + A2 X(t - delta) + A3 u) dt + (B1 X + B2 X(t - delta) + B3 u) dW,
    J = 1/2 E[X(T)^2].
Substituting ``u = (q - B1 x - B2 x_d) / B3`` gives the backward generator
``f = Ab1 x + Ab2 x_d + Ab3 q`` with

    Ab1 = A3 B1 / B3 - A1,   Ab2 = A3 B2 / B3 - A2,   Ab3 = -A3 / B3.

Production-consumption
    dX = (K y X(t - delta) - c) dt + (s0 X(t - delta) + s1 c) dW,
utility ``E[int e^{-rt} c^gamma / gamma dt + X(T)]`` maximized, i.e. the
negated functional minimized, so ``phi(x) = -x``. In backward form
``c = (q - s0 x_d) / s1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bsde import TerminalControl
from .coefficients import CoefficientSet
from .errors import DegenerateDiffusion, DelayPresent
from .grid import BrownianDriver
from .sets import ConvexSet

UTILITY_DERIVATIVE_CAP = 1e6


def _const(value, extra=()):
    def fn(t, x, xd, q):
        P = np.shape(x)[0]
        return np.full((P,) + extra, value, dtype=float)
    return fn


@dataclass(frozen=True)
class LqParams:
    A1: float = 0.0
    A2: float = 0.0
    A3: float = 0.0
    B1: float = 0.0
    B2: float = 0.0
    B3: float = 1.0

    @property
    def Ab1(self) -> float:
        return self.A3 * self.B1 / self.B3 - self.A1

    @property
    def Ab2(self) -> float:
        return self.A3 * self.B2 / self.B3 - self.A2

    @property
    def Ab3(self) -> float:
        return -self.A3 / self.B3

    @property
    def derived(self) -> tuple:
        return (self.Ab1, self.Ab2, self.Ab3)


def lq_model(p: LqParams) -> CoefficientSet:
    if p.B3 == 0:
        raise DegenerateDiffusion("B3 = 0: the control does not enter the diffusion")
    Ab1, Ab2, Ab3 = p.derived

    def b(t, x, xd, u):
        return p.A1 * x + p.A2 * xd + p.A3 * u[..., 0]

    def sigma(t, x, xd, u):
        return (p.B1 * x + p.B2 * xd)[..., None] + p.B3 * u

    def sigma_inv(t, x, xd, q):
        return (q - (p.B1 * x + p.B2 * xd)[..., None]) / p.B3

    def generator(t, x, xd, q):
        return Ab1 * x + Ab2 * xd + Ab3 * q[..., 0]

    return CoefficientSet(
        b=b, sigma=sigma, sigma_inv=sigma_inv, generator=generator,
        phi=lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        phi_x=lambda x: np.asarray(x, dtype=float),
        f_x=_const(Ab1, (1, 1)), f_xd=_const(Ab2, (1, 1)),
        f_q=_const(Ab3, (1, 1, 1)),
        lipschitz=abs(p.A1) + abs(p.A2) + abs(p.A3) + abs(p.B1) + abs(p.B2) + abs(p.B3),
        alpha=abs(p.B3),
        affine=((0.0, p.A1, p.A2, p.A3), (0.0, p.B1, p.B2, p.B3)),
        name="lq",
    )


def lq_gamma(p: LqParams, T: float, driver: BrownianDriver) -> np.ndarray:
    """``Gamma = exp(Ab3 W_T + (Ab1 - Ab3^2 / 2) T)`` per path; ``X(0) = E[Gamma xi]`` without delay."""
    W_T = driver.W(driver.grid.n_steps)[:, 0]
    return np.exp(p.Ab3 * W_T + (p.Ab1 - 0.5 * p.Ab3 ** 2) * T)


def lq_closed_form_oracle(a: float, p: LqParams, T: float, driver: BrownianDriver,
                          moment: str = "exact") -> TerminalControl:
    """Minimizer of ``1/2 E[xi^2]`` subject to ``E[Gamma xi] = a``: ``xi = a Gamma / E[Gamma^2]``.

    ``moment="exact"`` uses ``E[Gamma^2] = exp((2 Ab1 + Ab3^2) T)``;
    ``moment="sample"`` uses the sample mean over the driver's paths, which
    is the exact minimizer of the sampled problem.
    """
    if p.Ab2 != 0:
        raise DelayPresent("closed form needs Ab2 = 0")
    gamma = lq_gamma(p, T, driver)
    if moment == "exact":
        m2 = np.exp((2 * p.Ab1 + p.Ab3 ** 2) * T)
    elif moment == "sample":
        m2 = float(np.mean(gamma ** 2))
    else:
        raise ValueError(f"unknown moment {moment!r}")
    return TerminalControl(a * gamma / m2)


@dataclass(frozen=True)
class RamseyParams:
    K: float = 0.5
    y: float = 1.0
    sigma0: float = 0.0
    sigma1: float = 1.0
    r: float = 0.05
    gamma: float = 0.5
    Q: ConvexSet = field(default_factory=lambda: ConvexSet.box(0.0, 2.0))
    cap: float = UTILITY_DERIVATIVE_CAP


def ramsey_model(p: RamseyParams) -> CoefficientSet:
    if p.sigma1 == 0:
        raise DegenerateDiffusion("sigma1 = 0: consumption does not enter the diffusion")
    if not 0 < p.gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    Ky, s0, s1, g = p.K * p.y, p.sigma0, p.sigma1, p.gamma

    def b(t, x, xd, u):
        return Ky * xd - u[..., 0]

    def sigma(t, x, xd, u):
        return (s0 * xd)[..., None] + s1 * u

    def sigma_inv(t, x, xd, q):
        return (q - (s0 * xd)[..., None]) / s1

    def consumption(xd, q):
        return (q[..., 0] - s0 * xd) / s1

    def utility_slope(t, c):
        # d/dc of e^{-rt} c^g / g, zero for c <= 0, capped near 0
        pos = c > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(pos, np.exp(-p.r * t) * np.where(pos, c, 1.0) ** (g - 1.0), 0.0)
        if np.any(slope > p.cap):
            warnings.warn(f"utility derivative capped at {p.cap:g}", RuntimeWarning, stacklevel=3)
            slope = np.minimum(slope, p.cap)
        return slope

    def running_cost(t, x, u):
        c = np.maximum(u[..., 0, 0], 0.0)
        return -np.exp(-p.r * t) * c ** g / g

    def backward_cost(t, x, xd, q):
        c = np.maximum(consumption(xd, q)[..., 0], 0.0)
        return -np.exp(-p.r * t) * c ** g / g

    def l_q(t, x, xd, q):
        return (-utility_slope(t, consumption(xd, q)) / s1)[..., None]

    def l_xd(t, x, xd, q):
        return utility_slope(t, consumption(xd, q)) * s0 / s1

    def generator(t, x, xd, q):
        return -Ky * xd + consumption(xd, q)

    return CoefficientSet(
        b=b, sigma=sigma, sigma_inv=sigma_inv, generator=generator,
        running_cost=running_cost, backward_cost=backward_cost,
        phi=lambda x: -np.sum(np.asarray(x), axis=-1),
        phi_x=lambda x: -np.ones_like(np.asarray(x, dtype=float)),
        f_x=_const(0.0, (1, 1)), f_xd=_const(-Ky - s0 / s1, (1, 1)),
        f_q=_const(1.0 / s1, (1, 1, 1)),
        l_x=lambda t, x, xd, q: np.zeros(np.shape(x)),
        l_xd=l_xd, l_q=l_q,
        lipschitz=1.0 + abs(Ky) + abs(s0) + abs(s1), alpha=abs(s1),
        affine=((0.0, 0.0, Ky, -1.0), (0.0, 0.0, s0, s1)),
        name="ramsey",
    )


@dataclass(frozen=True)
class RamseyPolicy:
    m: np.ndarray            # normalized adjoint m(t_i) / h0, i = 0..N
    consumption: np.ndarray  # c*(t_i), i = 0..N-1

    @property
    def multiplier_ratio(self) -> float:
        """``h1 / h0 = m(0) / h0``."""
        return float(self.m[0])


def ramsey_deterministic_policy(p: RamseyParams, grid) -> RamseyPolicy:
    """Optimal consumption of the noiseless-wealth instance (``sigma0 = 0``) with interior ``c``.

    With ``sigma0 = 0`` the adjoint has no diffusion at the optimum and the
    first-order condition ``e^{-rt} c^{gamma - 1} = m(t) / h0`` can be solved
    backward on the grid: ``m_N = 1`` and

        m_i = m_{i+1} + K y m_{i+m} dt   (i + m < N),   m_i = m_{i+1}  otherwise,

    which is the Euler discretization used by the adjoint solver. The
    constraint set ``Q`` is ignored, so the result is the unconstrained
    stationary point.
    """
    if p.sigma0 != 0:
        raise ValueError("the deterministic policy needs sigma0 = 0")
    N, m, dt = grid.n_steps, grid.delay_steps, grid.dt
    Ky = p.K * p.y
    mm = np.ones(N + 1)
    for i in range(N - 1, -1, -1):
        mm[i] = mm[i + 1] + (Ky * mm[i + m] * dt if i + m < N else 0.0)
    t = grid.times(0, N - 1)
    c = (np.exp(-p.r * t) / mm[:N]) ** (1.0 / (1.0 - p.gamma))
    return RamseyPolicy(mm, c)
