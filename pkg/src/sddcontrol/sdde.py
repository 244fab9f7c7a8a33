"""Euler-Maruyama for the controlled delay equation

    dX = b(t, X(t), X(t - delta), u) dt + sigma(t, X(t), X(t - delta), u) dW,
    X = eta on [-delta, 0].
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .coefficients import CoefficientSet, InitialSegment
from .errors import NonFiniteState, ShapeMismatch
from .grid import BrownianDriver, PathEnsemble


def _control_array(u, grid, n_paths, shape):
    if u is None:
        return np.zeros((n_paths, grid.n_steps) + shape)
    vals = u.values if isinstance(u, PathEnsemble) else np.asarray(u, dtype=float)
    first = u.first_index if isinstance(u, PathEnsemble) else 0
    if first != 0 or vals.shape[1] < grid.n_steps:
        raise ShapeMismatch("control must be defined on steps 0..N-1")
    vals = vals[:, :grid.n_steps]
    if vals.shape[0] != n_paths:
        raise ShapeMismatch("control and driver disagree on the number of paths")
    return vals.reshape((n_paths, grid.n_steps) + shape)


def solve_sdde(coeffs: CoefficientSet, eta: InitialSegment, u, driver: BrownianDriver,
               use_kernel: bool = True) -> PathEnsemble:
    """Simulate the state on grid indices ``-m..N``.

    Args:
        coeffs: model coefficients.
        eta: initial segment, copied verbatim onto ``[-delta, 0]``.
        u: control ensemble on steps ``0..N-1`` (``None`` for no control).
        driver: Brownian increments.
        use_kernel: use the compiled sweep for scalar affine models.

    Raises:
        NonFiniteState: a path left the finite range; ``step`` names the first bad step.
    """
    grid = driver.grid
    m, N, P = grid.delay_steps, grid.n_steps, driver.n_paths
    n, d = coeffs.n, coeffs.d
    if eta.values.shape != (m + 1, n):
        raise ShapeMismatch("initial segment does not match grid and state dimension")
    uu = _control_array(u, grid, P, (n, d))
    X = np.empty((P, m + N + 1, n))
    X[:, :m + 1] = eta.values

    if use_kernel and coeffs.affine is not None and n == 1 and d == 1:
        X2 = np.ascontiguousarray(X[..., 0])
        kernels.affine_sdde_sweep(X2, np.ascontiguousarray(uu[..., 0, 0]),
                                  np.ascontiguousarray(driver.increments[..., 0]),
                                  grid.dt, m, *coeffs.affine)
        X[..., 0] = X2
        bad = ~np.isfinite(X).reshape(P, m + N + 1, -1).all(axis=(0, 2))
        if bad.any():
            step = int(np.argmax(bad)) - m - 1
            raise NonFiniteState(f"state became non-finite at step {step}", step=step)
    else:
        dt = grid.dt
        dW = driver.increments
        for i in range(N):
            j = i + m
            t = float(grid.time(i))
            x, xd = X[:, j], X[:, j - m]
            drift = np.asarray(coeffs.b(t, x, xd, uu[:, i]), dtype=float).reshape(P, n)
            diff = np.asarray(coeffs.sigma(t, x, xd, uu[:, i]), dtype=float).reshape(P, n, d)
            X[:, j + 1] = x + drift * dt + np.einsum("pjk,pk->pj", diff, dW[:, i])
            if not np.isfinite(X[:, j + 1]).all():
                raise NonFiniteState(f"state became non-finite at step {i}", step=i)
    return PathEnsemble(X, -m, N)
