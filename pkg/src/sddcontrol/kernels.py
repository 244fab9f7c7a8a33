"""Backend selection for the hot Euler sweeps.

The compiled extension is used when it imports; otherwise (or when
``SDDCONTROL_PURE_PYTHON=1``) the numpy fallback is used. Both backends give
identical results. Paths are split into contiguous blocks that may run on a
thread pool; each path is independent, so the block layout never changes the
output.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("SDDCONTROL_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled
DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def _blocks(n_paths, threads):
    edges = np.linspace(0, n_paths, min(threads, n_paths) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run(name, args, n_paths, backend=None, threads=None):
    mod = BACKENDS[backend or DEFAULT_BACKEND]
    fn = getattr(mod, name)
    blocks = _blocks(n_paths, threads or _threads)
    if len(blocks) == 1:
        fn(*args, *blocks[0])
        return
    with ThreadPoolExecutor(len(blocks)) as pool:
        list(pool.map(lambda blk: fn(*args, *blk), blocks))


def affine_sdde_sweep(X, u, dW, dt, m, drift, diffusion, backend=None, threads=None):
    """Euler steps of ``dX = (a0 + a1 x + a2 x_d + a3 u) dt + (b0 + ...) dW`` in place.

    ``X`` has shape ``(P, m + N + 1)`` with the initial segment already in the
    first ``m + 1`` columns.
    """
    args = (X, u, dW, float(dt), int(m), *map(float, drift), *map(float, diffusion))
    _run("affine_sdde_sweep", args, X.shape[0], backend, threads)


def linear_sweep(y, a, adv, c, e, g, dW, dt, backend=None, threads=None):
    """Euler steps of ``dy = (a y + adv + c) dt + (e y + g) dW`` in place, column 0 given."""
    arrs = [np.ascontiguousarray(x, dtype=float) for x in (a, adv, c, e, g, dW)]
    _run("linear_sweep", (y, *arrs, float(dt)), y.shape[0], backend, threads)
