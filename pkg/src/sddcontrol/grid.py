"""Time grids, Brownian drivers and path containers.

Every solver in the package works on a uniform grid whose delay is an exact
number of steps, so a delayed (or advanced) argument is a plain index shift.
Grid index ``i`` is the time ``i * T / N``; indices run from ``-m`` to
``N + m`` where ``m = delta / dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonCommensurateDelay, ShapeMismatch

_DELAY_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    delay: float
    n_steps: int
    delay_steps: int

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def first_index(self) -> int:
        return -self.delay_steps

    @property
    def last_index(self) -> int:
        return self.n_steps + self.delay_steps

    def time(self, i):
        """Time of grid index ``i`` (scalar or array)."""
        return np.asarray(i, dtype=float) * self.horizon / self.n_steps

    def times(self, first: int, last: int) -> np.ndarray:
        return np.arange(first, last + 1) * self.horizon / self.n_steps

    def index_of(self, t: float) -> int:
        i = round(t * self.n_steps / self.horizon)
        if abs(self.time(i) - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a grid point")
        return int(i)


def make_grid(T: float, delta: float, N: int) -> TimeGrid:
    """Build the uniform grid on ``[-delta, T + delta]`` with ``N`` steps on ``[0, T]``.

    Raises:
        NonCommensurateDelay: if ``delta`` is not an integer multiple of ``T / N``.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if not delta > 0:
        raise ValueError("delay must be positive")
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    ratio = delta * N / T
    m = round(ratio)
    if m < 1 or abs(ratio - m) > _DELAY_RTOL * max(ratio, 1.0):
        raise NonCommensurateDelay(
            f"NonCommensurateDelay: delay {delta} is not an integer multiple of dt={T / N} "
            f"(ratio {ratio:.12g})"
        )
    return TimeGrid(float(T), float(delta), N, int(m))


@dataclass(frozen=True)
class PathEnsemble:
    """Monte Carlo samples of a process on the grid indices ``first..last``.

    ``values`` has shape ``(n_paths, last - first + 1, *value_shape)``.
    """

    values: np.ndarray
    first_index: int
    last_index: int

    def __post_init__(self):
        if self.values.ndim < 2:
            raise ShapeMismatch("path values need at least (path, time) axes")
        if self.values.shape[1] != self.last_index - self.first_index + 1:
            raise ShapeMismatch(
                f"time axis has {self.values.shape[1]} points, index range "
                f"{self.first_index}..{self.last_index} needs "
                f"{self.last_index - self.first_index + 1}"
            )

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def value_shape(self) -> tuple:
        return self.values.shape[2:]

    def at(self, i: int) -> np.ndarray:
        if not self.first_index <= i <= self.last_index:
            raise IndexError(f"grid index {i} outside {self.first_index}..{self.last_index}")
        return self.values[:, i - self.first_index]

    def window(self, first: int, last: int) -> np.ndarray:
        return self.values[:, first - self.first_index:last - self.first_index + 1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


@dataclass(frozen=True)
class BrownianDriver:
    """Brownian increments ``dW[path, step, k]`` on the steps of ``[0, T]``."""

    grid: TimeGrid
    increments: np.ndarray
    seed: int
    n_paths: int = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        inc = self.increments
        if inc.ndim != 3 or inc.shape[1] != self.grid.n_steps:
            raise ShapeMismatch("increments must have shape (n_paths, N, d)")
        object.__setattr__(self, "n_paths", inc.shape[0])
        object.__setattr__(self, "dim", inc.shape[2])

    @cached_property
    def paths(self) -> np.ndarray:
        """Brownian motion at grid indices ``0..N``, shape ``(n_paths, N + 1, d)``."""
        W = np.zeros((self.n_paths, self.grid.n_steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=W[:, 1:])
        W.flags.writeable = False
        return W

    def W(self, i: int) -> np.ndarray:
        """Brownian motion at grid index ``i``; zero for ``i <= 0``."""
        if i <= 0:
            return np.zeros((self.n_paths, self.dim))
        return self.paths[:, i]

    def subset(self, n_paths: int) -> BrownianDriver:
        return BrownianDriver(self.grid, self.increments[:n_paths], self.seed)


def sample_brownian(grid: TimeGrid, n_paths: int, d: int, seed: int) -> BrownianDriver:
    """Draw i.i.d. ``N(0, dt)`` increments; a pure function of ``(seed, shape)``."""
    if n_paths < 1 or d < 1:
        raise ValueError("n_paths and d must be positive")
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    inc = rng.standard_normal((n_paths, grid.n_steps, d))
    inc *= np.sqrt(grid.dt)
    inc.flags.writeable = False
    return BrownianDriver(grid, inc, int(seed))
