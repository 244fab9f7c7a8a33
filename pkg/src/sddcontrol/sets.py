"""Closed convex constraint sets with Euclidean projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyConstraintSet

BOUNDARY_RTOL = 1e-6


@dataclass(frozen=True)
class ConvexSet:
    """``kind`` is ``"whole"``, ``"box"`` (``lo <= x <= hi``) or ``"halfspace"`` (``<w, x> >= beta``).

    Points are arrays of shape ``(P, n)``; ``n`` is the dimension.
    """

    kind: str
    n: int = 1
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    w: np.ndarray | None = None
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == "box":
            lo = np.broadcast_to(np.asarray(-np.inf if self.lo is None else self.lo, float), (self.n,))
            hi = np.broadcast_to(np.asarray(np.inf if self.hi is None else self.hi, float), (self.n,))
            if np.any(lo > hi):
                raise EmptyConstraintSet("box has lo > hi")
            object.__setattr__(self, "lo", lo.copy())
            object.__setattr__(self, "hi", hi.copy())
        elif self.kind == "halfspace":
            w = np.broadcast_to(np.asarray(self.w, float), (self.n,)).copy()
            if not np.any(w):
                if self.beta > 0:
                    raise EmptyConstraintSet("half-space with w = 0 and beta > 0")
            object.__setattr__(self, "w", w)
        elif self.kind != "whole":
            raise ValueError(f"unknown set kind {self.kind!r}")

    @classmethod
    def whole(cls, n: int = 1) -> ConvexSet:
        return cls("whole", n)

    @classmethod
    def box(cls, lo=None, hi=None, n: int = 1) -> ConvexSet:
        return cls("box", n, lo=lo, hi=hi)

    @classmethod
    def halfspace(cls, w, beta: float, n: int = 1) -> ConvexSet:
        return cls("halfspace", n, w=w, beta=float(beta))

    @property
    def has_boundary(self) -> bool:
        if self.kind == "whole":
            return False
        if self.kind == "box":
            return bool(np.isfinite(self.lo).any() or np.isfinite(self.hi).any())
        return bool(np.any(self.w))

    def _pts(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[0], self.n) if x.ndim <= 1 else x

    def project(self, x) -> np.ndarray:
        x = self._pts(x)
        if self.kind == "whole":
            return x.copy()
        if self.kind == "box":
            return np.minimum(np.maximum(x, self.lo), self.hi)
        ww = self.w @ self.w
        if ww == 0:
            return x.copy()
        short = np.minimum(x @ self.w - self.beta, 0.0)
        return x - np.outer(short / ww, self.w)

    def contains(self, x, atol: float = 0.0) -> np.ndarray:
        x = self._pts(x)
        if self.kind == "whole":
            return np.ones(x.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((x >= self.lo - atol) & (x <= self.hi + atol), axis=1)
        return x @ self.w >= self.beta - atol

    def on_boundary(self, x, rtol: float = BOUNDARY_RTOL) -> np.ndarray:
        """Per-point flag: within ``rtol * (1 + |x|)`` of the boundary."""
        x = self._pts(x)
        tol = rtol * (1.0 + np.linalg.norm(x, axis=1))
        if self.kind == "whole":
            return np.zeros(x.shape[0], dtype=bool)
        if self.kind == "box":
            near = (np.abs(x - self.lo) <= tol[:, None]) | (np.abs(x - self.hi) <= tol[:, None])
            return near.any(axis=1)
        nw = np.linalg.norm(self.w)
        if nw == 0:
            return np.zeros(x.shape[0], dtype=bool)
        return np.abs(x @ self.w - self.beta) / nw <= tol

    def describe(self) -> str:
        if self.kind == "box":
            return f"box[{self.lo.tolist()}, {self.hi.tolist()}]"
        if self.kind == "halfspace":
            return f"halfspace(w={self.w.tolist()}, beta={self.beta})"
        return "whole"
