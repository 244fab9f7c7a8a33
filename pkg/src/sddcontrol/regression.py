"""Least-squares conditional expectation on polynomial bases.

``E[target | F_t]`` is approximated by projecting the targets onto the span of
polynomials (total degree <= ``degree``) in a handful of per-path features
observed at time ``t``. Projections use a truncated SVD, so collinear or
constant features are dropped instead of blowing up the solve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .errors import RankDeficientBasis, ShapeMismatch

SVD_RCOND = 1e-10
DESIGN_CACHE_LIMIT = 2 * 10 ** 7
_FEATURE_SPECS = ("current", "delayed", "both")


@dataclass(frozen=True)
class RegressionBasis:
    degree: int = 2
    feature_spec: str = "both"

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.feature_spec not in _FEATURE_SPECS:
            raise ValueError(f"feature_spec must be one of {_FEATURE_SPECS}")

    def n_functions(self, n_features: int) -> int:
        return comb(n_features + self.degree, self.degree)


def _standardize(features):
    ft = np.ascontiguousarray(features.T)
    mean = ft.mean(axis=1)
    centered = ft - mean[:, None]
    scale = np.sqrt((centered * centered).mean(axis=1))
    keep = scale > 1e-13 * (1.0 + np.abs(mean))
    return (centered[keep] / scale[keep, None]).T, mean, scale, keep


def monomials(z: np.ndarray, degree: int) -> np.ndarray:
    """Design matrix ``[1, z_j, z_j z_k, ...]`` of total degree <= ``degree``.

    Built column by column in a Fortran-ordered array, which is also the
    layout LAPACK wants.
    """
    n, k = z.shape
    zt = np.ascontiguousarray(z.T)
    combos = [c for deg in range(1, degree + 1)
              for c in combinations_with_replacement(range(k), deg)]
    out = np.empty((1 + len(combos), n))
    out[0] = 1.0
    for r, combo in enumerate(combos, start=1):
        np.copyto(out[r], zt[combo[0]])
        for j in combo[1:]:
            out[r] *= zt[j]
    return out.T


class Projector:
    """Orthogonal projection onto the polynomial span of fixed features.

    The factorization is done once; each ``project`` call costs two thin
    matrix products. Singular values come from the SVD of the triangular
    factor of a QR decomposition, which equals those of the design matrix
    and is cheaper for tall designs. With ``keep_design`` the design matrix
    is stored instead of being rebuilt on every call.
    """

    def __init__(self, features: np.ndarray, basis: RegressionBasis, keep_design: bool = True):
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        n_paths = features.shape[0]
        z, _, _, keep = _standardize(features)
        self.basis = basis
        self.n_paths = n_paths
        self._z = z
        design = monomials(z, basis.degree)
        self.n_functions = design.shape[1]
        if self.n_functions > n_paths / 10:
            warnings.warn(
                f"{self.n_functions} basis functions for {n_paths} paths: regression is ill-posed",
                RuntimeWarning,
                stacklevel=3,
            )
        self._factor(design)
        self._design = design if keep_design else None

    @classmethod
    def from_design(cls, design: np.ndarray) -> Projector:
        """Projector onto the column span of an explicit ``(n_paths, k)`` design matrix."""
        self = cls.__new__(cls)
        design = np.asarray(design, dtype=float)
        self.basis = None
        self.n_paths = design.shape[0]
        self._z = None
        self.n_functions = design.shape[1]
        self._factor(design)
        self._design = design
        return self

    def _factor(self, design):
        _, s, vt = np.linalg.svd(np.linalg.qr(design, mode="r"))
        if s.size == 0 or s[0] == 0.0:
            raise RankDeficientBasis("regression design has effective rank 0")
        rank = int(np.count_nonzero(s > SVD_RCOND * s[0]))
        self.rank = rank
        # U_r = design @ G, with G = V_r diag(1/s_r)
        self._G = vt[:rank].T / s[:rank]

    @property
    def design(self) -> np.ndarray:
        return self._design if self._design is not None else monomials(self._z, self.basis.degree)

    def project(self, targets: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        if targets.shape[0] != self.n_paths:
            raise ShapeMismatch("targets and features disagree on the number of paths")
        flat = targets.reshape(self.n_paths, -1)
        design = self.design
        coef = self._G @ (self._G.T @ (design.T @ flat))
        return (design @ coef).reshape(targets.shape)


def regress_conditional(features: np.ndarray, targets: np.ndarray,
                        basis: RegressionBasis | None = None) -> np.ndarray:
    """Fitted values of the least-squares projection of ``targets`` on ``features``.

    Args:
        features: array ``(n_paths, k)`` of information available at time t.
        targets: array ``(n_paths, ...)``; trailing axes are regressed jointly.
        basis: polynomial basis, default total degree 2.

    Raises:
        RankDeficientBasis: the design matrix has effective rank zero.
    """
    basis = basis or RegressionBasis()
    if np.shape(features)[0] <= 1:
        raise ShapeMismatch("need more than one path to regress")
    return Projector(features, basis).project(targets)


class StepRegressor:
    """Per-step conditional expectations for one feature source.

    Features at step ``i`` are the Brownian path ``W(t_i)`` and/or
    ``W(t_i - delta)`` (per ``basis.feature_spec``) plus any extra feature
    ensembles sampled at the same two indices. Projectors are built lazily
    and cached, so repeated sweeps (Picard iterations, optimizer steps) reuse
    the factorizations. Design matrices are kept while their total size
    stays under ``DESIGN_CACHE_LIMIT`` doubles.
    """

    def __init__(self, driver, basis: RegressionBasis | None = None, extra=()):
        self.driver = driver
        self.grid = driver.grid
        self.basis = basis or RegressionBasis()
        self.extra = tuple(extra)
        self._cache: dict[int, Projector] = {}

    def features(self, i: int) -> np.ndarray:
        m = self.grid.delay_steps
        spec = self.basis.feature_spec
        cols = []
        if spec in ("current", "both"):
            cols.append(self.driver.W(i))
        if spec in ("delayed", "both"):
            cols.append(self.driver.W(i - m))
        for ens in self.extra:
            for j in ((i,) if spec == "current" else (i - m,) if spec == "delayed" else (i, i - m)):
                j = min(max(j, ens.first_index), ens.last_index)
                cols.append(ens.at(j).reshape(ens.n_paths, -1))
        return np.column_stack(cols)

    def projector(self, i: int) -> Projector:
        proj = self._cache.get(i)
        if proj is None:
            feats = self.features(i)
            size = self.driver.n_paths * self.grid.n_steps * self.basis.n_functions(feats.shape[1])
            proj = Projector(feats, self.basis, keep_design=size <= DESIGN_CACHE_LIMIT)
            self._cache[i] = proj
        return proj

    def project(self, i: int, targets: np.ndarray) -> np.ndarray:
        return self.projector(i).project(targets)
