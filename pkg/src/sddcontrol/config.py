"""Experiment configuration: INI files read with :mod:`configparser`.

A minimal config::

    [experiment]
    kind = lq-demo

    [grid]
    T = 1.0
    delta = 0.25
    N = 100

    [monte_carlo]
    n_paths = 10000
    seed = 5

Other sections: ``[model]`` (``kind = lq | ramsey | generic`` plus
parameters), ``[problem]`` (initial segment, target, constraint set,
open-loop control, multipliers), ``[regression]``, ``[optimizer]`` (any
:class:`~sddcontrol.optimize.SolverOptions` field) and ``[sweep]``.
Every value is validated here; errors surface as :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet, InitialSegment
from .errors import ConfigError, SddError
from .expr import Expression
from .grid import TimeGrid, make_grid
from .models import LqParams, RamseyParams, lq_model, ramsey_model
from .optimize import SolverOptions
from .regression import RegressionBasis
from .sets import ConvexSet

EXPERIMENTS = ("simulate-sdde", "solve-bsde", "solve-adjoint", "check-duality", "optimize",
               "lq-demo", "ramsey-demo", "convergence-sweep")
MODEL_KINDS = ("lq", "ramsey", "generic")
# sections that must be present for each experiment kind
_REQUIRED = {kind: ("experiment", "grid", "monte_carlo") for kind in EXPERIMENTS}
for _kind in ("simulate-sdde", "solve-bsde", "solve-adjoint", "check-duality", "optimize"):
    _REQUIRED[_kind] += ("model",)
_REQUIRED["convergence-sweep"] += ("model", "sweep")


def _get(section: dict, key: str, convert, default=None, required=False, where=""):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r} in [{where}]")
        return default
    raw = section[key]
    try:
        return convert(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"invalid value {raw!r} for {key!r} in [{where}]") from None


def _floats(raw: str) -> np.ndarray:
    return np.array([float(v) for v in raw.replace(",", " ").split()], dtype=float)


def _int(raw: str) -> int:
    value = float(raw)
    if value != int(value):
        raise ValueError(raw)
    return int(value)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    T: float
    delta: float
    N: int
    n_paths: int
    sections: dict

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    # -- builders -----------------------------------------------------------
    def grid(self) -> TimeGrid:
        try:
            return make_grid(self.T, self.delta, self.N)
        except (SddError, ValueError) as exc:
            name = type(exc).__name__
            msg = str(exc) if str(exc).startswith(name) else f"{name}: {exc}"
            raise ConfigError(msg) from exc

    def basis(self) -> RegressionBasis:
        sec = self.section("regression")
        try:
            return RegressionBasis(_get(sec, "degree", _int, 2, where="regression"),
                                   sec.get("feature_spec", "both"))
        except ValueError as exc:
            raise ConfigError(f"[regression] {exc}") from None

    def tol(self) -> float:
        tol = _get(self.section("monte_carlo"), "picard_tol", float, 1e-10, where="monte_carlo")
        if not tol > 0:
            raise ConfigError("picard_tol must be positive")
        return tol

    def model_kind(self, default: str = "generic") -> str:
        kind = self.section("model").get("kind", default)
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        return kind

    def lq_params(self) -> LqParams:
        sec = self.section("model")
        vals = {k: _get(sec, k, float, getattr(LqParams, k), where="model")
                for k in ("A1", "A2", "A3", "B1", "B2", "B3")}
        return LqParams(**vals)

    def ramsey_params(self) -> RamseyParams:
        sec = self.section("model")
        vals = {k: _get(sec, k, float, getattr(RamseyParams, k), where="model")
                for k in ("K", "y", "sigma0", "sigma1", "r", "gamma", "cap")}
        lo = _get(sec, "Q_lo", float, 0.0, where="model")
        hi = _get(sec, "Q_hi", float, 2.0, where="model")
        try:
            return RamseyParams(Q=ConvexSet.box(lo, hi), **vals)
        except SddError as exc:
            raise ConfigError(f"[model] {exc}") from None

    def model(self, default_kind: str = "generic") -> CoefficientSet:
        kind = self.model_kind(default_kind)
        try:
            if kind == "lq":
                return lq_model(self.lq_params())
            if kind == "ramsey":
                return ramsey_model(self.ramsey_params())
        except (SddError, ValueError) as exc:
            raise ConfigError(f"[model] {type(exc).__name__}: {exc}") from None
        return generic_model(self.section("model"))

    def eta(self, grid: TimeGrid) -> InitialSegment:
        sec = self.section("problem")
        if "eta" in sec:
            ex = Expression(sec["eta"], allowed=("t",))
            return InitialSegment.from_function(grid, lambda t: float(ex(t=t)))
        return InitialSegment.constant(grid, _get(sec, "x0", float, 1.0, where="problem"))

    def target(self, eta: InitialSegment) -> np.ndarray:
        sec = self.section("problem")
        if "a" in sec:
            return _get(sec, "a", _floats, where="problem")
        return np.array(eta.endpoint, dtype=float)

    def constraint(self, default: str = "whole") -> ConvexSet:
        sec = self.section("problem")
        kind = sec.get("constraint", default)
        try:
            if kind == "whole":
                return ConvexSet.whole()
            if kind == "box":
                return ConvexSet.box(_get(sec, "lo", float, None, where="problem"),
                                     _get(sec, "hi", float, None, where="problem"))
            if kind == "halfspace":
                return ConvexSet.halfspace(_get(sec, "w", float, 1.0, where="problem"),
                                           _get(sec, "beta", float, 0.0, where="problem"))
        except SddError as exc:
            raise ConfigError(f"[problem] {type(exc).__name__}: {exc}") from None
        raise ConfigError(f"unknown constraint kind {kind!r}")

    def control(self) -> Expression:
        return Expression(self.section("problem").get("control", "0"), allowed=("t",))

    def solver_options(self, **overrides) -> SolverOptions:
        sec = self.section("optimizer")
        kwargs = {}
        for f in dataclasses.fields(SolverOptions):
            if f.name == "basis":
                continue
            if f.name in sec:
                conv = {"int": _int, "float": float, "str": str}[f.type] if isinstance(f.type, str) \
                    else f.type
                kwargs[f.name] = _get(sec, f.name, conv, where="optimizer")
        unknown = set(sec) - {f.name for f in dataclasses.fields(SolverOptions)}
        if unknown:
            raise ConfigError(f"unknown optimizer option(s): {', '.join(sorted(unknown))}")
        kwargs.update(overrides)
        kwargs.setdefault("picard_tol", self.tol())
        try:
            return SolverOptions(basis=self.basis(), **kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def generic_model(sec: dict) -> CoefficientSet:
    """Scalar model from expressions ``b``, ``sigma`` and ``phi``.

    Optional: ``sigma_inv`` (in ``t, x, x_d, q``), ``running_cost`` (in
    ``t, x, u``), ``lipschitz`` and ``alpha``. Without ``sigma_inv`` the
    control is recovered by Newton iteration and every derivative comes
    from finite differences.
    """
    for key in ("b", "sigma", "phi"):
        if key not in sec:
            raise ConfigError(f"generic model needs {key!r} in [model]")
    b = Expression(sec["b"], ("t", "x", "x_d", "u"))
    s = Expression(sec["sigma"], ("t", "x", "x_d", "u"))
    phi = Expression(sec["phi"], ("x",))

    def shape(v, P):
        return np.broadcast_to(v, (P,)).astype(float)

    def b_fn(t, x, xd, u):
        P = np.shape(x)[0]
        return shape(b(t=t, x=x[:, 0], x_d=xd[:, 0], u=u[:, 0, 0]), P)[:, None]

    def s_fn(t, x, xd, u):
        P = np.shape(x)[0]
        return shape(s(t=t, x=x[:, 0], x_d=xd[:, 0], u=u[:, 0, 0]), P)[:, None, None]

    def phi_fn(x):
        x = np.asarray(x, dtype=float)
        return shape(phi(x=x[..., 0]), x.shape[0])

    kw = {}
    if "sigma_inv" in sec:
        si = Expression(sec["sigma_inv"], ("t", "x", "x_d", "q"))

        def si_fn(t, x, xd, q):
            P = np.shape(x)[0]
            return shape(si(t=t, x=x[:, 0], x_d=xd[:, 0], q=q[:, 0, 0]), P)[:, None, None]
        kw["sigma_inv"] = si_fn
    if "running_cost" in sec:
        rc = Expression(sec["running_cost"], ("t", "x", "u"))

        def rc_fn(t, x, u):
            P = np.shape(x)[0]
            return shape(rc(t=t, x=x[:, 0], u=u[:, 0, 0]), P)
        kw["running_cost"] = rc_fn
    return CoefficientSet(
        b=b_fn, sigma=s_fn, phi=phi_fn,
        lipschitz=_get(sec, "lipschitz", float, 1.0, where="model"),
        alpha=_get(sec, "alpha", float, 0.0, where="model"),
        name="generic", **kw,
    )


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys such as A1 and Q_lo are case sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    sections = {name: dict(parser[name]) for name in parser.sections() if name != "manifest"}
    exp = sections.get("experiment")
    if exp is None:
        raise ConfigError("missing [experiment] section")
    kind = exp.get("kind")
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENTS}")
    for name in _REQUIRED[kind]:
        if name not in sections:
            raise ConfigError(f"experiment {kind!r} needs a [{name}] section")
    grid, mc = sections["grid"], sections["monte_carlo"]
    cfg = ExperimentConfig(
        kind=kind,
        seed=_get(mc, "seed", _int, required=True, where="monte_carlo"),
        T=_get(grid, "T", float, required=True, where="grid"),
        delta=_get(grid, "delta", float, required=True, where="grid"),
        N=_get(grid, "N", _int, required=True, where="grid"),
        n_paths=_get(mc, "n_paths", _int, required=True, where="monte_carlo"),
        sections=sections,
    )
    if cfg.n_paths < 2:
        raise ConfigError("n_paths must be at least 2")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    cfg.grid()  # fail early on a non-commensurate delay
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def echo(cfg: ExperimentConfig) -> str:
    """The config sections as INI text, in their original order."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, items in cfg.sections.items():
        parser[name] = items
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
