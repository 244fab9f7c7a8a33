"""Command line front end: ``sddcontrol run <config> [--threads N] [--out DIR]``.

Every run writes ``manifest.ini`` (tool version, seed, status and an echo of
the config, so the manifest itself is a valid config), one or more CSV
files and, where a check applies, ``report.txt`` with ``key = value`` lines.

Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, kernels
from .bsde import TerminalControl
from .config import ExperimentConfig, echo, load_config
from .errors import ConfigError, SddError
from .experiments import (DUALITY_LQ, duality_sweep, open_loop_control, polynomial_probe,
                          ramsey_start, recovery_round_trip)
from .grid import make_grid, sample_brownian
from .models import (LqParams, lq_closed_form_oracle, lq_model, ramsey_deterministic_policy,
                     ramsey_model)
from .optimize import solve_problem_b
from .problem import linearize, solve_adjoint, solve_state
from .regression import StepRegressor
from .sdde import solve_sdde
from .sets import ConvexSet
from .variational import solve_variational
from .verify import (duality_report, hermite_test_functions, mp_residual, report_dict,
                     write_csv, write_report)

log = logging.getLogger("sddcontrol")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


class Run:
    """Output directory plus the pieces every experiment needs."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.grid = cfg.grid()
        self.driver = sample_brownian(self.grid, cfg.n_paths, 1, cfg.seed)
        self.report: dict = {}
        self.files: list[str] = []

    def csv(self, name: str, columns: dict) -> None:
        write_csv(self.out / name, columns)
        self.files.append(name)

    def steps(self):
        N = self.grid.n_steps
        return np.arange(N + 1), self.grid.times(0, N)


def _moments(ens, first, last):
    vals = ens.window(first, last).reshape(ens.n_paths, last - first + 1, -1)[..., 0]
    return vals.mean(axis=0), vals.std(axis=0)


def _forward_reference(run: Run, model):
    """Simulate under the configured open-loop control and solve the backward state at ``X(T)``."""
    cfg, drv = run.cfg, run.driver
    eta = cfg.eta(run.grid)
    control = cfg.control()
    u = open_loop_control(lambda t: control(t=t), drv)
    X = solve_sdde(model, eta, u, drv)
    xi = TerminalControl(X.at(run.grid.n_steps))
    st = solve_state(model, xi, eta, drv, tol=cfg.tol(), basis=cfg.basis())
    return eta, u, X, xi, st


def exp_simulate(run: Run) -> None:
    model = run.cfg.model()
    eta = run.cfg.eta(run.grid)
    control = run.cfg.control()
    X = solve_sdde(model, eta, open_loop_control(lambda t: control(t=t), run.driver), run.driver)
    steps, t = run.steps()
    mean, std = _moments(X, 0, run.grid.n_steps)
    run.csv("moments.csv", {"step": steps, "t": t, "mean_x": mean, "std_x": std})
    XT = X.at(run.grid.n_steps)[:, 0]
    run.csv("terminal.csv", {"path_id": np.arange(XT.size), "x_T": XT})
    run.report.update(mean_x_T=float(XT.mean()), std_x_T=float(XT.std(ddof=1)),
                      mean_sq_x_T=float(np.mean(XT ** 2)))


def exp_solve_bsde(run: Run) -> None:
    model = run.cfg.model()
    eta, u, X, xi, st = _forward_reference(run, model)
    steps, t = run.steps()
    N = run.grid.n_steps
    my, sy = _moments(st.Y, 0, N)
    q = st.Z.values.reshape(st.Z.n_paths, N, -1)[..., 0]
    run.csv("state_moments.csv", {
        "step": steps, "t": t, "mean_x": my, "std_x": sy,
        "mean_q": np.append(q.mean(axis=0), np.nan), "std_q": np.append(q.std(axis=0), np.nan)})
    rt = recovery_round_trip(model, eta, st, xi, run.driver, run.cfg.tol())
    run.report.update(
        y0=float(st.initial_value[0]), eta0=float(eta.endpoint[0]),
        initial_gap=float(abs(st.initial_value[0] - eta.endpoint[0])),
        picard_iterations=st.picard_iterations, picard_residual=st.picard_residual,
        representation_residual=st.representation_residual,
        round_trip_rms=rt.rms_error, round_trip_tolerance=rt.tolerance)


def _multipliers(cfg: ExperimentConfig):
    sec = cfg.section("problem")
    try:
        h0 = float(sec.get("h0", 1.0))
        h1 = np.array([float(v) for v in sec.get("h1", "0.5").replace(",", " ").split()])
    except ValueError:
        raise ConfigError("h0 and h1 in [problem] must be numbers") from None
    if h0 < 0:
        raise ConfigError("h0 must be non-negative")
    norm = float(np.sqrt(h0 ** 2 + h1 @ h1))
    if norm == 0:
        raise ConfigError("h0 = 0 and h1 = 0: DegenerateMultipliers")
    return h0 / norm, h1 / norm


def exp_solve_adjoint(run: Run) -> None:
    model = run.cfg.model()
    _, _, _, _, st = _forward_reference(run, model)
    h0, h1 = _multipliers(run.cfg)
    adj = solve_adjoint(linearize(model, st), st, run.driver, h0, h1, tol=run.cfg.tol(),
                        basis=run.cfg.basis())
    steps, t = run.steps()
    mm, sm = _moments(adj.m, 0, run.grid.n_steps)
    run.csv("adjoint_moments.csv", {"step": steps, "t": t, "mean_m": mm, "std_m": sm})
    mT = adj.terminal[:, 0]
    run.report.update(h0=h0, h1=float(h1[0]), mean_m_T=float(mT.mean()),
                      se_m_T=float(mT.std(ddof=1) / np.sqrt(mT.size)),
                      picard_iterations=adj.picard_iterations,
                      picard_residual=adj.picard_residual)


def exp_check_duality(run: Run) -> None:
    cfg = run.cfg
    model = cfg.model()
    eta, _, _, xs, st = _forward_reference(run, model)
    probe_seed = int(cfg.section("problem").get("probe_seed", cfg.seed + 1))
    xi = TerminalControl(xs.values + polynomial_probe(run.driver, np.random.default_rng(probe_seed)))
    h0, h1 = _multipliers(cfg)
    paths = linearize(model, st)
    reg = StepRegressor(run.driver, cfg.basis())
    var = solve_variational(xi, xs, paths, run.driver, tol=cfg.tol(), regressor=reg)
    adj = solve_adjoint(paths, st, run.driver, h0, h1, tol=cfg.tol(), basis=cfg.basis())
    rep = duality_report(var, adj, paths)
    row = report_dict(rep)
    row["relative_residual"] = rep.relative_residual
    run.csv("duality.csv", {k: [v] for k, v in row.items()})
    run.report.update(row)


def _mp_report(run: Run, res, K, model, prefix=""):
    test = hermite_test_functions(run.driver)
    mp = mp_residual(res.xi, res.adjoint, K, model.phi_x, seed=run.cfg.seed, test_functions=test)
    run.report.update({prefix + k: v for k, v in mp.summary().items()})
    return mp


def _solve_summary(run: Run, res) -> None:
    res.write_history(run.out / "history.csv")
    run.files.append("history.csv")
    run.report.update(objective=res.objective, constraint_gap=res.constraint_gap, h0=res.h0,
                      h1=float(res.h1[0]), iterations=res.iterations, final_penalty=res.penalty,
                      abnormal=res.abnormal)


def exp_optimize(run: Run) -> None:
    cfg = run.cfg
    model = cfg.model()
    eta = cfg.eta(run.grid)
    K = cfg.constraint()
    res = solve_problem_b(model, K, cfg.target(eta), eta, run.driver, cfg.solver_options())
    _solve_summary(run, res)
    mp = _mp_report(run, res, K, model)
    run.csv("solution.csv", {"path_id": np.arange(res.xi.n_paths), "xi_star": res.xi.values[:, 0],
                             "g": mp.g[:, 0], "on_boundary": mp.boundary_mask.astype(int)})


def exp_lq_demo(run: Run) -> None:
    cfg = run.cfg
    p = cfg.lq_params() if "model" in cfg.sections else LqParams(A1=0.1, A3=0.3, B3=1.0)
    if p.Ab2 != 0:
        raise ConfigError("lq-demo needs A2 = B2 = 0 (DelayPresent)")
    try:
        model = lq_model(p)
    except SddError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    eta = cfg.eta(run.grid)
    a = cfg.target(eta)
    K = cfg.constraint("box") if "constraint" in cfg.section("problem") else ConvexSet.box(0.0, None)
    res = solve_problem_b(model, K, a, eta, run.driver, cfg.solver_options())
    moment = cfg.section("problem").get("oracle_moment", "sample")
    try:
        oracle = lq_closed_form_oracle(float(a[0]), p, run.grid.horizon, run.driver, moment=moment)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    xs, xo = res.xi.values[:, 0], oracle.values[:, 0]
    err = np.abs(xs - xo)
    rms_rel = float(np.sqrt(np.mean(err ** 2)) / np.sqrt(np.mean(xo ** 2)))
    run.csv("lq_demo.csv", {"path_id": np.arange(xs.size), "xi_star": xs, "xi_oracle": xo,
                            "abs_err": err})
    run.csv("lq_summary.csv", {"rms_relative_error": [rms_rel], "max_abs_error": [float(err.max())]})
    _solve_summary(run, res)
    run.report.update(rms_relative_error=rms_rel, oracle_moment=moment)
    _mp_report(run, res, K, model)


def exp_ramsey_demo(run: Run) -> None:
    cfg = run.cfg
    p = cfg.ramsey_params()
    try:
        model = ramsey_model(p)
    except (SddError, ValueError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    eta = cfg.eta(run.grid)
    a = cfg.target(eta)
    xi0 = ramsey_start(p, eta, run.driver, model)
    opts = cfg.solver_options() if "gradient_space" in cfg.section("optimizer") \
        else cfg.solver_options(gradient_space="terminal-span")
    res = solve_problem_b(model, p.Q, a, eta, run.driver, opts, xi0=xi0)
    _solve_summary(run, res)
    mp = _mp_report(run, res, p.Q, model)
    N = run.grid.n_steps
    c = res.state.Z.values[:, :, 0, 0] / p.sigma1 - p.sigma0 / p.sigma1 * \
        res.state.Y.window(-run.grid.delay_steps, N - 1 - run.grid.delay_steps)[..., 0]
    steps = np.arange(N)
    cols = {"step": steps, "t": run.grid.times(0, N - 1), "c_mean": c.mean(axis=0),
            "c_std": c.std(axis=0)}
    ratio = res.h1[0] / res.h0 if res.h0 > 0 else float("inf")
    run.report.update(multiplier_ratio=float(ratio))
    if p.sigma0 == 0:
        policy = ramsey_deterministic_policy(p, run.grid)
        cols["c_deterministic"] = policy.consumption
        run.report.update(deterministic_multiplier_ratio=policy.multiplier_ratio)
    run.csv("consumption.csv", cols)
    run.csv("ramsey_paths.csv", {"path_id": np.arange(res.xi.n_paths),
                                 "xi_star": res.xi.values[:, 0], "g": mp.g[:, 0],
                                 "on_boundary": mp.boundary_mask.astype(int)})
    rt = recovery_round_trip(model, eta, res.state, res.xi, run.driver, opts.picard_tol)
    run.report.update(round_trip_rms=rt.rms_error, round_trip_tolerance=rt.tolerance)


def exp_convergence_sweep(run: Run) -> None:
    cfg = run.cfg
    sec = cfg.section("sweep")
    try:
        levels = int(sec.get("levels", 3))
        step_factor = int(sec.get("step_factor", 2))
        path_factor = int(sec.get("path_factor", 4))
        probe_seed = int(sec.get("probe_seed", 0))
        n_probes = int(sec.get("n_probes", 4))
        n_seeds = int(sec.get("n_seeds", 1))
    except ValueError:
        raise ConfigError("[sweep] values must be integers") from None
    if levels < 3:
        raise ConfigError("convergence-sweep needs at least 3 levels")
    model = cfg.model("lq") if cfg.section("model").get("kind") else lq_model(DUALITY_LQ)
    # the finer grids must also be commensurate with the delay
    for k in range(levels):
        try:
            make_grid(cfg.T, cfg.delta, cfg.N * step_factor ** k)
        except SddError as exc:
            raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    x0 = float(cfg.eta(run.grid).endpoint[0])
    rows = duality_sweep(model, cfg.T, cfg.delta, cfg.N, cfg.n_paths, levels, cfg.seed,
                         step_factor=step_factor, path_factor=path_factor, n_seeds=n_seeds,
                         probe_seed=probe_seed, n_probes=n_probes, basis=cfg.basis(), x0=x0, tol=cfg.tol())
    d1 = np.array([r.delta1 for r in rows])
    res = np.array([r.residual for r in rows])
    scale = np.array([r.scale for r in rows])
    run.csv("convergence.csv", {
        "level": np.arange(levels), "n_steps": [r.n_steps for r in rows],
        "n_paths": [r.n_paths for r in rows], "dt": [cfg.T / r.n_steps for r in rows],
        "rms_delta1": d1, "rms_residual": res, "scale": scale, "relative_residual": res / scale})
    run.report.update(min_delta1_shrink=float(np.min(d1[:-1] / d1[1:])),
                      min_residual_shrink=float(np.min(res[:-1] / res[1:])),
                      finest_relative_residual=float(res[-1] / scale[-1]))


EXPERIMENTS = {
    "simulate-sdde": exp_simulate,
    "solve-bsde": exp_solve_bsde,
    "solve-adjoint": exp_solve_adjoint,
    "check-duality": exp_check_duality,
    "optimize": exp_optimize,
    "lq-demo": exp_lq_demo,
    "ramsey-demo": exp_ramsey_demo,
    "convergence-sweep": exp_convergence_sweep,
}


def _write_manifest(out: Path, cfg: ExperimentConfig | None, status: dict) -> None:
    lines = ["[manifest]"]
    for k, v in status.items():
        lines.append(f"{k} = {v}")
    text = "\n".join(lines) + "\n\n" + (echo(cfg) if cfg is not None else "")
    (out / "manifest.ini").write_text(text)


def run(config_path, threads: int = 1, out: str | os.PathLike | None = None) -> int:
    """Run one experiment; returns the process exit code."""
    status = {"tool": "sddcontrol", "version": __version__, "config": str(config_path),
              "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
              "threads": threads, "backend": kernels.DEFAULT_BACKEND}
    cfg = None
    out_dir = Path(out) if out is not None else None
    try:
        cfg = load_config(config_path)
        if out_dir is None:
            out_dir = Path(cfg.section("experiment").get("out", f"out-{cfg.kind}"))
        out_dir.mkdir(parents=True, exist_ok=True)
        status.update(kind=cfg.kind, seed=cfg.seed)
        kernels.set_threads(threads)
        # BLAS stays single threaded: its reductions are not order-stable across thread counts
        with threadpool_limits(limits=1):
            r = Run(cfg, out_dir)
            EXPERIMENTS[cfg.kind](r)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            status.update(status="config-error", exit_code=EXIT_CONFIG, error=str(exc))
            _write_manifest(out_dir, cfg, status)
        return EXIT_CONFIG
    except SddError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status.update(status="solver-error", exit_code=EXIT_SOLVER,
                      error=f"{type(exc).__name__}: {exc}")
        for attr in ("step", "path"):
            if getattr(exc, attr, None) is not None:
                status[f"error_{attr}"] = getattr(exc, attr)
        _write_manifest(out_dir, cfg, status)
        return EXIT_SOLVER
    if r.report:
        write_report(out_dir / "report.txt", r.report)
    status.update(status="ok", exit_code=EXIT_OK, outputs=" ".join(r.files))
    _write_manifest(out_dir, cfg, status)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sddcontrol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads for path sweeps")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    return run(args.config, threads=args.threads, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
