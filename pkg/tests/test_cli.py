import configparser
import csv
import subprocess
import sys
from pathlib import Path

import pytest

from sddcontrol.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main

CONFIGS = Path(__file__).parent.parent / "configs"

TINY = {
    "simulate-sdde": "[model]\nkind = generic\nb = x_d\nsigma = 0.2 * x + u\nphi = 0.5 * x * x\n"
                     "[problem]\ncontrol = 0.1 * exp(-t)\n",
    "solve-bsde": "[model]\nkind = lq\nA1 = 0.1\nA2 = 0.5\nA3 = 0.3\nB3 = 1.0\n",
    "solve-adjoint": "[model]\nkind = lq\nA1 = 0.1\nA2 = 0.5\nA3 = 0.3\nB3 = 1.0\n"
                     "[problem]\nh0 = 1.0\nh1 = 0.5\n",
    "optimize": "[model]\nkind = lq\nA1 = 0.1\nA2 = 0.5\nA3 = 0.3\nB3 = 1.0\n"
                "[problem]\na = 1.2\nconstraint = box\nlo = 0.0\n",
}


def tiny_config(tmp_path, kind, n_paths=301):
    text = (f"[experiment]\nkind = {kind}\n[grid]\nT = 1.0\ndelta = 0.25\nN = 20\n"
            f"[monte_carlo]\nn_paths = {n_paths}\nseed = 3\n" + TINY[kind])
    path = tmp_path / f"{kind}.ini"
    path.write_text(text)
    return path


def read_report(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        k, v = line.split(" = ", 1)
        out[k] = v
    return out


def test_lq_demo_end_to_end(tmp_path):
    assert main(["run", str(CONFIGS / "lq_demo.ini"), "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.txt")
    assert float(rep["rms_relative_error"]) <= 2e-2
    with open(tmp_path / "history.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["iteration", "lambda", "objective", "constraint_gap", "step_size", "grad_rms"]
    manifest = configparser.ConfigParser(interpolation=None)
    manifest.optionxform = str
    manifest.read(tmp_path / "manifest.ini")
    assert manifest["manifest"]["status"] == "ok"
    assert manifest["manifest"]["seed"] == "5"
    assert "lq_demo.csv" in manifest["manifest"]["outputs"]


def test_manifest_is_a_config(tmp_path):
    cfg = tiny_config(tmp_path, "simulate-sdde")
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", str(tmp_path / "a" / "manifest.ini"), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("moments.csv", "terminal.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_delay_exit_code(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "bad_delay.ini"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "NonCommensurateDelay" in capsys.readouterr().err
    assert "config-error" in (tmp_path / "manifest.ini").read_text()


def test_solver_error_exit_code(tmp_path):
    cfg = tiny_config(tmp_path, "optimize")
    cfg.write_text(cfg.read_text().replace("lo = 0.0", "lo = 0.0\nhi = 0.01")
                   + "[optimizer]\nmax_stages = 5\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "InfeasibleStall" in (tmp_path / "o" / "manifest.ini").read_text()


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_threads_flag_validated():
    with pytest.raises(SystemExit):
        main(["run", "x.ini", "--threads", "0"])


@pytest.mark.parametrize("kind", sorted(TINY))
def test_outputs_identical_across_threads(tmp_path, kind):
    cfg = tiny_config(tmp_path, kind)
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        assert main(["run", str(cfg), "--threads", str(threads), "--out", str(out)]) == EXIT_OK
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert names
    for name in names + ["report.txt"]:
        if (outs[0] / name).exists():
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_console_entry_point(tmp_path):
    cfg = tiny_config(tmp_path, "simulate-sdde")
    proc = subprocess.run([sys.executable, "-m", "sddcontrol.cli", "run", str(cfg), "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "moments.csv").exists()
