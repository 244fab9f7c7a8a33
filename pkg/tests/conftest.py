"""Session fixtures for the expensive optimizer runs shared by several test files."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from sddcontrol import (BrownianDriver, CoefficientSet, ConvexSet, InitialSegment, LqParams,
                        RamseyParams, SolveResult, SolverOptions, lq_model, make_grid,
                        ramsey_model, sample_brownian, solve_problem_b)
from sddcontrol.experiments import ramsey_start

from helpers import ACCEPTANCE


@pytest.fixture(scope="session", autouse=True)
def _single_threaded_blas():
    # results are compared bit for bit; keep the BLAS reduction order fixed
    with threadpool_limits(limits=1):
        yield


@dataclass
class Optimum:
    model: CoefficientSet
    params: object
    eta: InitialSegment
    driver: BrownianDriver
    K: ConvexSet
    a: np.ndarray
    opts: SolverOptions
    result: SolveResult


@pytest.fixture(scope="session")
def lq_optimum() -> Optimum:
    """No-delay LQ with K = R+, a = 1 at N = 100 and 10^4 paths."""
    p = LqParams(A1=0.1, A3=0.3, B3=1.0)
    model = lq_model(p)
    g = make_grid(1.0, 0.25, 100)
    d = sample_brownian(g, 10_000, 1, 5)
    eta = InitialSegment.constant(g, 1.0)
    K = ConvexSet.box(0.0, None)
    opts = SolverOptions()
    res = solve_problem_b(model, K, [1.0], eta, d, opts)
    return Optimum(model, p, eta, d, K, np.array([1.0]), opts, res)


@pytest.fixture(scope="session")
def ramsey_optimum() -> Optimum:
    """Production-consumption instance of the ramsey-demo config (about a minute)."""
    p = RamseyParams(Q=ConvexSet.box(-5.0, 5.0))
    model = ramsey_model(p)
    g = make_grid(1.0, 0.25, 40)
    d = sample_brownian(g, 2000, 1, 3)
    eta = InitialSegment.constant(g, 1.0)
    opts = SolverOptions(gradient_space="terminal-span")
    res = solve_problem_b(model, p.Q, [1.0], eta, d, opts, xi0=ramsey_start(p, eta, d, model))
    return Optimum(model, p, eta, d, p.Q, np.array([1.0]), opts, res)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
