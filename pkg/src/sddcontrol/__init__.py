"""Stochastic delayed control with a terminal state constraint.

Forward and backward solvers for delay equations, the anticipated adjoint
equation, a penalized projected-gradient solver for the terminal-control
problem and numerical checks of its first-order conditions.
"""
from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .anticipated import AdjointSolution, contraction_diagnostic, solve_anticipated_sde
from .bsde import BsdeSolution, TerminalControl, bsde_energy, bsde_stability_gap, solve_delayed_bsde
from .coefficients import CoefficientSet, InitialSegment, lipschitz_probe
from .errors import (ConfigError, DegenerateDiffusion, DegenerateMultipliers, DelayPresent,
                     EmptyConstraintSet, InfeasibleStall, InversionFailure, NonCommensurateDelay,
                     NonFiniteState, PicardDivergence, RankDeficientBasis, SddError,
                     ShapeMismatch)
from .grid import BrownianDriver, PathEnsemble, TimeGrid, make_grid, sample_brownian
from .models import (LqParams, RamseyParams, lq_closed_form_oracle, lq_model,
                     ramsey_deterministic_policy, ramsey_model)
from .optimize import SolveResult, SolverOptions, recover_control, solve_problem_b
from .problem import cost, linearize, solve_adjoint, solve_state
from .regression import RegressionBasis, regress_conditional
from .sdde import solve_sdde
from .sets import ConvexSet
from .variational import (PenaltyParams, penalty_value, solve_variational, variational_gap)
from .verify import (DualityReport, MpResidualReport, duality_report, mp_residual,
                     variational_inequality)

__all__ = [name for name in dir()
           if not name.startswith("_") and name not in ("annotations", "version", "PackageNotFoundError")]
