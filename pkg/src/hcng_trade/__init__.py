"""Cooperative day-ahead dispatch of a hydrogen-enriched gas distribution
network and an active distribution network, with consensus-based benefit
sharing and a forecast-error-immunized scheduling loop."""

__version__ = "0.1.0"

from .netmodel import (  # noqa: F401
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    bundled_scenario_names,
    load_bundled,
    load_scenario,
    save_scenario,
    scenario_content_hash,
)
from .conic import InfeasibleModel, SolverFailure  # noqa: F401
from .bargain import (  # noqa: F401
    BargainOutcome,
    CentralizedResult,
    IndependentOutcome,
    bargain,
    solve_independent,
    solve_q1_centralized,
)
from .robust import RobustSolution, ccg  # noqa: F401
from .oracle import OracleReport, run_oracle_suite  # noqa: F401
from .cli import main  # noqa: F401
