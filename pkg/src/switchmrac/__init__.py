"""Adaptive tracking control for switched MIMO plants with unknown gains.

The library simulates a model-reference adaptive controller that copes with
piecewise-constant plant parameters by detecting switches online, resetting
its estimation filters, and adapting through a dead-zoned scalar-regressor
law.  A compiled stepping core is used when available, with a pure-Python
fallback selected automatically at import.
"""

from .config import canonical_path as canonical_config_path
from .config import load_config, parse_config
from .engine import (
    DEFAULT_CORE,
    RunResult,
    Scenario,
    SimState,
    TelemetryTable,
    available_cores,
    calibrate_rho,
    run_scenario,
)
from .errors import (
    ConfigError,
    DimensionError,
    FiniteEscapeError,
    MatchingConditionError,
    SingularMatrixError,
    SwitchMracError,
    TemporalOrderError,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CORE",
    "RunResult",
    "Scenario",
    "SimState",
    "TelemetryTable",
    "available_cores",
    "calibrate_rho",
    "canonical_config_path",
    "load_config",
    "parse_config",
    "run_scenario",
    "ConfigError",
    "DimensionError",
    "FiniteEscapeError",
    "MatchingConditionError",
    "SingularMatrixError",
    "SwitchMracError",
    "TemporalOrderError",
    "__version__",
]
