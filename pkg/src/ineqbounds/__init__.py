"""Sharp bounds on inequality indices from grouped and interval-censored data."""

from .core import (
    BoundsResult,
    ConstraintSet,
    GroupedTable,
    GroupMean,
    IndexSpec,
    IntervalObservation,
    LorenzPoint,
    RawRow,
    TotalMean,
    baseline_gini,
    gini,
    hoover,
    quantile_ratio,
)
from .inference import BootstrapConfig, BootstrapResult, bootstrap_bounds
from .oracle import OracleConfig, brute_force_bounds
from .scenario1 import (
    bounds_1,
    bounds_1b,
    gini_bounds_1a,
    gini_bounds_1a_dinkelbach,
    hoover_bounds,
    quantile_ratio_bounds_1a,
)
from .scenario2 import IntervalData, gini_bounds_2, gini_bounds_2_shares

__all__ = [
    "BootstrapConfig", "BootstrapResult", "BoundsResult", "ConstraintSet", "GroupMean",
    "GroupedTable", "IndexSpec", "IntervalData", "IntervalObservation", "LorenzPoint",
    "OracleConfig", "RawRow", "TotalMean", "baseline_gini", "bootstrap_bounds", "bounds_1",
    "bounds_1b", "brute_force_bounds", "gini", "gini_bounds_1a", "gini_bounds_1a_dinkelbach",
    "gini_bounds_2", "gini_bounds_2_shares", "hoover", "hoover_bounds", "quantile_ratio",
    "quantile_ratio_bounds_1a",
]
__version__ = "0.1.0"
