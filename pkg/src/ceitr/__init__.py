"""Cost-effective individualized treatment rules from censored cost and survival data."""

from .core import (
    Accrual,
    CalibrationError,
    CEConfig,
    Cohort,
    DegenerateWeightError,
    FitFailureError,
    InvalidArgumentError,
    InvalidStateError,
    PartitionGrid,
    PotentialOutcomes,
    SeparationWarning,
    WeightVector,
    build_uniform_grid,
)
from .dgp import DGPScenario, assemble_cohort
from .nuisance import NuisanceSpec, fit_nuisance
from .weights import WeightMethod, compute_weights

__version__ = "0.1.0"
