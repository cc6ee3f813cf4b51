"""Linear extrapolation of alpha-stable random fields.

The main entry points are re-exported here; see the submodules for the
full API.
"""

__version__ = "0.1.0"

from .covariation import (
    SiteSystem,
    covariation_kernel,
    covariation_subgaussian,
    covariation_system,
    estimate_covariation_flom,
    full_dimensionality_check,
    gradient_scale_alpha,
    scale_of_combination,
    sigma_from_flom,
    skewness_of_combination,
)
from .exceptions import (
    ConvergenceError,
    DegenerateSystemError,
    FactorizationError,
    GridCoverageWarning,
    NonUniqueError,
    RealizationError,
    SingularSystemError,
    StableFieldError,
    UnsupportedModelError,
)
from .experiments import BenchmarkConfig, run_benchmark, summary_stats
from .field_models import (
    CovarianceModel,
    DiscreteMeasureGrid,
    LevySheet,
    MovingAverage,
    OrnsteinUhlenbeck,
    SubGaussian,
    bump_kernel,
    grid_for_model,
    simulate_field,
    simulate_gaussian_field,
    simulate_subgaussian_field,
)
from .predictors import (
    ConditionalSimulator,
    PredictionProblem,
    PredictorWeights,
    col_weights,
    conditional_simulate_subgaussian,
    lsl_weights,
    mcl_weights,
    ml_weights_subgaussian,
    solve_weights,
    weight_field,
)
from .stable_core import RngStream, StableParams, moment_constant, sample_stable, sample_subgaussian_A, signed_power
