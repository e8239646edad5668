"""Two-stage kernel estimation of a regression-error density, with a
certification lab that turns the estimator's claimed rates and bounds
into reproducible pass/fail experiments."""

from .bandwidth import (
    PowerSchedule,
    ScheduleReport,
    density_exponent_bound,
    regression_exponent_bound,
    slow_decay_trend,
    validate_density_bandwidth,
    validate_regression_bandwidth,
)
from .data import Dataset, TrimRegion, read_dataset_csv, trim_region, write_dataset_csv
from .decomposition import (
    AuxiliaryStats,
    DecompositionTerms,
    ExpansionSums,
    FrozenDesign,
    auxiliary_stats,
    bias_component,
    bias_mean,
    bias_split,
    conditional_error_moment,
    conditional_expansion_sums,
    decomposition_terms,
    dump_diagnostics,
    expansion_sums,
    frozen_design,
    noise_component,
    remainder_integral,
    taylor_terms,
)
from .density import DensityCurve, kde, mise, read_density_csv, residual_density, write_density_csv
from .errors import (
    AllTrimmed,
    ConfigError,
    DegenerateDenominator,
    DegenerateReplications,
    DimensionError,
    GridError,
    InsufficientReplications,
    InvalidBandwidth,
    InvalidOrder,
    LogDomainError,
    QuadratureError,
    ResdensError,
)
from .experiments import TARGETS, ExperimentConfig, TargetResult, fit_rate, run_target
from .kernels import (
    MomentReport,
    ProductKernel,
    UnivariateKernel,
    continuity_scan,
    kernel_derivative_moment,
    product_kernel,
    univariate_kernel,
    validate_kernel_conditions,
)
from .quadrature import QuadratureSpec, adaptive_simpson, gauss_legendre, integrate, integrate_box
from .simulate import (
    DGPSpec,
    covariate_density,
    default_dgp,
    dgp_from_flat,
    error_density,
    generate_sample,
    regression_function,
)
from .smoothing import (
    ResidualFit,
    dependency_set,
    fit_residuals,
    loo_density,
    loo_regression,
    pair_kernel_matrix,
    pooled_density,
    smoothed_density,
)

__version__ = "0.1.0"
