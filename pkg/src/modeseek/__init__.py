"""Mode-seeking hill-climbing algorithms checked against a gradient-flow oracle."""

from ._backend import BACKEND, COMPILED
from .density import (
    DensityModel,
    GaussianMixture,
    ModeList,
    SmoothnessBounds,
    bimodal_1d,
    estimate_bounds,
    eval_f,
    eval_grad,
    eval_hess,
    eval_normalized_grad,
    find_modes,
    load_mixture,
    make_grid,
    reference_mixture,
    sample,
    save_mixture,
    standard_normal,
)
from .errors import (
    ConfigError,
    DimensionError,
    IntegrationError,
    IsolatedQueryError,
    LevelTooHighError,
    ModeseekError,
    NearCriticalError,
    SolverError,
    StepUndefinedError,
)
from .flow import FlowConfig, assign_basin, assign_basins, integrate_flow, trajectory_hausdorff
from .harness import ExperimentConfig, ExperimentReport, emit_report, match_modes, parse_report, run_experiment
from .kde import (
    DEFAULT_PROFILE,
    EPANECHNIKOV,
    FLAT,
    TRIWEIGHT,
    Kde,
    KernelProfile,
    kde_eval,
    kde_grad,
    kde_hess,
    mean_shift_vector,
    scott_bandwidth,
    shadow,
    sup_deviation,
)
from .medoid import (
    CoveringRadius,
    MedoidSet,
    covering_radius,
    medoid_max_shift,
    medoid_max_slope_shift,
    medoid_shift,
    quick_shift,
    radius_query,
)
from .shift import (
    ShiftConfig,
    StepReport,
    euler_shift,
    euler_shift_variant,
    level_shift,
    line_search_shift,
    max_shift,
    max_slope_shift,
    mean_shift,
    step_diagnostics,
)
from .trajectory import Status, Terminal, Trajectory, read_trajectory, write_trajectory

__version__ = "0.1.0"
