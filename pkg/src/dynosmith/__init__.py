"""dynosmith: sparse ODE identification from noisy trajectories.

The pipeline smooths noisy state measurements (batch Kalman smoothing with
automatic hyperparameter selection, total-variation differentiation,
Savitzky-Golay, or plain finite differences), evaluates a cubic monomial
library on the smoothed states, and fits sparsity-constrained dynamics by
exact best-subset regression with bagged ensembling. A benchmark harness
sweeps eight dynamical systems over noise levels and data durations with
fully deterministic, resumable experiment records.
"""

__version__ = "0.1.0"

from .exceptions import (
    ConfigurationError,
    DegenerateSignalError,
    DivergenceError,
    NumericalError,
)
from .gcv import GcvConfig, GcvResult, gcv_select_rho, smooth_with_mask
from .harness import ExperimentConfig, TrialRecord, report, run_grid, run_trial
from .library import CoefficientMatrix, FeatureLibrary, evaluate_library
from .metrics import (
    TrialScore,
    coefficient_f1,
    coefficient_mae,
    score_trial,
    simulation_score,
)
from .sindy import (
    EnsembleResult,
    FixedSparsityRegressor,
    ModelSimulation,
    ensemble_fit,
    fit_fixed_sparsity,
    simulate_model,
)
from .smoothing import (
    FiniteDifferenceSmoother,
    KalmanSmoother,
    SavitzkyGolaySmoother,
    SmoothResult,
    TotalVariationSmoother,
    finite_difference,
    kalman_smooth,
    savitzky_golay,
    tv_smooth,
)
from .systems import (
    MeasurementSet,
    OdeSystem,
    SYSTEM_NAMES,
    Trajectory,
    add_noise,
    get_system,
    integrate,
    sample_initial_condition,
    target_sparsity,
    true_support,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "DegenerateSignalError",
    "DivergenceError",
    "NumericalError",
    "GcvConfig",
    "GcvResult",
    "gcv_select_rho",
    "smooth_with_mask",
    "ExperimentConfig",
    "TrialRecord",
    "report",
    "run_grid",
    "run_trial",
    "CoefficientMatrix",
    "FeatureLibrary",
    "evaluate_library",
    "TrialScore",
    "coefficient_f1",
    "coefficient_mae",
    "score_trial",
    "simulation_score",
    "EnsembleResult",
    "FixedSparsityRegressor",
    "ModelSimulation",
    "ensemble_fit",
    "fit_fixed_sparsity",
    "simulate_model",
    "FiniteDifferenceSmoother",
    "KalmanSmoother",
    "SavitzkyGolaySmoother",
    "SmoothResult",
    "TotalVariationSmoother",
    "finite_difference",
    "kalman_smooth",
    "savitzky_golay",
    "tv_smooth",
    "MeasurementSet",
    "OdeSystem",
    "SYSTEM_NAMES",
    "Trajectory",
    "add_noise",
    "get_system",
    "integrate",
    "sample_initial_condition",
    "target_sparsity",
    "true_support",
]
