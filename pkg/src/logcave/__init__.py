"""Log-concave density estimation with an optional mode constraint."""
from .augment import AugmentedSample, augment
from .characterization import (
    CharacterizationReport,
    Crossings,
    crossing_diagnostics,
    verify_constrained,
    verify_unconstrained,
)
from .errors import (
    DegenerateSample,
    DomainMismatch,
    Inconsistent,
    LogcaveError,
    ModeInfeasible,
    NonConvergence,
    TooLarge,
)
from .geometry import (
    LRProcesses,
    PwlConcave,
    SortedSample,
    cdf,
    exp_integral,
    j_value,
    knot_class,
    lr_processes,
    mean_var,
    quantile,
)
from .mle import Fit, SolverOptions, fit_constrained, fit_unconstrained, lr_statistic
from .oracle import OracleResult, fit_exact_small

__all__ = [
    "AugmentedSample", "augment", "CharacterizationReport", "Crossings", "crossing_diagnostics",
    "verify_constrained", "verify_unconstrained", "DegenerateSample", "DomainMismatch",
    "Inconsistent", "LogcaveError", "ModeInfeasible", "NonConvergence", "TooLarge",
    "LRProcesses", "PwlConcave", "SortedSample", "cdf", "exp_integral", "j_value", "knot_class",
    "lr_processes", "mean_var", "quantile", "Fit", "SolverOptions", "fit_constrained",
    "fit_unconstrained", "lr_statistic", "OracleResult", "fit_exact_small",
]
