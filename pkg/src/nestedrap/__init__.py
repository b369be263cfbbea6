"""Separable convex resource allocation with nested lower and upper constraints."""

from .model import (
    CONTINUOUS,
    INTEGER,
    AdjustPreconditionError,
    Allocation,
    BoundOrderViolation,
    DomainError,
    FeasibilityReport,
    Infeasible,
    InfeasibleSubproblem,
    IterationLimitExceeded,
    NegativeBound,
    NestedInstance,
    NonConvexDetected,
    NonMonotoneSigma,
    NotIntegral,
    ObjectiveSpec,
    RapNcError,
    ScaledInfeasible,
    SizeLimitExceeded,
    SolverConfig,
    SolveStats,
    ValidationResult,
    WindowInfeasible,
    check_feasibility,
    crash,
    custom,
    evaluate,
    fuel,
    is_feasible,
    linear,
    quadratic,
    quartic,
    validate,
)
from .mda import (
    KktCertificate,
    QuadSolutionSet,
    Violation,
    adjust,
    mda,
    scale_factor,
    solve,
    solve_continuous,
    solve_integer,
    solve_scaled,
    verify_kkt,
)
from .rap import (
    PassThrough,
    RapSubproblem,
    clamp_shortcut,
    solve_rap_convex,
    solve_rap_linear,
    solve_rap_quadratic,
)

__version__ = "0.1.0"

__all__ = [
    "CONTINUOUS",
    "INTEGER",
    "AdjustPreconditionError",
    "Allocation",
    "BoundOrderViolation",
    "DomainError",
    "FeasibilityReport",
    "Infeasible",
    "InfeasibleSubproblem",
    "IterationLimitExceeded",
    "NegativeBound",
    "NestedInstance",
    "NonConvexDetected",
    "NonMonotoneSigma",
    "NotIntegral",
    "ObjectiveSpec",
    "RapNcError",
    "ScaledInfeasible",
    "SizeLimitExceeded",
    "SolverConfig",
    "SolveStats",
    "ValidationResult",
    "WindowInfeasible",
    "check_feasibility",
    "crash",
    "custom",
    "evaluate",
    "fuel",
    "is_feasible",
    "linear",
    "quadratic",
    "quartic",
    "validate",
    "KktCertificate",
    "QuadSolutionSet",
    "Violation",
    "adjust",
    "mda",
    "scale_factor",
    "solve",
    "solve_continuous",
    "solve_integer",
    "solve_scaled",
    "verify_kkt",
    "PassThrough",
    "RapSubproblem",
    "clamp_shortcut",
    "solve_rap_convex",
    "solve_rap_linear",
    "solve_rap_quadratic",
]
