"""Interior-point (log-barrier) solver for state- and mixed-constrained optimal control."""

from ._core import (
    BoundednessReport,
    ConfigError,
    ContinuationConfig,
    ContinuationRun,
    InteriorityError,
    IoError,
    OcpProblem,
    SolverError,
    StageDiagnostics,
    boundedness_trail,
    custom_problem,
    export_trajectory,
    load_trajectory,
    log_barrier,
    log_barrier_deriv,
    lq_example,
    planned_stage_count,
    problem_by_name,
    problem_names,
    robbins_problem,
    run,
    run_cli,
    smoothing_residual,
    summary_yaml,
    trajectory,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
