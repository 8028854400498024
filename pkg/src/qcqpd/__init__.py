"""Distributed first-order solver for convex quadratically constrained
quadratic programs, with reproducible benchmark-instance generators and
optimality diagnostics."""

from .core import (
    SolverConfig,
    SolveReport,
    WeightMode,
    analytic_comm_stats,
    compute_step_size,
    solve,
    update_epsilons,
    update_weights,
)
from .diagnostics import (
    OracleError,
    ResidualReport,
    TerminationStatus,
    classify_termination,
    compute_residuals,
    kkt_residual_max,
    reference_solve_small,
    test_set_accuracy,
)
from .dist import (
    ColumnPartition,
    CommStats,
    dist_matvec,
    dist_quadform,
    dist_transpose_matvec,
    partition_columns,
)
from .generators import (
    EIGENVALUE_RANGES,
    Kernel,
    MklSpec,
    RandomQcqpSpec,
    build_mkl_qcqp,
    gen_infeasible,
    gen_random_qcqp,
    gen_twonorm,
    gen_unbounded,
    gram_matrix,
    kernel_eval,
    load_csv_dataset,
)
from .model import (
    ProblemFormatError,
    ProblemNorms,
    QcqpProblem,
    ValidationReport,
    compute_norms,
    load_problem,
    save_problem,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "QcqpProblem",
    "ProblemNorms",
    "ValidationReport",
    "ProblemFormatError",
    "validate",
    "compute_norms",
    "load_problem",
    "save_problem",
    "ColumnPartition",
    "CommStats",
    "partition_columns",
    "dist_matvec",
    "dist_quadform",
    "dist_transpose_matvec",
    "SolverConfig",
    "SolveReport",
    "WeightMode",
    "solve",
    "compute_step_size",
    "update_epsilons",
    "update_weights",
    "analytic_comm_stats",
    "TerminationStatus",
    "ResidualReport",
    "OracleError",
    "compute_residuals",
    "classify_termination",
    "kkt_residual_max",
    "reference_solve_small",
    "test_set_accuracy",
    "RandomQcqpSpec",
    "MklSpec",
    "Kernel",
    "EIGENVALUE_RANGES",
    "gen_random_qcqp",
    "gen_infeasible",
    "gen_unbounded",
    "gen_twonorm",
    "kernel_eval",
    "gram_matrix",
    "build_mkl_qcqp",
    "load_csv_dataset",
]
