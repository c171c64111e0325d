"""pipecg: deep-pipelined conjugate gradient solvers at desk scale.

The package implements the numerically stable l-length pipelined CG method
next to the variants it is measured against (the original pipelined
formulation, Ghysels' single-reduction pipelined CG, D-Lanczos and classic
CG), with per-iteration finite-precision diagnostics, Chebyshev-shifted
auxiliary bases, block Jacobi preconditioning, and an analytic communication
cost model.
"""

from .diagnostics import (
    BasisArchive,
    IterationTrace,
    lanczos_deviation,
    orthogonality_loss,
    residual_gap,
    stagnation_point,
    true_residual,
)
from .errors import (
    BreakdownSignal,
    DefinitenessError,
    DimensionMismatchError,
    MatrixFormatError,
    NotSymmetricError,
    NumericError,
    ParseError,
    PipecgError,
)
from .perfmodel import MachineModel, iteration_time, speedup_curve
from .precon import Preconditioner
from .precon import build as build_preconditioner
from .solvers import (
    OperationCounts,
    SolveResult,
    SolverConfig,
    op_counters,
    solve,
    solve_preconditioned,
)
from .sparsekit import (
    CsrMatrix,
    axpy,
    diag_matrix,
    dot,
    identity,
    laplace2d,
    norm2,
    read_matrix_market,
    spmv,
    write_matrix_market,
)
from .spectral import ShiftSet, SpectrumEstimate, chebyshev_shifts, power_method

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix",
    "spmv",
    "axpy",
    "dot",
    "norm2",
    "identity",
    "diag_matrix",
    "laplace2d",
    "read_matrix_market",
    "write_matrix_market",
    "Preconditioner",
    "build_preconditioner",
    "SpectrumEstimate",
    "ShiftSet",
    "power_method",
    "chebyshev_shifts",
    "SolverConfig",
    "SolveResult",
    "OperationCounts",
    "solve",
    "solve_preconditioned",
    "op_counters",
    "IterationTrace",
    "BasisArchive",
    "true_residual",
    "orthogonality_loss",
    "lanczos_deviation",
    "residual_gap",
    "stagnation_point",
    "MachineModel",
    "iteration_time",
    "speedup_curve",
    "PipecgError",
    "DimensionMismatchError",
    "MatrixFormatError",
    "NotSymmetricError",
    "DefinitenessError",
    "NumericError",
    "ParseError",
    "BreakdownSignal",
    "__version__",
]
