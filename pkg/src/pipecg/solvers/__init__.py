"""Solver front door: variant dispatch plus input validation."""

from __future__ import annotations

import numpy as np

from ..errors import DefinitenessError, PipecgError
from ..sparsekit import CsrMatrix, as_vector
from .classic import run_cg, run_dlanczos, run_pcg_ghysels
from .config import PIPELINED_VARIANTS, VARIANTS, OperationCounts, SolverConfig, SolveResult, op_counters
from .pipeline_ops import (
    EPS,
    gram_finalize,
    lu_advance,
    original_basis_update,
    solution_update,
    stable_basis_update,
    tridiag_update,
)
from .pipelined import PipelinedEngine
from .state import BasisWindow, Ring, SolveState, TridiagFactors, VectorLedger

__all__ = [
    "solve",
    "solve_preconditioned",
    "SolverConfig",
    "SolveResult",
    "OperationCounts",
    "op_counters",
    "VARIANTS",
    "PIPELINED_VARIANTS",
    "EPS",
    "BasisWindow",
    "TridiagFactors",
    "SolveState",
    "Ring",
    "VectorLedger",
    "gram_finalize",
    "tridiag_update",
    "lu_advance",
    "stable_basis_update",
    "original_basis_update",
    "solution_update",
    "PipelinedEngine",
]


def _validated(a: CsrMatrix, b, x0):
    b = as_vector(b, a.n, "b")
    x0 = np.zeros(a.n) if x0 is None else as_vector(x0, a.n, "x0")
    diag = a.diagonal()
    bad = np.nonzero(diag <= 0.0)[0]
    if bad.size:
        raise DefinitenessError(f"diagonal entry {bad[0]} is not positive; matrix cannot be SPD")
    return b, x0


def solve(a: CsrMatrix, b, x0=None, cfg: SolverConfig | None = None) -> SolveResult:
    """Run the configured variant on the SPD system A x = b.

    Stops when the recursive residual norm drops below tau relative to the
    initial residual norm; a final true residual is always recomputed and
    reported on the result.  Square-root breakdowns in the pipelined
    variants restart from the current iterate up to ``max_restarts`` times.
    """
    cfg = cfg or SolverConfig()
    b, x0 = _validated(a, b, x0)
    if cfg.precon is not None:
        if cfg.variant != "plcg_stable":
            raise PipecgError("preconditioning is only supported for the stable pipelined variant")
        if cfg.precon.n != a.n:
            raise PipecgError("preconditioner size does not match the operator")
    if cfg.variant == "cg":
        return run_cg(a, b, x0, cfg)
    if cfg.variant == "dlanczos":
        return run_dlanczos(a, b, x0, cfg)
    if cfg.variant == "pcg_ghysels":
        return run_pcg_ghysels(a, b, x0, cfg)
    return PipelinedEngine(a, b, x0, cfg).run()


def solve_preconditioned(a: CsrMatrix, b, x0=None, cfg: SolverConfig | None = None) -> SolveResult:
    """Stable pipelined solve with M-inner-product Gram computations."""
    cfg = cfg or SolverConfig()
    if cfg.precon is None:
        raise PipecgError("solve_preconditioned requires cfg.precon")
    if cfg.variant != "plcg_stable":
        raise PipecgError("the preconditioned pipeline exists for plcg_stable only")
    return solve(a, b, x0, cfg)
