"""Solver configuration, result container and operation counters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PipecgError
from ..precon import Preconditioner
from ..spectral import ShiftSet

__all__ = ["VARIANTS", "PIPELINED_VARIANTS", "SolverConfig", "OperationCounts", "SolveResult", "op_counters"]

VARIANTS = ("cg", "dlanczos", "pcg_ghysels", "plcg_original", "plcg_stable")
PIPELINED_VARIANTS = ("plcg_original", "plcg_stable")


@dataclass
class SolverConfig:
    """Everything a solve needs besides the operator and right-hand side.

    ``l`` is the pipeline depth and must be 1 for the non-pipelined variants
    (their shifts are ignored).  ``economize_dots`` enables the symmetric
    Gram economization that holds the dot-product count at l + 1 per
    iteration; disabling it computes the full 2l + 1 window for
    cross-checking.  ``inject_breakdown_at`` forces the Gram square-root
    argument negative at the given pipeline iteration (test hook for the
    restart path).
    """

    variant: str = "plcg_stable"
    l: int = 1
    max_iterations: int = 1000
    tau: float = 1e-10
    shifts: ShiftSet | None = None
    precon: Preconditioner | None = None
    max_restarts: int = 10
    record_diagnostics: bool = False
    diag_interval: int = 10
    economize_dots: bool = True
    inject_breakdown_at: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PipecgError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.l < 1:
            raise PipecgError("pipeline length l must be >= 1")
        if self.variant not in PIPELINED_VARIANTS and self.l != 1:
            raise PipecgError(f"variant {self.variant} is not pipelined; l must be 1")
        if not self.tau > 0.0:
            raise PipecgError("tolerance tau must be positive")
        if self.max_iterations < 1:
            raise PipecgError("max_iterations must be >= 1")
        if self.max_restarts < 0:
            raise PipecgError("max_restarts must be >= 0")
        if self.diag_interval < 1:
            raise PipecgError("diag_interval must be >= 1")
        if self.shifts is not None and len(self.shifts) != self.l:
            raise PipecgError(f"shift set has length {len(self.shifts)}, pipeline length is {self.l}")

    def resolved_shifts(self) -> ShiftSet:
        return self.shifts if self.shifts is not None else ShiftSet.zeros(self.l)


@dataclass
class OperationCounts:
    """Work and storage accounting for one solve.

    ``spmv`` counts the algorithmic products (one per pipeline iteration);
    setup products (initial residual, restart rebuilds) and diagnostic
    products are tracked separately so the per-iteration assertions from the
    cost table stay exact integers.  ``live_vector_peak`` is the high-water
    mark of retained basis/search vectors, excluding x and b.
    """

    spmv: int = 0
    spmv_setup: int = 0
    spmv_diagnostic: int = 0
    dots: int = 0
    dots_setup: int = 0
    axpys: int = 0
    precon_applies: int = 0
    iterations: int = 0
    live_vector_peak: int = 0
    dots_by_iteration: list[int] = field(default_factory=list)

    def dots_per_iteration_steady(self) -> int:
        """The constant dot count once the pipeline is warm (else -1)."""
        if not self.dots_by_iteration:
            return -1
        tail = self.dots_by_iteration[-1]
        return tail


@dataclass
class SolveResult:
    x: np.ndarray
    status: str  # converged | max_iterations | breakdown_unrecovered
    iterations: int
    restarts: int
    final_recursive_resnorm: float
    final_true_resnorm: float
    r0_norm: float
    trace: object | None = None
    counts: OperationCounts | None = None
    archive: object | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def op_counters(result: SolveResult) -> OperationCounts:
    """Operation counts recorded during the solve."""
    if result.counts is None:
        raise PipecgError("solve ran without counting enabled")
    return result.counts
