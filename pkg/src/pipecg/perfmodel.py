"""Analytic per-iteration time model for the CG variants.

Models only the two costs that dominate at scale: the global reduction and
the sparse matrix-vector product.  Per the cost table, classic CG pays two
reductions plus one product in series; the pipelined variants hide the
reduction behind l products, paying max(glred / l, spmv).  Local axpy and
dot flop time is neglected (assumed to scale perfectly).  The constants are
configuration, not measurements: the defaults are chosen so the qualitative
strong-scaling picture (classic CG flattening while deeper pipelines keep
scaling) appears for node counts in the tens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import PipecgError

__all__ = ["MachineModel", "iteration_time", "speedup_curve", "crossover_nodes"]

_TIMED_VARIANTS = ("cg", "pcg_ghysels", "plcg_original", "plcg_stable")


@dataclass(frozen=True)
class MachineModel:
    """Cost parameters: reduction latency model and spmv strong scaling.

    ``t_glred(p) = glred_base + glred_log_coeff * log2(p)`` and
    ``t_spmv(p) = t_spmv * (ref_nodes / p) ** spmv_exponent``.  ``t_prec`` is
    an additive per-iteration preconditioner cost (it is why very long
    pipelines stop paying off on preconditioned problems).
    """

    t_spmv: float = 1e-4
    glred_base: float = 5e-6
    glred_log_coeff: float = 2e-6
    spmv_exponent: float = 1.0
    t_prec: float = 0.0
    ref_nodes: int = 1
    nodes: int = 1

    def __post_init__(self):
        if self.t_spmv <= 0.0:
            raise PipecgError("spmv time must be positive")
        if self.glred_base < 0.0 or self.glred_log_coeff < 0.0 or self.t_prec < 0.0:
            raise PipecgError("model coefficients must be nonnegative")
        if self.ref_nodes < 1 or self.nodes < 1:
            raise PipecgError("node counts must be >= 1")

    def t_glred(self, p: int) -> float:
        return self.glred_base + self.glred_log_coeff * math.log2(p)

    def t_spmv_at(self, p: int) -> float:
        return self.t_spmv * (self.ref_nodes / p) ** self.spmv_exponent


def iteration_time(model: MachineModel, variant: str, l: int = 1, nodes: int | None = None) -> float:
    """Modeled seconds per iteration at the given node count.

    cg: 2 glred + spmv; pcg_ghysels: max(glred, spmv); pipelined depth l:
    max(glred / l, spmv).  The preconditioner cost is additive.
    """
    if variant not in _TIMED_VARIANTS:
        raise PipecgError(f"unknown variant {variant!r}; expected one of {_TIMED_VARIANTS}")
    if l < 1:
        raise PipecgError("pipeline length l must be >= 1")
    p = model.nodes if nodes is None else nodes
    g = model.t_glred(p)
    s = model.t_spmv_at(p)
    if variant == "cg":
        core = 2.0 * g + s
    elif variant == "pcg_ghysels":
        core = max(g, s)
    else:
        core = max(g / l, s)
    return core + model.t_prec


def speedup_curve(model: MachineModel, variant: str, l: int, node_range, iters: int = 1):
    """Total modeled time at each node count, normalized to single-node CG.

    Returns a list of (nodes, speedup).  The iteration count cancels in the
    ratio but is accepted for reporting absolute times elsewhere.
    """
    nodes = list(node_range)
    if not nodes or any(b <= a for a, b in zip(nodes, nodes[1:])) or nodes[0] < 1:
        raise PipecgError("node_range must be nonempty and strictly ascending, starting at >= 1")
    if iters < 1:
        raise PipecgError("iters must be >= 1")
    baseline = iters * iteration_time(model, "cg", 1, nodes=1)
    return [(p, baseline / (iters * iteration_time(model, variant, l, nodes=p))) for p in nodes]


def crossover_nodes(model: MachineModel, l_slow: int, l_fast: int, max_nodes: int = 4096) -> int | None:
    """Smallest node count where depth ``l_fast`` beats depth ``l_slow``.

    Exists once the reduction cost outgrows the shrinking spmv; returns None
    if no crossover occurs up to ``max_nodes``.
    """
    p = 1
    while p <= max_nodes:
        slow = iteration_time(model, "plcg_stable", l_slow, nodes=p)
        fast = iteration_time(model, "plcg_stable", l_fast, nodes=p)
        if fast < slow:
            return p
        p *= 2
    return None
