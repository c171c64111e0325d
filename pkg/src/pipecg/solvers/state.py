"""Working state for the pipelined solvers.

Storage here is deliberately explicit: each basis is a ring buffer holding
only the window of vectors the recurrences and dot products still need, and
every vector entering or leaving solver state passes through a ledger so the
live-vector high-water mark can be asserted against the method's storage
budget.  Dot products are initiated into a FIFO and consumed l iterations
later, mirroring how a distributed backend would overlap the reductions.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import PipecgError

__all__ = ["VectorLedger", "Ring", "GramBand", "TridiagFactors", "BasisWindow", "SolveState"]


class VectorLedger:
    """Counts full-length vectors retained by the solver (x and b excluded)."""

    def __init__(self):
        self.live = 0
        self.peak = 0

    def acquire(self, k=1):
        self.live += k
        if self.live > self.peak:
            self.peak = self.live

    def release(self, k=1):
        self.live -= k
        if self.live < 0:
            raise PipecgError("vector ledger went negative; accounting bug")


class Ring:
    """Index-addressed window of basis vectors with explicit eviction."""

    def __init__(self, ledger: VectorLedger, name: str):
        self._slots: dict[int, np.ndarray] = {}
        self._ledger = ledger
        self.name = name

    def __contains__(self, j):
        return j in self._slots

    def __getitem__(self, j) -> np.ndarray:
        try:
            return self._slots[j]
        except KeyError:
            raise PipecgError(f"basis {self.name} no longer holds vector {j}") from None

    def put(self, j, vec, counted=False):
        """Adopt ``vec`` as vector j.  ``counted`` marks buffers the caller
        already charged to the ledger (e.g. a pending spmv result)."""
        if j in self._slots:
            raise PipecgError(f"basis {self.name} already holds vector {j}")
        self._slots[j] = vec
        if not counted:
            self._ledger.acquire()

    def pop(self, j) -> np.ndarray:
        vec = self._slots.pop(j)
        self._ledger.release()
        return vec

    def take(self, j) -> np.ndarray:
        """Remove vector j without releasing it; the caller keeps the buffer
        live (re-adopt it elsewhere with ``put(..., counted=True)``)."""
        return self._slots.pop(j)

    def evict_below(self, j):
        for k in [k for k in self._slots if k < j]:
            del self._slots[k]
            self._ledger.release()

    def indices(self):
        return sorted(self._slots)

    def clear(self):
        self._ledger.release(len(self._slots))
        self._slots.clear()

    def __len__(self):
        return len(self._slots)


class GramBand:
    """Banded storage of the transformation matrix G.

    Entries live within 2l+1 diagonals of the upper triangle.  In economized
    mode only the rows within l of the diagonal (plus the boundary row m - l)
    are stored per column; the outer band is recovered through the symmetry
    g[j, m] == g[m - l, j + l], which holds because A is symmetric.  Reads of
    mirrored entries always land on columns whose Cholesky correction has
    already run, so the fetched value is a finalized G entry.
    """

    def __init__(self, l: int, economized: bool):
        self.l = l
        self.economized = economized
        self._data: dict[tuple[int, int], float] = {}

    def set(self, j, m, value):
        if not (m - 2 * self.l <= j <= m and j >= 0):
            raise PipecgError(f"Gram entry ({j}, {m}) outside the 2l+1 band")
        self._data[(j, m)] = float(value)

    def get(self, j, m) -> float:
        hit = self._data.get((j, m))
        if hit is not None:
            return hit
        if self.economized and j < m - self.l:
            return self._data[(m - self.l, j + self.l)]
        raise PipecgError(f"Gram entry ({j}, {m}) is not available")

    def stored_column(self, m) -> dict[int, float]:
        return {j: v for (j, mm), v in self._data.items() if mm == m}

    def full_column(self, m) -> dict[int, float]:
        """Column m over the whole band, resolving mirrored entries."""
        out = {}
        for j in range(max(0, m - 2 * self.l), m + 1):
            out[j] = self.get(j, m)
        return out

    def clear(self):
        self._data.clear()


class TridiagFactors:
    """Lanczos tridiagonal entries and the running LU / residual scalars."""

    def __init__(self):
        self.gamma: list[float] = []
        self.delta: list[float] = []
        self.eta: list[float] = []
        self.lam: list[float] = []
        self.zeta: list[float] = []

    def delta_at(self, j) -> float:
        return self.delta[j] if j >= 0 else 0.0

    def clear(self):
        self.gamma.clear()
        self.delta.clear()
        self.eta.clear()
        self.lam.clear()
        self.zeta.clear()


class BasisWindow:
    """Ring buffers for the bases plus Gram storage and the dot FIFO.

    The stable variant keeps rings for every intermediate basis k = 0..l; the
    original variant only has the orthonormal basis (k = 0) and the auxiliary
    basis (k = l).
    """

    def __init__(self, n, l, layout, economized, ledger: VectorLedger):
        if layout not in ("stable", "original"):
            raise PipecgError(f"unknown basis layout {layout!r}")
        self.n = n
        self.l = l
        self.layout = layout
        self.ledger = ledger
        ks = range(l + 1) if layout == "stable" else (0, l)
        self.rings = {k: Ring(ledger, f"z({k})") for k in ks}
        self.gram = GramBand(l, economized)
        self.inflight: deque[tuple[int, dict[int, float]]] = deque()
        self.near_breakdowns: list[tuple[int, float]] = []

    @property
    def v_ring(self) -> Ring:
        return self.rings[0]

    @property
    def z_ring(self) -> Ring:
        return self.rings[self.l]

    def reset(self):
        for ring in self.rings.values():
            ring.clear()
        self.gram.clear()
        self.inflight.clear()


class SolveState:
    """Iterate, search direction and restart bookkeeping for one solve."""

    def __init__(self, x: np.ndarray, r0_norm: float):
        self.x = x
        self.p: np.ndarray | None = None
        self.r0_norm = r0_norm
        self.u_ring: Ring | None = None  # preconditioned variant only
        self.iteration = 0
        self.restarts = 0
