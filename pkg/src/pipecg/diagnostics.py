"""Finite-precision observables: residual norms, orthogonality, Lanczos defect.

These are the quantities the convergence figures plot.  The true residual is
always recomputed fresh (its matrix product is counted separately from the
solver's algorithmic products).  The basis-dependent metrics need the full
vector history, which is only kept when a solve runs with diagnostics
recording enabled; both metrics are accumulated incrementally so a checkpoint
costs one matrix product and a handful of long dots, not a re-assembly of the
whole Gram matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, PipecgError
from .sparsekit import CsrMatrix, as_vector

__all__ = [
    "TraceRow",
    "IterationTrace",
    "BasisArchive",
    "true_residual",
    "orthogonality_loss",
    "lanczos_deviation",
    "residual_gap",
    "stagnation_point",
]

EVENTS = ("", "breakdown", "restart", "converged")


@dataclass
class TraceRow:
    iteration: int
    recursive_resnorm: float
    true_resnorm: float
    orth_loss: float | None = None
    lanczos_dev: float | None = None
    event: str = ""


class IterationTrace:
    """Per-iteration diagnostics rows, strictly increasing in iteration."""

    def __init__(self):
        self.rows: list[TraceRow] = []

    def append(self, recursive_resnorm, true_resnorm, orth_loss=None, lanczos_dev=None, event=""):
        if event not in EVENTS:
            raise PipecgError(f"unknown trace event {event!r}")
        if not (math.isfinite(recursive_resnorm) and recursive_resnorm >= 0.0):
            raise PipecgError(f"recursive residual norm must be finite and >= 0, got {recursive_resnorm}")
        if not (math.isfinite(true_resnorm) and true_resnorm >= 0.0):
            raise PipecgError(f"true residual norm must be finite and >= 0, got {true_resnorm}")
        row = TraceRow(len(self.rows), float(recursive_resnorm), float(true_resnorm), orth_loss, lanczos_dev, event)
        self.rows.append(row)
        return row

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def last(self) -> TraceRow:
        return self.rows[-1]

    def recursive_norms(self):
        return np.array([r.recursive_resnorm for r in self.rows])

    def true_norms(self):
        return np.array([r.true_resnorm for r in self.rows])

    def events(self):
        return [r.event for r in self.rows]


class BasisArchive:
    """Optional full history of the Krylov basis, tridiagonal entries, the
    auxiliary basis and the finalized Gram columns (diagnostic mode only;
    memory grows as O(n * iterations)).

    Metric caches advance lazily: each basis vector's Gram column and Lanczos
    defect column are computed once, when first needed.
    """

    def __init__(self, n: int):
        self.n = n
        self._cap = 16
        self._v = np.empty((self._cap, n))
        self.count = 0
        self.gammas: list[float] = []
        self.deltas: list[float] = []
        self.z_vectors: list[np.ndarray] = []
        self.p_vectors: list[np.ndarray] = []
        self.gram_columns: dict[int, dict[int, float]] = {}
        # orthogonality cache: gram[i, j] = (v_i, v_j) for i, j < _gram_done
        self._gram = np.zeros((self._cap, self._cap))
        self._gram_done = 0
        # Lanczos defect cache: sum of squared column norms of A V - V T
        self._dev_sumsq = 0.0
        self._dev_done = 0
        self._scratch = np.empty(n)

    # -- recording ----------------------------------------------------------

    def add_basis_vector(self, v: np.ndarray):
        if v.shape[0] != self.n:
            raise DimensionMismatchError("basis vector has the wrong length")
        if self.count == self._cap:
            self._cap *= 2
            grown = np.empty((self._cap, self.n))
            grown[: self.count] = self._v[: self.count]
            self._v = grown
            gram = np.zeros((self._cap, self._cap))
            gram[: self.count, : self.count] = self._gram[: self.count, : self.count]
            self._gram = gram
        self._v[self.count] = v
        self.count += 1

    def add_tridiag_entry(self, gamma: float, delta: float):
        self.gammas.append(float(gamma))
        self.deltas.append(float(delta))

    def add_z_vector(self, z: np.ndarray):
        self.z_vectors.append(z.copy())

    def add_p_vector(self, p: np.ndarray):
        self.p_vectors.append(p.copy())

    def add_gram_column(self, col: int, entries: dict[int, float]):
        self.gram_columns[col] = dict(entries)

    # -- assembled views ------------------------------------------------------

    def basis_matrix(self, cols=None) -> np.ndarray:
        """V as an n x cols matrix (columns are basis vectors)."""
        cols = self.count if cols is None else cols
        return self._v[:cols].T.copy()

    def tridiag_matrix(self, j: int) -> np.ndarray:
        """T_{j+1, j}: (j+1) x j with gamma on the diagonal, delta below/above."""
        if j > len(self.gammas) or j > len(self.deltas):
            raise PipecgError("not enough tridiagonal entries archived")
        t = np.zeros((j + 1, j))
        for c in range(j):
            t[c, c] = self.gammas[c]
            if c + 1 <= j:
                t[c + 1, c] = self.deltas[c]
            if c > 0:
                t[c - 1, c] = self.deltas[c - 1]
        return t

    def gram_matrix(self, j: int) -> np.ndarray:
        """Upper-triangular banded G_j assembled from finalized columns."""
        g = np.zeros((j, j))
        for c in range(j):
            if c not in self.gram_columns:
                raise PipecgError(f"Gram column {c} was not archived")
            for r, val in self.gram_columns[c].items():
                if r < j:
                    g[r, c] = val
        return g

    def z_matrix(self, j: int) -> np.ndarray:
        if j > len(self.z_vectors):
            raise PipecgError("not enough auxiliary vectors archived")
        return np.stack(self.z_vectors[:j], axis=1)

    # -- incremental metric engines -------------------------------------------

    def _advance_gram(self):
        while self._gram_done < self.count:
            j = self._gram_done
            col = np.empty(j + 1)
            _kernels.rows_dot_vec(self._v, j + 1, self._v[j], col)
            self._gram[: j + 1, j] = col
            self._gram[j, : j + 1] = col
            self._gram_done = j + 1

    def _advance_deviation(self, a: CsrMatrix, matvec_hook=None):
        # column j of A V - V T is A v_j - delta_{j-1} v_{j-1} - gamma_j v_j
        # - delta_j v_{j+1}; computable once v_{j+1}, gamma_j, delta_j exist.
        limit = min(self.count - 1, len(self.gammas), len(self.deltas))
        while self._dev_done < limit:
            j = self._dev_done
            if matvec_hook is not None:
                matvec_hook()
            a.matvec(self._v[j], out=self._scratch)
            _kernels.axpy_inplace(-self.gammas[j], self._v[j], self._scratch)
            if j > 0:
                _kernels.axpy_inplace(-self.deltas[j - 1], self._v[j - 1], self._scratch)
            _kernels.axpy_inplace(-self.deltas[j], self._v[j + 1], self._scratch)
            nrm = _kernels.seq_norm2(self._scratch)
            self._dev_sumsq += nrm * nrm
            self._dev_done = j + 1


def true_residual(a: CsrMatrix, b, x) -> float:
    """||b - A x||_2 computed fresh (costs one matrix product)."""
    b = as_vector(b, a.n, "b")
    x = as_vector(x, a.n, "x")
    return float(_kernels.csr_residual_norm(a.row_offsets, a.col_indices, a.values, x, b))


def orthogonality_loss(archive: BasisArchive) -> float:
    """||I - V^T V||_inf over the archived basis (max absolute row sum)."""
    if archive.count == 0:
        raise PipecgError("archive holds no basis vectors")
    archive._advance_gram()
    j = archive._gram_done
    resid = np.eye(j) - archive._gram[:j, :j]
    return float(np.max(np.sum(np.abs(resid), axis=1)))


def lanczos_deviation(a: CsrMatrix, archive: BasisArchive, matvec_hook=None) -> float:
    """||A V_i - V_{i+1} T_{i+1,i}||_F over the archived basis and entries."""
    if archive.count < 2 or not archive.gammas:
        raise PipecgError("archive holds too little history for a Lanczos defect")
    archive._advance_deviation(a, matvec_hook=matvec_hook)
    return float(np.sqrt(archive._dev_sumsq))


def residual_gap(trace: IterationTrace) -> np.ndarray:
    """|true - recursive| residual norm per recorded iteration."""
    return np.abs(trace.true_norms() - trace.recursive_norms())


def stagnation_point(trace: IterationTrace) -> int | None:
    """First iteration whose gap exceeds the recursive residual norm."""
    gaps = residual_gap(trace)
    rec = trace.recursive_norms()
    hits = np.nonzero(gaps > rec)[0]
    return int(hits[0]) if hits.size else None
