"""Preconditioners: identity, point Jacobi, and block Jacobi.

The block variant extracts the diagonal blocks of the operator, factors each
with a dense Cholesky, and applies M^{-1} via per-block triangular solves.
Each diagonal block of an SPD matrix is SPD, so M is SPD whenever the input
is; failures to factor are reported with the offending block.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DefinitenessError, DimensionMismatchError, PipecgError
from .sparsekit import CsrMatrix, as_vector

__all__ = ["Preconditioner", "build", "apply", "matvec"]

KINDS = ("identity", "jacobi", "block_jacobi")


class Preconditioner:
    """Holds the factored data; build through :func:`build`."""

    def __init__(self, kind, n, block_size=None, diag=None, blocks=None, starts=None):
        self.kind = kind
        self.n = n
        self.block_size = block_size
        self._diag = diag
        self._blocks = blocks  # lower Cholesky factors, one per block
        self._starts = starts

    def apply(self, w, out=None):
        """Return M^{-1} w."""
        w = as_vector(w, self.n, "w")
        if out is None:
            out = np.empty_like(w)
        if self.kind == "identity":
            out[:] = w
        elif self.kind == "jacobi":
            np.divide(w, self._diag, out=out)
        else:
            for (s, e), low in zip(self._starts, self._blocks):
                out[s:e] = scipy.linalg.cho_solve((low, True), w[s:e], check_finite=False)
        return out

    def matvec(self, w):
        """Forward product M w (diagnostics only, e.g. M-orthogonality checks)."""
        w = as_vector(w, self.n, "w")
        if self.kind == "identity":
            return w.copy()
        if self.kind == "jacobi":
            return w * self._diag
        out = np.empty_like(w)
        for (s, e), low in zip(self._starts, self._blocks):
            out[s:e] = low @ (low.T @ w[s:e])
        return out


def build(a: CsrMatrix, kind: str, block_size: int | None = None) -> Preconditioner:
    """Extract and factor the preconditioner data from ``a``."""
    if kind not in KINDS:
        raise PipecgError(f"unknown preconditioner kind {kind!r}; expected one of {KINDS}")
    if kind == "identity":
        return Preconditioner("identity", a.n)
    if kind == "jacobi":
        d = a.diagonal()
        bad = np.nonzero(d <= 0.0)[0]
        if bad.size:
            raise DefinitenessError(f"diagonal entry {bad[0]} is not positive")
        return Preconditioner("jacobi", a.n, diag=d)
    if block_size is None or block_size < 1:
        raise PipecgError("block_jacobi requires block_size >= 1")
    starts = [(s, min(s + block_size, a.n)) for s in range(0, a.n, block_size)]
    blocks = []
    for bi, (s, e) in enumerate(starts):
        dense = np.zeros((e - s, e - s))
        for i in range(s, e):
            lo, hi = a.row_offsets[i], a.row_offsets[i + 1]
            for k in range(lo, hi):
                j = int(a.col_indices[k])
                if s <= j < e:
                    dense[i - s, j - s] = a.values[k]
        try:
            low = scipy.linalg.cholesky(dense, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise DefinitenessError(f"diagonal block {bi} (rows {s}:{e}) is not positive definite") from exc
        blocks.append(low)
    return Preconditioner("block_jacobi", a.n, block_size=block_size, blocks=blocks, starts=starts)


def apply(m: Preconditioner, w) -> np.ndarray:
    """M^{-1} w via per-block triangular solves."""
    if len(w) != m.n:
        raise DimensionMismatchError(f"vector length {len(w)} != preconditioner size {m.n}")
    return m.apply(np.asarray(w, dtype=np.float64))


def matvec(m: Preconditioner, w) -> np.ndarray:
    """Forward product M w."""
    return m.matvec(np.asarray(w, dtype=np.float64))
