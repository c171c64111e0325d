"""Sparse SPD matrix storage, dense vector kernels, generators and file I/O.

The matrix container is deliberately small: compressed-sparse-row arrays plus
the cached maximum row population.  All arithmetic entry points use the
fixed-order kernels from :mod:`pipecg._kernels`, so repeated runs produce
bit-identical round-off.  Public operations are pure; solvers use private
in-place variants for their working vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, MatrixFormatError, NotSymmetricError, ParseError

__all__ = [
    "CsrMatrix",
    "as_vector",
    "spmv",
    "axpy",
    "dot",
    "norm2",
    "identity",
    "diag_matrix",
    "laplace2d",
    "read_matrix_market",
    "write_matrix_market",
]


@dataclass
class CsrMatrix:
    """Square sparse matrix in CSR form, validated for solver use.

    Invariants (enforced by :meth:`validate`): monotone ``row_offsets`` framing
    ``values``; strictly increasing in-range column indices per row; finite
    values; bit-exact structural and numeric symmetry; ``max_row_nnz`` equal to
    the true maximum row population.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    max_row_nnz: int = field(default=0)

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.max_row_nnz == 0 and self.n > 0:
            self.max_row_nnz = int(np.max(np.diff(self.row_offsets)))
        self.validate()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, n, rows, cols, vals, require_symmetric=True):
        """Build from coordinate triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.shape != cols.shape or rows.shape != vals.shape:
            raise DimensionMismatchError("rows, cols and vals must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise MatrixFormatError("coordinate index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            same = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if same.any():
                out_r, out_c, out_v = [], [], []
                k = 0
                while k < rows.size:
                    j = k + 1
                    v = vals[k]
                    while j < rows.size and rows[j] == rows[k] and cols[j] == cols[k]:
                        v += vals[j]
                        j += 1
                    out_r.append(rows[k])
                    out_c.append(cols[k])
                    out_v.append(v)
                    k = j
                rows = np.array(out_r, dtype=np.int64)
                cols = np.array(out_c, dtype=np.int64)
                vals = np.array(out_v, dtype=np.float64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets[1:], rows, 1)
        offsets = np.cumsum(offsets)
        mat = cls.__new__(cls)
        mat.n = n
        mat.row_offsets = offsets
        mat.col_indices = cols
        mat.values = vals
        mat.max_row_nnz = int(np.max(np.diff(offsets))) if n > 0 else 0
        mat.validate(require_symmetric=require_symmetric)
        return mat

    @classmethod
    def from_dense(cls, a, require_symmetric=True, drop_tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
        rows, cols = np.nonzero(np.abs(a) > drop_tol)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols], require_symmetric=require_symmetric)

    # -- invariants --------------------------------------------------------

    def validate(self, require_symmetric=True):
        n, off = self.n, self.row_offsets
        if n < 0 or off.shape[0] != n + 1:
            raise MatrixFormatError("row_offsets must have length n + 1")
        if off[0] != 0 or off[-1] != self.values.shape[0] or np.any(np.diff(off) < 0):
            raise MatrixFormatError("row_offsets must be nondecreasing from 0 to nnz")
        if self.col_indices.shape != self.values.shape:
            raise MatrixFormatError("col_indices and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise MatrixFormatError("matrix values must be finite")
        for i in range(n):
            cols = self.col_indices[off[i] : off[i + 1]]
            if cols.size:
                if cols[0] < 0 or cols[-1] >= n:
                    raise MatrixFormatError(f"column index out of range in row {i}")
                if np.any(np.diff(cols) <= 0):
                    raise MatrixFormatError(f"column indices not strictly increasing in row {i}")
        if self.max_row_nnz != (int(np.max(np.diff(off))) if n > 0 else 0):
            raise MatrixFormatError("max_row_nnz does not match the row populations")
        if require_symmetric:
            self._check_symmetry()

    def _check_symmetry(self):
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_offsets))
        order = np.lexsort((rows, self.col_indices))
        if not (
            np.array_equal(self.col_indices[order], rows)
            and np.array_equal(rows[order], self.col_indices)
            and np.array_equal(self.values[order], self.values)
        ):
            raise NotSymmetricError("matrix is not bit-exactly symmetric; solvers require SPD input")

    # -- helpers -----------------------------------------------------------

    @property
    def nnz(self):
        return int(self.values.shape[0])

    def matvec(self, x, out=None):
        """A @ x with per-row ascending-index accumulation."""
        if out is None:
            out = np.empty(self.n, dtype=np.float64)
        _kernels.csr_matvec(self.row_offsets, self.col_indices, self.values, x, out)
        return out

    def diagonal(self):
        d = np.zeros(self.n, dtype=np.float64)
        for i in range(self.n):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            k = np.searchsorted(self.col_indices[lo:hi], i)
            if k < hi - lo and self.col_indices[lo + k] == i:
                d[i] = self.values[lo + k]
        return d

    def to_dense(self):
        a = np.zeros((self.n, self.n), dtype=np.float64)
        for i in range(self.n):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            a[i, self.col_indices[lo:hi]] = self.values[lo:hi]
        return a

    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.values**2)))


def as_vector(x, n=None, name="vector"):
    """Coerce to a contiguous float64 vector and check the contract."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be one-dimensional, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise DimensionMismatchError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise MatrixFormatError(f"{name} contains non-finite entries")
    return v


# -- public vector/matrix operations ---------------------------------------


def spmv(a: CsrMatrix, x) -> np.ndarray:
    """y = A x, deterministic ascending-column accumulation per row."""
    x = as_vector(x, a.n, "x")
    return a.matvec(x)


def axpy(alpha: float, x, y) -> np.ndarray:
    """alpha * x + y, elementwise, returned as a new vector."""
    x = as_vector(x, None, "x")
    y = as_vector(y, x.shape[0], "y")
    out = y.copy()
    _kernels.axpy_inplace(float(alpha), x, out)
    return out


def dot(x, y) -> float:
    """Sequential ascending-index inner product (bit-reproducible)."""
    x = as_vector(x, None, "x")
    y = as_vector(y, x.shape[0], "y")
    return float(_kernels.seq_dot(x, y))


def norm2(x) -> float:
    x = as_vector(x, None, "x")
    return float(_kernels.seq_norm2(x))


# -- problem generators ------------------------------------------------------


def identity(n: int) -> CsrMatrix:
    idx = np.arange(n, dtype=np.int64)
    return CsrMatrix(n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def diag_matrix(values) -> CsrMatrix:
    values = as_vector(values, None, "diagonal")
    n = values.shape[0]
    return CsrMatrix(n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), values)


def laplace2d(grid_n: int) -> CsrMatrix:
    """5-point stencil Laplacian on a grid_n x grid_n interior grid.

    Homogeneous Dirichlet boundaries are eliminated: the operator acts on the
    interior unknowns only, so its spectrum lies in the open interval (0, 8).
    """
    if grid_n < 1:
        raise MatrixFormatError("grid_n must be >= 1")
    g = grid_n
    n = g * g
    nnz_bound = 5 * n
    offsets = np.zeros(n + 1, dtype=np.int64)
    cols = np.empty(nnz_bound, dtype=np.int64)
    vals = np.empty(nnz_bound, dtype=np.float64)
    k = 0
    for iy in range(g):
        for ix in range(g):
            p = iy * g + ix
            if iy > 0:
                cols[k] = p - g
                vals[k] = -1.0
                k += 1
            if ix > 0:
                cols[k] = p - 1
                vals[k] = -1.0
                k += 1
            cols[k] = p
            vals[k] = 4.0
            k += 1
            if ix < g - 1:
                cols[k] = p + 1
                vals[k] = -1.0
                k += 1
            if iy < g - 1:
                cols[k] = p + g
                vals[k] = -1.0
                k += 1
            offsets[p + 1] = k
    return CsrMatrix(n, offsets, cols[:k].copy(), vals[:k].copy())


# -- Matrix Market I/O --------------------------------------------------------

_MM_BANNER = "%%MatrixMarket"


def read_matrix_market(path) -> CsrMatrix:
    """Read a real coordinate-format Matrix Market file into a CsrMatrix.

    Symmetric storage is expanded to full, duplicates are summed, and the
    result must satisfy the CsrMatrix invariants; a ``general`` file whose
    numeric data is not symmetric is rejected, since every solver here
    requires SPD input.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith(_MM_BANNER):
            raise ParseError("missing %%MatrixMarket banner", line=1)
        tokens = header.strip().split()
        if len(tokens) != 5:
            raise ParseError("banner must have 5 tokens", line=1)
        _, obj, fmt, dtype, symmetry = (t.lower() for t in tokens)
        if obj != "matrix" or fmt != "coordinate":
            raise ParseError(f"unsupported object/format: {obj} {fmt}", line=1)
        if dtype not in ("real", "integer"):
            raise ParseError(f"unsupported value type: {dtype}", line=1)
        if symmetry not in ("general", "symmetric"):
            raise ParseError(f"unsupported symmetry: {symmetry}", line=1)

        lineno = 1
        size_line = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise ParseError("missing size line", line=lineno)
        parts = size_line.split()
        if len(parts) != 3:
            raise ParseError("size line must be 'rows cols nnz'", line=lineno)
        try:
            nrows, ncols, nnz = (int(p) for p in parts)
        except ValueError as exc:
            raise ParseError(f"bad size line: {exc}", line=lineno) from None
        if nrows != ncols:
            raise ParseError("matrix must be square", line=lineno)

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ParseError("entry must be 'row col value'", line=lineno)
            if k >= nnz:
                raise ParseError("more entries than declared", line=lineno)
            try:
                rows[k] = int(parts[0]) - 1
                cols[k] = int(parts[1]) - 1
                vals[k] = float(parts[2])
            except ValueError as exc:
                raise ParseError(f"bad entry: {exc}", line=lineno) from None
            k += 1
        if k != nnz:
            raise ParseError(f"declared {nnz} entries, found {k}", line=lineno)

    if symmetry == "symmetric":
        mask = rows != cols
        mirrored_rows = cols[mask]
        mirrored_cols = rows[mask]
        mirrored_vals = vals[mask]
        rows = np.concatenate([rows, mirrored_rows])
        cols = np.concatenate([cols, mirrored_cols])
        vals = np.concatenate([vals, mirrored_vals])
    return CsrMatrix.from_coo(nrows, rows, cols, vals, require_symmetric=True)


def write_matrix_market(a: CsrMatrix, path, symmetric=True):
    """Write in coordinate format; values use shortest round-trip decimals."""
    with open(path, "w", encoding="ascii") as fh:
        kind = "symmetric" if symmetric else "general"
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        entries = []
        for i in range(a.n):
            lo, hi = a.row_offsets[i], a.row_offsets[i + 1]
            for k in range(lo, hi):
                j = int(a.col_indices[k])
                if symmetric and j > i:
                    continue
                entries.append((i, j, a.values[k]))
        fh.write(f"{a.n} {a.n} {len(entries)}\n")
        for i, j, v in entries:
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
