"""Low-level numeric kernels with a fixed, sequential summation order.

Every reduction in this module accumulates in ascending index order so that
results are bit-reproducible from run to run.  Library reductions (BLAS dot,
``numpy.sum`` pairwise blocking, threaded spmv) do not guarantee a fixed
association order, which would perturb the round-off behavior the solver
diagnostics measure.  All kernels are compiled eagerly and cached on disk.
"""

import numpy as np
from numba import njit

_F = "float64"
_V = "float64[::1]"
_I = "int64[::1]"


@njit(f"{_F}({_V}, {_V})", cache=True)
def seq_dot(x, y):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * y[i]
    return acc


@njit(f"{_F}({_V})", cache=True)
def seq_norm2(x):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * x[i]
    return np.sqrt(acc)


@njit(f"void({_I}, {_I}, {_V}, {_V}, {_V})", cache=True)
def csr_matvec(row_offsets, col_indices, values, x, out):
    n = row_offsets.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for k in range(row_offsets[i], row_offsets[i + 1]):
            acc += values[k] * x[col_indices[k]]
        out[i] = acc


@njit(f"{_F}({_I}, {_I}, {_V}, {_V}, {_V})", cache=True)
def csr_residual_norm(row_offsets, col_indices, values, x, b):
    """||b - A x||_2 without forming the residual vector."""
    n = row_offsets.shape[0] - 1
    acc = 0.0
    for i in range(n):
        ax = 0.0
        for k in range(row_offsets[i], row_offsets[i + 1]):
            ax += values[k] * x[col_indices[k]]
        d = b[i] - ax
        acc += d * d
    return np.sqrt(acc)


@njit(f"void({_F}, {_V}, {_V})", cache=True)
def axpy_inplace(alpha, x, y):
    """y += alpha * x, elementwise, no temporaries."""
    for i in range(y.shape[0]):
        y[i] += alpha * x[i]


@njit(f"void({_F}, {_V})", cache=True)
def scale_inplace(alpha, y):
    for i in range(y.shape[0]):
        y[i] *= alpha


@njit(f"void({_F}, {_V})", cache=True)
def divide_inplace(denom, y):
    for i in range(y.shape[0]):
        y[i] /= denom


@njit(f"void({_V}, {_F}, {_V}, {_F}, {_V}, {_F}, {_V})", cache=True)
def three_term_update(top, c1, z1, c2, z2, denom, out):
    """out = (top + c1*z1 + c2*z2) / denom.

    ``out`` may alias ``top`` (single forward pass).  Callers drop an absent
    trailing term by passing c2 == 0.0 with any well-formed dummy for z2.
    """
    for i in range(out.shape[0]):
        out[i] = (top[i] + c1 * z1[i] + c2 * z2[i]) / denom


@njit(f"void({_V}, {_F}, {_V}, {_V})", cache=True)
def xpay(x, beta, y, out):
    """out = x + beta * y (classic CG direction update; out may alias y)."""
    for i in range(out.shape[0]):
        out[i] = x[i] + beta * y[i]


@njit(f"void(float64[:, ::1], int64, {_V}, {_V})", cache=True)
def rows_dot_vec(mat, nrows, v, out):
    """out[r] = mat[r, :] . v for r < nrows, sequential per row."""
    for r in range(nrows):
        acc = 0.0
        for i in range(v.shape[0]):
            acc += mat[r, i] * v[i]
        out[r] = acc
