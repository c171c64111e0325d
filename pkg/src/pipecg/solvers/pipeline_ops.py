"""The per-iteration update rules shared by the pipelined CG variants.

Index conventions follow the recurrences exactly: at pipeline iteration
``i`` (with pipeline depth ``l``), the Gram column ``c = i - l + 1`` is
finalized from dot products initiated ``l`` iterations earlier, tridiagonal
column ``t = i - l`` is appended, each basis ring gains one vector, and the
solution/search-direction pair advances to index ``t``.  All breakdowns
surface as :class:`~pipecg.errors.BreakdownSignal` for the engine's restart
logic.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..errors import BreakdownSignal
from ..spectral import ShiftSet
from .state import BasisWindow, SolveState, TridiagFactors

__all__ = [
    "EPS",
    "gram_finalize",
    "tridiag_update",
    "lu_advance",
    "stable_basis_update",
    "original_basis_update",
    "solution_update",
]

EPS = 2.0**-53  # reference machine precision for all tolerance formulas


def gram_finalize(bw: BasisWindow, i: int, l: int, inject_breakdown: bool = False) -> float:
    """Finalize Gram column c = i - l + 1 from the dots initiated l steps ago.

    Applies the incremental Cholesky correction to the column's inner band
    and replaces the diagonal with the square root of the corrected value.
    Returns the root argument.  A negative argument raises
    :class:`BreakdownSignal`; an argument below EPS times the raw diagonal is
    recorded as a near-breakdown warning.
    """
    c = i - l + 1
    if not bw.inflight or bw.inflight[0][0] != c:
        raise RuntimeError(f"dot FIFO out of sync: expected column {c}")
    _, raw = bw.inflight.popleft()
    for j, val in raw.items():
        bw.gram.set(j, c, val)

    g = bw.gram
    lo = max(0, i - 3 * l + 1)
    for j in range(max(0, i - 2 * l + 2), i - l + 1):
        s = 0.0
        for k in range(lo, j):
            s += g.get(k, j) * g.get(k, c)
        g.set(j, c, (g.get(j, c) - s) / g.get(j, j))

    raw_diag = g.get(c, c)
    s = 0.0
    for k in range(lo, c):
        gkc = g.get(k, c)
        s += gkc * gkc
    arg = raw_diag - s
    if inject_breakdown:
        arg = -abs(arg) - 1e-30
    if arg < 0.0:
        if raw_diag > 0.0 and -arg <= math.sqrt(EPS) * raw_diag and not inject_breakdown:
            # numerically zero diagonal, most often an exhausted (invariant)
            # subspace whose true orthogonal component is exactly zero but is
            # swamped by squared accumulated basis error.  Route to the lucky
            # path; its drained iterate is verified against the true residual
            # and falls back to a breakdown restart if the subspace was not
            # actually invariant.
            bw.near_breakdowns.append((i, arg))
            arg = 0.0
        else:
            raise BreakdownSignal(
                f"square-root breakdown at iteration {i}: root argument {arg:.3e}",
                root_argument=arg,
            )
    elif raw_diag > 0.0 and arg < EPS * raw_diag:
        bw.near_breakdowns.append((i, arg))
    g.set(c, c, math.sqrt(arg))
    return arg


def tridiag_update(bw: BasisWindow, tf: TridiagFactors, i: int, l: int, shifts: ShiftSet) -> None:
    """Append column t = i - l of the Lanczos tridiagonal matrix.

    Uses the early branch (with the shift term) while the pipeline is still
    filling (i < 2l) and the steady branch afterwards; the trailing term is
    absent at t = 0.
    """
    t = i - l
    c = t + 1
    g = bw.gram.get
    gtt = g(t, t)
    if gtt <= 0.0:
        raise BreakdownSignal(f"nonpositive Gram diagonal g({t},{t}) = {gtt}", root_argument=gtt)
    trailing = g(t - 1, t) * tf.delta[t - 1] if t >= 1 else 0.0
    if i < 2 * l:
        gamma = (g(t, t + 1) + shifts[t] * gtt - trailing) / gtt
        delta = g(c, c) / gtt
    else:
        gamma = (gtt * tf.gamma[t - l] + g(t, t + 1) * tf.delta[t - l] - trailing) / gtt
        delta = (g(c, c) * tf.delta[t - l]) / gtt
    tf.gamma.append(gamma)
    tf.delta.append(delta)


def lu_advance(tf: TridiagFactors, i: int, l: int) -> None:
    """Advance the LU factors and recursive residual scalar to t = i - l."""
    t = i - l
    if tf.eta[t - 1] == 0.0:
        raise BreakdownSignal(f"LU breakdown: eta_{t - 1} is zero", root_argument=0.0)
    lam = tf.delta[t - 1] / tf.eta[t - 1]
    eta = tf.gamma[t] - lam * tf.delta[t - 1]
    zeta = -lam * tf.zeta[t - 1]
    tf.lam.append(lam)
    tf.eta.append(eta)
    tf.zeta.append(zeta)


def stable_basis_update(
    bw: BasisWindow,
    tf: TridiagFactors,
    i: int,
    l: int,
    shifts: ShiftSet,
    spmv_result: np.ndarray,
) -> None:
    """Add one vector to every basis via the coupled three-term recurrences.

    The intermediate bases k < l advance without any matrix product; the
    trailing basis k = l consumes the iteration's single spmv result, which
    is finalized in place and adopted as its newest vector.  Ring eviction is
    exact: a vector leaves as soon as its last consumer has run.
    """
    t = i - l
    d = tf.delta[t]
    if d == 0.0:
        raise BreakdownSignal("lucky breakdown: delta is zero", root_argument=0.0)
    dm1 = tf.delta_at(t - 1)
    gm = tf.gamma[t]

    for k in range(l):
        j2 = t + k + 1
        ring = bw.rings[k]
        upper = bw.rings[k + 1][j2]
        z1 = ring[j2 - 1]
        if dm1 != 0.0 and j2 >= 2:
            z2, c2 = ring[j2 - 2], -dm1
        else:
            z2, c2 = z1, 0.0
        out = np.empty(bw.n)
        bw.ledger.acquire()
        _kernels.three_term_update(upper, shifts[k] - gm, z1, c2, z2, d, out)
        if k == 0:
            ring.evict_below(t if bw.gram.economized else max(0, i - 2 * l + 1))
        else:
            ring.evict_below(j2 - 1)
        ring.put(j2, out, counted=True)

    z = bw.z_ring
    _kernels.three_term_update(spmv_result, -gm, z[i], -dm1, z[i - 1], d, spmv_result)
    z.put(i + 1, spmv_result, counted=True)


def original_basis_update(
    bw: BasisWindow,
    tf: TridiagFactors,
    i: int,
    l: int,
    spmv_result: np.ndarray,
) -> None:
    """Alg.-1 style updates: multi-term orthonormal-basis recurrence.

    Kept verbatim (including its division by the possibly ill-conditioned
    Gram diagonal) so the unstable behavior can be reproduced next to the
    stable variant.  The new orthonormal vector recycles the auxiliary
    vector's buffer, whose last read is this very update.
    """
    t = i - l
    c = t + 1
    d = tf.delta[t]
    if d == 0.0:
        raise BreakdownSignal("lucky breakdown: delta is zero", root_argument=0.0)
    dm1 = tf.delta_at(t - 1)
    gm = tf.gamma[t]
    z = bw.z_ring
    v = bw.v_ring

    # auxiliary basis first: it still needs z_{i} and z_{i-1}
    _kernels.three_term_update(spmv_result, -gm, z[i], -dm1, z[i - 1], d, spmv_result)
    z.put(i + 1, spmv_result, counted=True)

    gcc = bw.gram.get(c, c)
    if gcc <= 0.0:
        raise BreakdownSignal(f"nonpositive Gram diagonal g({c},{c}) = {gcc}", root_argument=gcc)
    if l >= 2:
        buf = z.take(c)  # z_c is dead after this update; reuse its buffer
    else:
        buf = z[c].copy()  # at l = 1, z_c is still the recurrence's z_i
        bw.ledger.acquire()
    for j in range(max(0, c - 2 * l), c):
        _kernels.axpy_inplace(-bw.gram.get(j, c), v[j], buf)
    _kernels.divide_inplace(gcc, buf)
    v.put(c, buf, counted=True)
    v.evict_below(max(0, c - 2 * l + 1))


def solution_update(st: SolveState, bw: BasisWindow, tf: TridiagFactors, i: int, l: int) -> None:
    """Advance the search direction and iterate to index t = i - l.

    At i == l this is the initialization eta_0 = gamma_0, zeta_0 = ||r_0||,
    p_0 = v_0 / eta_0.  Afterwards the iterate absorbs the previous step
    before the direction is updated in place.
    """
    t = i - l
    v = bw.v_ring
    if i == l:
        eta0 = tf.gamma[0]
        if eta0 == 0.0:
            raise BreakdownSignal("eta_0 is zero", root_argument=0.0)
        tf.lam.append(0.0)
        tf.eta.append(eta0)
        tf.zeta.append(st.r0_norm)
        p = v[0] / eta0
        bw.ledger.acquire()
        st.p = p
        return
    eta = tf.eta[t]
    if eta == 0.0:
        raise BreakdownSignal(f"eta_{t} is zero", root_argument=0.0)
    _kernels.axpy_inplace(tf.zeta[t - 1], st.p, st.x)
    _kernels.three_term_update(v[t], -tf.delta[t - 1], st.p, 0.0, st.p, eta, st.p)
