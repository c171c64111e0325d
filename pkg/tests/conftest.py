import numpy as np
import pytest

import pipecg as pc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cheb_shifts(lo, hi, l):
    return pc.chebyshev_shifts(pc.SpectrumEstimate(lo, hi, "analytic"), l)


def make_config(variant, l=1, tau=1e-10, lo=0.0, hi=8.0, **kw):
    shifts = cheb_shifts(lo, hi, l) if variant.startswith("plcg") else None
    return pc.SolverConfig(variant=variant, l=l, tau=tau, shifts=shifts, **kw)


def random_spd(n, rng, cond=10.0):
    """Dense random SPD matrix with a controlled spectrum, bit-symmetric."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.linspace(1.0, cond, n)
    m = q @ np.diag(eigs) @ q.T
    return (m + m.T) / 2.0  # float addition commutes: exactly symmetric


def plain_lanczos(a_dense, v0, steps):
    """Explicit three-term Lanczos (no reorthogonalization): the oracle the
    pipelined bases are checked against."""
    v = v0 / np.linalg.norm(v0)
    v_prev = np.zeros_like(v)
    basis = [v.copy()]
    gammas, deltas = [], []
    for j in range(steps):
        w = a_dense @ v
        if j > 0:
            w = w - deltas[-1] * v_prev
        g = float(w @ v)
        gammas.append(g)
        w = w - g * v
        d = float(np.linalg.norm(w))
        deltas.append(d)
        if d == 0.0:
            break
        v_prev, v = v, w / d
        basis.append(v.copy())
    return np.stack(basis, axis=1), np.array(gammas), np.array(deltas)


def comparison_rows(trace):
    """Recursive-residual history excluding breakdown/restart marker rows."""
    return np.array([r.recursive_resnorm for r in trace if r.event in ("", "converged")])
