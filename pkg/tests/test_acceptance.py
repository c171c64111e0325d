"""Acceptance suite: one test per numbered criterion, at stated tolerances.

Run ``pytest tests/test_acceptance.py -v -s`` for one PASS line per
criterion.  The desk-scale reference problem is the 5-point Laplacian on a
100 x 100 interior grid (10,000 unknowns) with right-hand side b = A * ones
and x0 = 0; pipelined runs use Chebyshev shifts from the analytic spectrum
interval [0, 8].
"""

import time

import numpy as np
import pytest

import pipecg as pc
from pipecg.perfmodel import MachineModel, crossover_nodes, iteration_time, speedup_curve
from tests.conftest import comparison_rows, make_config

EPS = 2.0**-53


def _ok(msg):
    print(f"PASS {msg}")


@pytest.fixture(scope="module")
def laplace100():
    a = pc.laplace2d(100)
    b = pc.spmv(a, np.ones(a.n))
    return a, b, pc.norm2(b)


@pytest.fixture(scope="module")
def stable_runs(laplace100):
    """Stable p(l)-CG, l = 1..5, tau = 1e-12; also records the wall time."""
    a, b, _ = laplace100
    t0 = time.perf_counter()
    runs = {}
    for l in (1, 2, 3, 4, 5):
        cfg = make_config("plcg_stable", l=l, tau=1e-12, max_iterations=2000)
        runs[l] = pc.solve(a, b, None, cfg)
    elapsed = time.perf_counter() - t0
    return runs, elapsed


@pytest.fixture(scope="module")
def original3_run(laplace100):
    a, b, _ = laplace100
    cfg = make_config("plcg_original", l=3, tau=1e-12, max_iterations=2000, max_restarts=0)
    return pc.solve(a, b, None, cfg)


@pytest.fixture(scope="module")
def pcg_stagnation_run(laplace100):
    # tau below p-CG's recursive floor: the run exhausts max_iterations,
    # exposing the level where the true residual stagnates
    a, b, _ = laplace100
    cfg = make_config("pcg_ghysels", tau=1e-14, max_iterations=600)
    return pc.solve(a, b, None, cfg)


@pytest.fixture(scope="module")
def archive_runs(laplace100):
    """Diagnostic runs for the Lanczos-deviation criteria (500 iterations)."""
    a, b, _ = laplace100
    runs = {}
    for variant, l in (("plcg_stable", 1), ("plcg_stable", 2), ("plcg_stable", 3), ("plcg_original", 3)):
        cfg = make_config(variant, l=l, tau=1e-30, max_iterations=500,
                          record_diagnostics=True, max_restarts=0)
        runs[(variant, l)] = pc.solve(a, b, None, cfg)
    return runs


def _deviation_at(a, archive, j):
    j = min(j, archive.count - 1, len(archive.gammas))
    v = archive.basis_matrix(j + 1)
    t = archive.tridiag_matrix(j)
    av = np.stack([a.matvec(np.ascontiguousarray(v[:, c])) for c in range(j)], axis=1)
    return float(np.linalg.norm(av - v @ t, "fro")), j


def test_criterion_01_attainable_accuracy(stable_runs, laplace100):
    _, _, bnorm = laplace100
    runs, elapsed = stable_runs
    final = {}
    for l, res in runs.items():
        assert res.status == "converged", (l, res.status)
        rel = res.final_true_resnorm / bnorm
        assert rel <= 5e-12, (l, rel)
        final[l] = rel
    assert elapsed <= 60.0, f"runtime {elapsed:.1f}s exceeds 60s"
    worst = max(final.values())
    _ok(f"criterion 1: stable p(l)-CG l=1..5 true relative residual <= 5e-12 "
        f"(worst {worst:.2e}) in {elapsed:.1f}s")


def test_criterion_02_instability_contrast(stable_runs, original3_run, laplace100):
    _, _, bnorm = laplace100
    stable3 = stable_runs[0][3]
    orig = original3_run
    s_rel = stable3.final_true_resnorm / bnorm
    o_rel = orig.final_true_resnorm / bnorm
    assert s_rel <= 5e-12
    assert s_rel <= o_rel, "ordering stable <= original violated"
    had_breakdown = orig.status == "breakdown_unrecovered" or any(
        r.event in ("breakdown", "restart") for r in orig.trace
    )
    assert o_rel >= 10 * s_rel or had_breakdown
    _ok(f"criterion 2: original p(3)-CG degrades (true rel {o_rel:.2e} vs stable "
        f"{s_rel:.2e}, factor {o_rel / s_rel:.0f}x, breakdown={had_breakdown})")


def test_criterion_03_pcg_stagnation_ordering(stable_runs, pcg_stagnation_run, laplace100):
    _, _, bnorm = laplace100
    stable1_rel = stable_runs[0][1].final_true_resnorm / bnorm
    true_curve = pcg_stagnation_run.trace.true_norms() / bnorm
    stagnation = float(np.mean(true_curve[-100:]))
    assert stagnation >= 100 * stable1_rel, (stagnation, stable1_rel)
    _ok(f"criterion 3: p-CG stagnates at {stagnation:.2e}, "
        f">= 100x stable p(1)-CG final {stable1_rel:.2e} "
        f"(factor {stagnation / stable1_rel:.0f}x)")


def test_criterion_04_exact_arithmetic_equivalence():
    problems = [
        ("diag(1..20)", pc.diag_matrix(np.arange(1.0, 21.0)), np.ones(20), 20.0),
        ("laplace2d(10)", pc.laplace2d(10), np.random.default_rng(4).standard_normal(100), 8.0),
    ]
    t0 = time.perf_counter()
    for name, a, b, hi in problems:
        histories = {}
        for variant in ("cg", "dlanczos", "plcg_original", "plcg_stable"):
            for l in (1, 2, 3) if variant.startswith("plcg") else (1,):
                cfg = make_config(variant, l=l, tau=1e-10, lo=0.0, hi=hi, max_iterations=200)
                res = pc.solve(a, b, None, cfg)
                histories[(variant, l)] = comparison_rows(res.trace)
        ref = histories[("cg", 1)]
        rel = ref / ref[0]
        cut = int(np.argmax(rel < 1e-10)) if (rel < 1e-10).any() else len(ref)
        for key, h in histories.items():
            assert len(h) >= cut, (name, key, len(h), cut)
            diff = np.max(np.abs(h[:cut] - ref[:cut]) / ref[0])
            assert diff <= 1e-8, (name, key, diff)
    _ok(f"criterion 4: residual histories of CG/D-Lanczos/p(1..3)-CG (both forms) "
        f"agree within 1e-8 until crossing 1e-10 ({time.perf_counter() - t0:.1f}s)")


def test_criterion_05_cost_accounting():
    a = pc.laplace2d(16)
    b = np.random.default_rng(3).standard_normal(a.n)
    for variant in ("plcg_stable", "plcg_original"):
        for l in (1, 2, 3, 4, 5):
            res = pc.solve(a, b, None, make_config(variant, l=l, tau=1e-8, max_iterations=400))
            assert res.restarts == 0, (variant, l)
            c = res.counts
            assert c.spmv == c.iterations, (variant, l)
            dots = c.dots_by_iteration
            assert all(dots[i] == min(i + 2, l + 1) for i in range(len(dots))), (variant, l, dots[: l + 2])
            if variant == "plcg_stable":
                bound = 4 * l + 1 if l >= 2 else 7
            else:
                bound = 3 * l + 2 if l >= 2 else 7
            assert c.live_vector_peak <= bound, (variant, l, c.live_vector_peak, bound)
    _ok("criterion 5: spmv/iteration == 1, dots/iteration == l+1 in steady state, "
        "live vectors <= 4l+1 (stable) / 3l+2 (original) for l >= 2, table floor 7 at l = 1")


def test_criterion_06_gram_cholesky_identity():
    a = pc.laplace2d(20)
    b = np.random.default_rng(42).standard_normal(a.n)
    cfg = make_config("plcg_stable", l=2, tau=1e-30, max_iterations=50, record_diagnostics=True)
    res = pc.solve(a, b, None, cfg)
    arch = res.archive
    cols = len(arch.gram_columns)
    assert cols >= 50
    worst = 0.0
    for j in range(2, cols):
        g = arch.gram_matrix(j)
        z = arch.z_matrix(j)
        lhs = np.linalg.norm(g.T @ g - z.T @ z, "fro")
        bound = 100 * j * EPS * np.linalg.norm(z, "fro") ** 2
        worst = max(worst, lhs / bound)
        assert lhs <= bound, (j, lhs, bound)
    _ok(f"criterion 6: ||G'G - Z'Z||_F within 100*i*eps*||Z||_F^2 at every "
        f"checkpoint over {cols} columns (worst ratio {worst:.3f})")


def test_criterion_07_lanczos_deviation_bounds(archive_runs, laplace100):
    a, _, _ = laplace100
    anorm = a.frobenius_norm()
    for l in (1, 2, 3):
        arch = archive_runs[("plcg_stable", l)].archive
        for j in (10, 50, 100, 200, 300, 400, 500):
            dev, jj = _deviation_at(a, arch, j)
            assert dev <= 1e3 * jj * EPS * anorm, (l, jj, dev)
    dev_stable, _ = _deviation_at(a, archive_runs[("plcg_stable", 3)].archive, 200)
    dev_orig, j_orig = _deviation_at(a, archive_runs[("plcg_original", 3)].archive, 200)
    assert j_orig >= 200, "original run must reach iteration 200"
    assert dev_orig >= 10 * dev_stable, (dev_orig, dev_stable)
    _ok(f"criterion 7: stable deviation bounded by 1e3*i*eps*||A||_F through i=500; "
        f"original p(3) at i=200 exceeds stable by {dev_orig / dev_stable:.1e}x")


def test_criterion_08_preconditioned_consistency():
    a = pc.laplace2d(30)
    b = pc.spmv(a, np.ones(a.n))
    plain = pc.solve(a, b, None, make_config("plcg_stable", l=2, tau=1e-10, max_iterations=1000))
    ident = pc.build_preconditioner(a, "identity")
    prec_i = pc.solve_preconditioned(
        a, b, None, make_config("plcg_stable", l=2, tau=1e-10, max_iterations=1000, precon=ident)
    )
    assert np.array_equal(plain.x, prec_i.x)
    assert np.array_equal(plain.trace.recursive_norms(), prec_i.trace.recursive_norms())
    bj = pc.build_preconditioner(a, "block_jacobi", block_size=30)
    prec_b = pc.solve_preconditioned(
        a, b, None, make_config("plcg_stable", l=2, tau=1e-10, lo=0.0, hi=2.0,
                                max_iterations=1000, precon=bj)
    )
    assert prec_b.status == "converged"
    assert prec_b.iterations < plain.iterations
    _ok(f"criterion 8: identity preconditioner bitwise-identical; block Jacobi cuts "
        f"iterations {plain.iterations} -> {prec_b.iterations} at tau=1e-10")


def test_criterion_09_breakdown_restart_recovery():
    a = pc.laplace2d(16)
    b = np.random.default_rng(5).standard_normal(a.n)
    cfg = make_config("plcg_stable", l=2, tau=1e-10, max_iterations=500, inject_breakdown_at=20)
    res = pc.solve(a, b, None, cfg)
    assert res.status == "converged"
    assert res.restarts == 1
    events = [r.event for r in res.trace if r.event]
    assert "breakdown" in events and "restart" in events and events[-1] == "converged"
    rows = res.trace.rows
    bidx = next(k for k, r in enumerate(rows) if r.event == "breakdown")
    jump = rows[bidx + 1].true_resnorm - rows[bidx].true_resnorm
    limit = 8 * EPS * a.frobenius_norm() * max(np.linalg.norm(res.x), 1.0)
    assert jump <= limit, (jump, limit)
    _ok(f"criterion 9: injected breakdown -> restart -> convergence; "
        f"true residual jump {jump:.1e} within 8*eps*||A||*||x||")


def test_criterion_10_perfmodel_formulas():
    rng = np.random.default_rng(77)
    for _ in range(20):
        g, s = rng.uniform(1e-7, 1e-2, size=2)
        m = MachineModel(t_spmv=s, glred_base=g, glred_log_coeff=0.0)
        assert iteration_time(m, "cg") == 2 * g + s
        assert iteration_time(m, "pcg_ghysels") == max(g, s)
        times = []
        for l in (1, 2, 3, 4, 6, 8):
            t = iteration_time(m, "plcg_stable", l)
            assert t == max(g / l, s)
            assert iteration_time(m, "plcg_original", l) == t
            times.append(t)
        assert all(b <= a for a, b in zip(times, times[1:]))
    _ok("criterion 10: iteration_time reproduces 2g+s / max(g,s) / max(g/l,s) exactly "
        "on 20 randomized parameter sets; monotone in l")


def test_criterion_11_perf_shape_substitute():
    m = MachineModel()
    p_star = crossover_nodes(m, l_slow=1, l_fast=2)
    assert p_star is not None
    nodes = [1, 2, 4, 8, 16, 32, 64, 128]
    cg = dict(speedup_curve(m, "cg", 1, nodes))
    p2 = dict(speedup_curve(m, "plcg_stable", 2, nodes))
    assert cg[64] <= 1.2 * cg[8]          # classic CG flattens early
    assert p2[32] > 1.2 * p2[8]           # p(2) keeps scaling
    assert max(p2.values()) > 2 * max(cg.values())
    _ok(f"criterion 11 (declared substitute for wall-clock figures): modeled CG "
        f"flattens by 8 nodes while p(2) scales on; p(2)-over-p(1) crossover at "
        f"{p_star} nodes with default constants")
