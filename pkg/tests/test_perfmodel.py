import pytest

from pipecg.errors import PipecgError
from pipecg.perfmodel import MachineModel, crossover_nodes, iteration_time, speedup_curve


def flat_model(glred, spmv):
    return MachineModel(t_spmv=spmv, glred_base=glred, glred_log_coeff=0.0)


def test_free_communication_costs_one_spmv():
    m = MachineModel(t_spmv=1e-6, glred_base=0.0, glred_log_coeff=0.0)
    for variant, l in (("cg", 1), ("pcg_ghysels", 1), ("plcg_stable", 1), ("plcg_stable", 4)):
        assert iteration_time(m, variant, l) == 1e-6


def test_table_formulas_direct():
    m = flat_model(4.0, 1.0)
    assert iteration_time(m, "cg") == 9.0
    assert iteration_time(m, "pcg_ghysels") == 4.0
    assert iteration_time(m, "plcg_stable", 1) == 4.0
    assert iteration_time(m, "plcg_original", 2) == 2.0
    assert iteration_time(m, "plcg_stable", 4) == 1.0  # 9x speedup over cg


def test_formulas_randomized_exact(rng):
    for _ in range(20):
        g, s = rng.uniform(1e-7, 1e-3, size=2)
        m = flat_model(g, s)
        assert iteration_time(m, "cg") == 2 * g + s
        assert iteration_time(m, "pcg_ghysels") == max(g, s)
        for l in (1, 2, 3, 5, 8):
            assert iteration_time(m, "plcg_stable", l) == max(g / l, s)
            assert iteration_time(m, "plcg_original", l) == max(g / l, s)


def test_monotone_in_pipeline_length(rng):
    for _ in range(20):
        g, s = rng.uniform(1e-7, 1e-3, size=2)
        m = flat_model(g, s)
        times = [iteration_time(m, "plcg_stable", l) for l in range(1, 10)]
        assert all(b <= a for a, b in zip(times, times[1:]))
        assert all(t >= s for t in times)  # the spmv is never hidden


def test_variant_ordering_invariant(rng):
    for _ in range(20):
        g, s = rng.uniform(1e-7, 1e-3, size=2)
        m = flat_model(g, s)
        for l in (1, 2, 4):
            assert (
                iteration_time(m, "cg")
                >= iteration_time(m, "pcg_ghysels")
                >= iteration_time(m, "plcg_stable", l)
            )


def test_preconditioner_cost_is_additive():
    m = MachineModel(t_spmv=1.0, glred_base=4.0, glred_log_coeff=0.0, t_prec=0.5)
    assert iteration_time(m, "plcg_stable", 4) == 1.5


def test_speedup_curve_compute_bound_limit():
    # reduction far below spmv: every variant sits within a hair of cg
    m = MachineModel(t_spmv=1.0, glred_base=1e-9, glred_log_coeff=0.0)
    for variant in ("pcg_ghysels", "plcg_stable"):
        (_, s), = speedup_curve(m, variant, 1, [1])
        assert s == pytest.approx(1.0, rel=1e-8)


def test_crossover_exists_with_default_constants():
    m = MachineModel()
    p_star = crossover_nodes(m, l_slow=1, l_fast=2)
    assert p_star is not None


def test_speedup_curve_shapes_default_constants():
    m = MachineModel()
    nodes = [1, 2, 4, 8, 16, 32, 64, 128]
    cg = dict(speedup_curve(m, "cg", 1, nodes))
    p2 = dict(speedup_curve(m, "plcg_stable", 2, nodes))
    # classic CG flattens by ~8 nodes; p(2) keeps scaling well beyond
    assert cg[64] <= cg[8] * 1.2
    assert p2[32] > p2[8] * 1.2
    assert max(p2.values()) > 2 * max(cg.values())


def test_model_validation():
    with pytest.raises(PipecgError):
        MachineModel(t_spmv=0.0)
    with pytest.raises(PipecgError):
        MachineModel(glred_base=-1.0)
    with pytest.raises(PipecgError):
        iteration_time(MachineModel(), "bicgstab")
    with pytest.raises(PipecgError):
        speedup_curve(MachineModel(), "cg", 1, [4, 2])


def test_model_is_stateless():
    m = MachineModel()
    a = iteration_time(m, "plcg_stable", 3, nodes=16)
    b = iteration_time(m, "plcg_stable", 3, nodes=16)
    assert a == b
