import os

import numpy as np
import pytest

import pipecg as pc
from pipecg.cli import main
from pipecg.diagnostics import IterationTrace
from pipecg.errors import PipecgError


def run_cli(args):
    return main(args)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def test_solve_batch_writes_csvs(tmp_path):
    out = tmp_path / "runs"
    code = run_cli([
        "solve", "--problem", "laplace2d:20", "--variant", "plcg_stable,cg",
        "--l", "1,2", "--tau", "1e-10", "--spectrum", "analytic:0,8", "--out", str(out),
    ])
    assert code == 0
    names = sorted(os.listdir(out))
    assert names == ["cg.csv", "plcg_stable_l1.csv", "plcg_stable_l2.csv", "summary.csv"]
    header, rows = read_csv(out / "plcg_stable_l1.csv")
    assert header == ["iter", "recursive_resnorm", "true_resnorm", "orth_loss", "lanczos_dev", "event"]
    assert rows[-1][-1] == "converged"
    assert rows[0][3] == "NA" and rows[0][4] == "NA"  # diagnostics off


def test_csv_floats_roundtrip(tmp_path):
    out = tmp_path / "runs"
    run_cli(["solve", "--problem", "laplace2d:10", "--variant", "cg", "--tau", "1e-9",
             "--out", str(out)])
    a = pc.laplace2d(10)
    b = pc.spmv(a, np.ones(a.n))
    res = pc.solve(a, b, None, pc.SolverConfig(variant="cg", tau=1e-9))
    _, rows = read_csv(out / "cg.csv")
    assert len(rows) == len(res.trace)
    for row, ref in zip(rows, res.trace):
        assert float(row[1]) == ref.recursive_resnorm
        assert float(row[2]) == ref.true_resnorm


def test_reproducibility_byte_identical(tmp_path):
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = run_cli([
            "solve", "--problem", "laplace2d:15", "--variant", "plcg_stable", "--l", "2",
            "--tau", "1e-10", "--spectrum", "power:30", "--seed", "7",
            "--diagnostics", "--out", str(out),
        ])
        assert code == 0
        dirs.append(out)
    for fname in os.listdir(dirs[0]):
        assert (dirs[0] / fname).read_bytes() == (dirs[1] / fname).read_bytes()


def test_diag_problem_finite_termination(tmp_path):
    out = tmp_path / "runs"
    code = run_cli(["solve", "--problem", "diag:1..10", "--variant", "cg",
                    "--tau", "1e-10", "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "summary.csv")
    assert rows[0][2] == "converged"
    assert int(rows[0][3]) <= 10  # at most n distinct eigenvalues


def test_summary_row_accounting(tmp_path):
    out = tmp_path / "runs"
    run_cli(["solve", "--problem", "laplace2d:12", "--variant", "plcg_stable,plcg_original",
             "--l", "1,3", "--tau", "1e-9", "--spectrum", "analytic:0,8", "--out", str(out)])
    _, srows = read_csv(out / "summary.csv")
    for row in srows:
        variant, l, status, iters, restarts, rows_n = row[0], row[1], row[2], int(row[3]), int(row[4]), int(row[5])
        _, trace_rows = read_csv(out / f"{variant}_l{l}.csv")
        assert len(trace_rows) == rows_n
        events = [r[-1] for r in trace_rows]
        breakdowns = events.count("breakdown")
        restarts_seen = events.count("restart")
        assert restarts_seen == restarts
        assert rows_n == iters + 1 + restarts_seen + breakdowns


def test_config_file_with_flag_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "problem=laplace2d:10\nvariant=cg\ntau=1e-6\nmax_iters=200\nout=unused\n# comment\n"
    )
    out = tmp_path / "runs"
    code = run_cli(["solve", "--config", str(cfgfile), "--out", str(out), "--tau", "1e-9"])
    assert code == 0
    _, rows = read_csv(out / "summary.csv")
    # the tighter command-line tau took effect
    assert float(rows[0][7]) < 1e-9


def test_env_seed_fallback(tmp_path, monkeypatch):
    outs = []
    for name, seed_env in (("a", "3"), ("b", "3"), ("c", "4")):
        monkeypatch.setenv("KRYLOV_SEED", seed_env)
        out = tmp_path / name
        run_cli(["solve", "--problem", "laplace2d:8", "--variant", "plcg_stable", "--l", "1",
                 "--tau", "1e-8", "--spectrum", "power:20", "--rhs", "random", "--out", str(out)])
        outs.append((out / "plcg_stable_l1.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_usage_error_exit_code(tmp_path):
    assert run_cli(["solve", "--problem", "nosuch:1", "--out", str(tmp_path)]) == 1
    assert run_cli(["frobnicate"]) == 1
    assert run_cli(["solve", "--problem", "laplace2d:4", "--variant", "nosuch",
                    "--out", str(tmp_path / "x")]) == 1


def test_numeric_failure_exit_code(tmp_path):
    # diag(1..20) driven far past its finite-termination point with restarts
    # disabled ends in an unrecovered breakdown; the batch reports exit 2
    # but still writes every run's trace
    out = tmp_path / "runs"
    code = run_cli(["solve", "--problem", "diag:1..20", "--variant", "plcg_original,cg",
                    "--l", "3", "--tau", "1e-30", "--max-iters", "40",
                    "--max-restarts", "0", "--spectrum", "analytic:0,20", "--out", str(out)])
    assert code == 2
    assert (out / "cg.csv").exists() and (out / "plcg_original_l3.csv").exists()


def test_genmatrix_mm_roundtrip(tmp_path):
    mtx = tmp_path / "m.mtx"
    assert run_cli(["genmatrix", "--problem", "laplace2d:4", "--out", str(mtx)]) == 0
    out = tmp_path / "runs"
    code = run_cli(["solve", "--problem", f"mm:{mtx}", "--variant", "cg",
                    "--tau", "1e-10", "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "summary.csv")
    assert rows[0][2] == "converged"


def test_perfmodel_subcommand(tmp_path, capsys):
    code = run_cli(["perfmodel", "--glred", "4e-6", "--spmv", "1e-6", "--l", "1..5"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    table = {tuple(l.split(",")[:2]): float(l.split(",")[2]) for l in lines[1:]}
    assert table[("cg", "1")] == 9e-6
    assert table[("pcg_ghysels", "1")] == 4e-6
    assert table[("plcg_stable", "4")] == 1e-6


def test_perfmodel_speedup_csv(tmp_path):
    out = tmp_path / "pm.csv"
    code = run_cli(["perfmodel", "--l", "1,2", "--variants", "cg,plcg_stable",
                    "--nodes", "1,2,4,8,16,32", "--out", str(out)])
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["variant", "l", "nodes", "time_per_iter", "speedup_vs_cg1"]
    cg1 = [float(r[4]) for r in rows if r[0] == "cg" and r[2] == "1"]
    assert cg1[0] == 1.0


def test_emit_csv_rejects_empty():
    with pytest.raises(PipecgError):
        from pipecg.cli import emit_csv

        emit_csv(IterationTrace(), "/tmp/nope.csv")


def test_reference_problem_batch(tmp_path):
    # the desk-scale reproduction run: three pipeline depths on the
    # 100 x 100 Laplacian, analytic spectrum, tau = 1e-12
    out = tmp_path / "fig"
    code = run_cli([
        "solve", "--problem", "laplace2d:100", "--variant", "plcg_stable",
        "--l", "1,2,3", "--tau", "1e-12", "--spectrum", "analytic:0,8",
        "--out", str(out),
    ])
    assert code == 0
    for l in (1, 2, 3):
        _, rows = read_csv(out / f"plcg_stable_l{l}.csv")
        assert rows[-1][-1] == "converged"
    _, srows = read_csv(out / "summary.csv")
    assert len(srows) == 3
    assert all(float(r[6]) <= 5e-12 for r in srows)
