"""Command-line harness: build or load a problem, run solver batches, emit
per-iteration CSV traces and a summary table, and evaluate the analytic
performance model.

Subcommands: ``solve``, ``perfmodel``, ``genmatrix``.  A key=value config
file can seed any ``solve`` option, with command-line flags taking
precedence; the seed falls back to the ``KRYLOV_SEED`` environment variable.
Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
(unrecovered breakdown or non-finite recurrence in any run of the batch).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import perfmodel as pm
from .diagnostics import IterationTrace
from .errors import PipecgError
from .precon import build as build_preconditioner
from .solvers import PIPELINED_VARIANTS, VARIANTS, SolverConfig, solve
from .sparsekit import CsrMatrix, diag_matrix, laplace2d, norm2, read_matrix_market, spmv, write_matrix_market
from .spectral import ShiftSet, SpectrumEstimate, chebyshev_shifts, power_method

CSV_HEADER = "iter,recursive_resnorm,true_resnorm,orth_loss,lanczos_dev,event"
SUMMARY_HEADER = (
    "variant,l,status,iterations,restarts,rows,final_true_relres,final_recursive_relres,"
    "spmv,dots,axpys,precon_applies,live_vector_peak"
)


@dataclass
class RunSpec:
    """Resolved configuration for one ``solve`` invocation (a batch)."""

    problem: str = "laplace2d:10"
    variants: list[str] = field(default_factory=lambda: ["plcg_stable"])
    l_values: list[int] = field(default_factory=lambda: [1])
    tau: float = 1e-8
    max_iters: int = 1000
    shifts: str = "auto"
    spectrum: str = "power:50"
    precon: str = "none"
    rhs: str = "ones"
    out: str = "."
    diagnostics: bool = False
    diag_interval: int = 10
    max_restarts: int = 10
    seed: int = 0

    def validate(self):
        if not self.variants:
            raise PipecgError("need at least one variant")
        for v in self.variants:
            if v not in VARIANTS:
                raise PipecgError(f"unknown variant {v!r}")
        if not self.l_values or min(self.l_values) < 1:
            raise PipecgError("l values must be >= 1")
        if self.rhs not in ("ones", "random"):
            raise PipecgError(f"unknown rhs kind {self.rhs!r}")


def _fmt(x) -> str:
    return "NA" if x is None else repr(float(x))


def emit_csv(trace: IterationTrace, path: str) -> None:
    """One row per recorded iteration; floats as shortest round-trip text."""
    if len(trace) == 0:
        raise PipecgError("refusing to write an empty trace")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in trace:
            fh.write(
                f"{row.iteration},{row.recursive_resnorm!r},{row.true_resnorm!r},"
                f"{_fmt(row.orth_loss)},{_fmt(row.lanczos_dev)},{row.event}\n"
            )


# -- problem construction -----------------------------------------------------


def build_problem(spec: str) -> CsrMatrix:
    kind, _, arg = spec.partition(":")
    if kind == "laplace2d":
        return laplace2d(int(arg))
    if kind == "mm":
        return read_matrix_market(arg)
    if kind == "diag":
        if ".." in arg:
            lo, hi = arg.split("..")
            vals = np.arange(float(lo), float(hi) + 1.0)
        else:
            vals = np.array([float(v) for v in arg.split(",")])
        return diag_matrix(vals)
    raise PipecgError(f"unknown problem spec {spec!r} (expected laplace2d:N, mm:PATH or diag:SPEC)")


def build_rhs(a: CsrMatrix, kind: str, seed: int) -> np.ndarray:
    if kind == "ones":
        return spmv(a, np.ones(a.n))  # exact solution = ones
    return np.random.default_rng(seed).standard_normal(a.n)


def resolve_spectrum(spec: str, a: CsrMatrix, seed: int) -> SpectrumEstimate:
    kind, _, arg = spec.partition(":")
    if kind == "analytic":
        lo, hi = (float(v) for v in arg.split(","))
        return SpectrumEstimate(lo, hi, "analytic")
    if kind == "power":
        iters = int(arg) if arg else 50
        lam_max = power_method(a, iters=iters, seed=seed)
        return SpectrumEstimate(0.0, lam_max, "power_method")
    raise PipecgError(f"unknown spectrum spec {spec!r} (expected analytic:lo,hi or power:iters)")


def resolve_shifts(shift_spec: str, spectrum: SpectrumEstimate, l: int) -> ShiftSet:
    if shift_spec == "auto":
        return chebyshev_shifts(spectrum, l)
    sigmas = np.array([float(v) for v in shift_spec.split(",")])
    if sigmas.shape[0] != l:
        raise PipecgError(f"explicit shifts have length {sigmas.shape[0]}, need {l}")
    return ShiftSet(sigmas)


def resolve_precon(spec: str, a: CsrMatrix):
    if spec == "none":
        return None
    kind, _, arg = spec.partition(":")
    block = int(arg) if arg else None
    return build_preconditioner(a, kind, block_size=block)


# -- the solve batch -----------------------------------------------------------


def run(spec: RunSpec) -> int:
    """Execute every (variant, l) combination; one CSV per run plus summary."""
    spec.validate()
    a = build_problem(spec.problem)
    b = build_rhs(a, spec.rhs, spec.seed)
    b_norm = norm2(b)
    os.makedirs(spec.out, exist_ok=True)
    spectrum = None
    needs_spectrum = spec.shifts == "auto" and any(v in PIPELINED_VARIANTS for v in spec.variants)
    if needs_spectrum:
        spectrum = resolve_spectrum(spec.spectrum, a, spec.seed)
    precon = resolve_precon(spec.precon, a)

    summary_lines = []
    failed = False
    for variant in spec.variants:
        pipelined = variant in PIPELINED_VARIANTS
        for l in spec.l_values if pipelined else [1]:
            shifts = resolve_shifts(spec.shifts, spectrum, l) if pipelined else None
            cfg = SolverConfig(
                variant=variant,
                l=l,
                max_iterations=spec.max_iters,
                tau=spec.tau,
                shifts=shifts,
                precon=precon if variant == "plcg_stable" else None,
                max_restarts=spec.max_restarts,
                record_diagnostics=spec.diagnostics,
                diag_interval=spec.diag_interval,
            )
            try:
                res = solve(a, b, None, cfg)
            except PipecgError as exc:
                print(f"run {variant} l={l} failed: {exc}", file=sys.stderr)
                failed = True
                continue
            name = f"{variant}_l{l}" if pipelined else variant
            emit_csv(res.trace, os.path.join(spec.out, name + ".csv"))
            c = res.counts
            summary_lines.append(
                f"{variant},{l if pipelined else ''},{res.status},{res.iterations},{res.restarts},"
                f"{len(res.trace)},{res.final_true_resnorm / b_norm!r},"
                f"{res.final_recursive_resnorm / res.r0_norm if res.r0_norm else 0.0!r},"
                f"{c.spmv},{c.dots},{c.axpys},{c.precon_applies},{c.live_vector_peak}"
            )
            if res.status == "breakdown_unrecovered":
                failed = True

    summary_path = os.path.join(spec.out, "summary.csv")
    with open(summary_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for line in summary_lines:
            fh.write(line + "\n")
    print(SUMMARY_HEADER)
    for line in summary_lines:
        print(line)
    return 2 if failed else 0


# -- argument plumbing -----------------------------------------------------------


def _parse_int_list(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise PipecgError(f"config line {lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def _env_seed() -> int:
    return int(os.environ.get("KRYLOV_SEED", "0"))


def make_runspec(args) -> RunSpec:
    spec = RunSpec(seed=_env_seed())
    if args.config:
        cfgmap = read_config_file(args.config)
        for key, value in cfgmap.items():
            if key == "problem":
                spec.problem = value
            elif key == "variant":
                spec.variants = value.split(",")
            elif key == "l":
                spec.l_values = _parse_int_list(value)
            elif key == "tau":
                spec.tau = float(value)
            elif key == "max_iters":
                spec.max_iters = int(value)
            elif key == "shifts":
                spec.shifts = value
            elif key == "spectrum":
                spec.spectrum = value
            elif key == "precon":
                spec.precon = value
            elif key == "rhs":
                spec.rhs = value
            elif key == "out":
                spec.out = value
            elif key == "diagnostics":
                spec.diagnostics = value.lower() in ("1", "true", "yes")
            elif key == "diag_interval":
                spec.diag_interval = int(value)
            elif key == "max_restarts":
                spec.max_restarts = int(value)
            elif key == "seed":
                spec.seed = int(value)
            else:
                raise PipecgError(f"unknown config key {key!r}")
    if args.problem is not None:
        spec.problem = args.problem
    if args.variant is not None:
        spec.variants = args.variant.split(",")
    if args.l is not None:
        spec.l_values = _parse_int_list(args.l)
    if args.tau is not None:
        spec.tau = args.tau
    if args.max_iters is not None:
        spec.max_iters = args.max_iters
    if args.shifts is not None:
        spec.shifts = args.shifts
    if args.spectrum is not None:
        spec.spectrum = args.spectrum
    if args.precon is not None:
        spec.precon = args.precon
    if args.rhs is not None:
        spec.rhs = args.rhs
    if args.out is not None:
        spec.out = args.out
    if args.diagnostics:
        spec.diagnostics = True
    if args.diag_interval is not None:
        spec.diag_interval = args.diag_interval
    if args.max_restarts is not None:
        spec.max_restarts = args.max_restarts
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def cmd_perfmodel(args) -> int:
    model = pm.MachineModel(
        t_spmv=args.spmv,
        glred_base=args.glred,
        glred_log_coeff=args.glred_log,
        t_prec=args.prec,
    )
    l_values = _parse_int_list(args.l)
    variants = args.variants.split(",")
    lines = []
    if args.nodes:
        nodes = _parse_int_list(args.nodes)
        header = "variant,l,nodes,time_per_iter,speedup_vs_cg1"
        for variant in variants:
            for l in l_values if variant in PIPELINED_VARIANTS else [1]:
                for p, s in pm.speedup_curve(model, variant, l, nodes):
                    t = pm.iteration_time(model, variant, l, nodes=p)
                    lines.append(f"{variant},{l},{p},{t!r},{s!r}")
    else:
        header = "variant,l,time_per_iter"
        for variant in variants:
            for l in l_values if variant in PIPELINED_VARIANTS else [1]:
                t = pm.iteration_time(model, variant, l, nodes=1)
                lines.append(f"{variant},{l},{t!r}")
    print(header)
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(header + "\n")
            for line in lines:
                fh.write(line + "\n")
    return 0


def cmd_genmatrix(args) -> int:
    a = build_problem(args.problem)
    write_matrix_market(a, args.out, symmetric=True)
    print(f"wrote {args.out}: n={a.n}, nnz={a.nnz}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipecg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run solver variants and emit CSV traces")
    ps.add_argument("--problem", help="laplace2d:N | mm:PATH | diag:SPEC")
    ps.add_argument("--variant", help="comma list of variants")
    ps.add_argument("--l", help="pipeline lengths, e.g. 1,2,3 or 1..5")
    ps.add_argument("--tau", type=float, help="relative tolerance")
    ps.add_argument("--max-iters", type=int, dest="max_iters")
    ps.add_argument("--shifts", help="auto | comma list of explicit shifts")
    ps.add_argument("--spectrum", help="analytic:lo,hi | power:iters")
    ps.add_argument("--precon", help="none | jacobi | block_jacobi:BS")
    ps.add_argument("--rhs", help="ones (b = A*ones) | random")
    ps.add_argument("--out", help="output directory for CSVs")
    ps.add_argument("--diagnostics", action="store_true", help="record basis diagnostics")
    ps.add_argument("--diag-interval", type=int, dest="diag_interval")
    ps.add_argument("--max-restarts", type=int, dest="max_restarts")
    ps.add_argument("--seed", type=int, help="RNG seed (fallback: env KRYLOV_SEED)")
    ps.add_argument("--config", help="key=value config file; flags override")

    pp = sub.add_parser("perfmodel", help="evaluate the analytic time model")
    pp.add_argument("--glred", type=float, default=5e-6, help="reduction latency at 1 node (s)")
    pp.add_argument("--glred-log", type=float, default=2e-6, dest="glred_log", help="reduction cost per log2(nodes) (s)")
    pp.add_argument("--spmv", type=float, default=1e-4, help="spmv time at 1 node (s)")
    pp.add_argument("--prec", type=float, default=0.0, help="additive preconditioner cost per iteration (s)")
    pp.add_argument("--l", default="1", help="pipeline lengths, e.g. 1..5")
    pp.add_argument("--variants", default="cg,pcg_ghysels,plcg_stable")
    pp.add_argument("--nodes", help="node counts for speedup curves, e.g. 1,2,4,8")
    pp.add_argument("--out", help="optional CSV output path")

    pg = sub.add_parser("genmatrix", help="write a problem matrix in Matrix Market format")
    pg.add_argument("--problem", required=True)
    pg.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "solve":
            return run(make_runspec(args))
        if args.command == "perfmodel":
            return cmd_perfmodel(args)
        if args.command == "genmatrix":
            return cmd_genmatrix(args)
    except (PipecgError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
