"""Engine for the original and stable deep-pipelined CG variants.

One pipeline iteration performs: the single matrix product, warm-up copies,
finalization of the Gram column initiated l iterations earlier, the
tridiagonal column, the basis recurrences, initiation of the next dot
products into the FIFO, and the LU/search-direction/iterate advance with the
recursive stopping test.  Square-root and LU breakdowns restart the pipeline
from the current iterate (bounded by ``max_restarts``); an exactly zero
off-diagonal is the lucky case and is drained to the exact solution instead.

The preconditioned path threads the unpreconditioned auxiliary vectors
``u_i = M z_i`` through the same recurrences so all Gram dot products become
M-inner products without ever applying M itself; with the identity
preconditioner it performs bitwise the same arithmetic as the plain solver.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..diagnostics import BasisArchive, IterationTrace, lanczos_deviation, orthogonality_loss
from ..errors import BreakdownSignal, NumericError
from ..sparsekit import CsrMatrix
from .config import OperationCounts, SolverConfig, SolveResult
from .pipeline_ops import (
    gram_finalize,
    lu_advance,
    original_basis_update,
    solution_update,
    stable_basis_update,
    tridiag_update,
)
from .state import BasisWindow, Ring, SolveState, TridiagFactors, VectorLedger

__all__ = ["PipelinedEngine"]


class PipelinedEngine:
    def __init__(self, a: CsrMatrix, b: np.ndarray, x0: np.ndarray, cfg: SolverConfig):
        self.a = a
        self.b = b
        self.cfg = cfg
        self.l = cfg.l
        self.stable = cfg.variant == "plcg_stable"
        self.shifts = cfg.resolved_shifts()
        self.precon = cfg.precon
        self.counters = OperationCounts()
        self.ledger = VectorLedger()
        self.trace = IterationTrace()
        self.archive = BasisArchive(a.n) if cfg.record_diagnostics else None
        self.archive_live = cfg.record_diagnostics
        self.warnings: list[str] = []
        self.state = SolveState(x0.copy(), 0.0)
        layout = "stable" if self.stable else "original"
        self.bw = BasisWindow(a.n, self.l, layout, cfg.economize_dots, self.ledger)
        self.tf = TridiagFactors()
        self.ref_norm = 0.0  # stopping reference: first cycle's residual norm
        self.steps = 0
        self._pending: list[np.ndarray] = []  # spmv / precon results awaiting adoption
        self._injected = False  # breakdown injection fires once per solve

    # -- small helpers -------------------------------------------------------

    def _spmv(self, x, out, kind="iteration"):
        self.a.matvec(x, out=out)
        if kind == "iteration":
            self.counters.spmv += 1
        else:
            self.counters.spmv_setup += 1

    def _true_resnorm(self, x) -> float:
        self.counters.spmv_diagnostic += 1
        return float(
            _kernels.csr_residual_norm(self.a.row_offsets, self.a.col_indices, self.a.values, x, self.b)
        )

    def _alloc(self) -> np.ndarray:
        self.ledger.acquire()
        buf = np.empty(self.a.n)
        self._pending.append(buf)
        return buf

    def _adopt(self, buf):
        self._pending.remove(buf)

    def _drop_pending(self):
        for _ in self._pending:
            self.ledger.release()
        self._pending.clear()

    def _emit_row(self, recursive, true_res, event=""):
        orth = dev = None
        if (
            self.archive is not None
            and self.archive_live
            and event != "breakdown"
            and len(self.trace) % self.cfg.diag_interval == 0
        ):
            if self.archive.count >= 1:
                orth = orthogonality_loss(self.archive)
            if self.archive.count >= 2 and self.archive.gammas:
                dev = lanczos_deviation(
                    self.a,
                    self.archive,
                    matvec_hook=self._count_diag_spmv,
                )
        return self.trace.append(recursive, true_res, orth, dev, event)

    def _count_diag_spmv(self):
        self.counters.spmv_diagnostic += 1

    # -- cycle setup -----------------------------------------------------------

    def _start_cycle(self, first: bool) -> str | None:
        """(Re)build the pipeline state from the current iterate.

        Returns 'converged' when the fresh residual already meets the
        stopping criterion, 'zero' for an exactly zero right-hand-side
        residual, else None.
        """
        r = self._alloc()
        self._spmv(self.state.x, r, kind="setup")
        np.subtract(self.b, r, out=r)
        if self.precon is not None:
            rh = self._alloc()
            self.precon.apply(r, out=rh)
            self.counters.precon_applies += 1
            nrm = math.sqrt(_kernels.seq_dot(rh, r))
            true0 = _kernels.seq_norm2(r)
            self.counters.dots_setup += 2
        else:
            rh = r
            nrm = math.sqrt(_kernels.seq_dot(r, r))
            true0 = nrm
            self.counters.dots_setup += 1

        event = "" if first else "restart"
        if first:
            self.ref_norm = nrm
        if nrm == 0.0:
            self._drop_pending()
            self._emit_row(0.0, true0, event="converged")
            return "zero"
        if not first and nrm / self.ref_norm < self.cfg.tau:
            self._drop_pending()
            self._emit_row(nrm, true0, event="converged")
            return "converged"

        _kernels.divide_inplace(nrm, rh)  # rh becomes v_0
        if self.precon is not None:
            _kernels.divide_inplace(nrm, r)  # r becomes u_0 = M v_0
            u_ring = Ring(self.ledger, "u")
            self._adopt(r)
            u_ring.put(0, r, counted=True)
            self.state.u_ring = u_ring
        self._adopt(rh)
        self.bw.rings[0].put(0, rh, counted=True)
        # only the leading and trailing bases read their index-0 vector; the
        # intermediate bases start from their warm-up copies (index k)
        self.bw.z_ring.put(0, rh.copy())
        self.bw.gram.set(0, 0, 1.0)
        self.tf.clear()
        self.state.r0_norm = nrm
        if self.archive is not None and self.archive_live:
            self.archive.add_basis_vector(rh)
            self.archive.add_z_vector(rh)
            self.archive.add_gram_column(0, {0: 1.0})
        self._emit_row(nrm, true0, event=event)
        return None

    def _teardown_cycle(self):
        self.bw.reset()
        if self.state.u_ring is not None:
            self.state.u_ring.clear()
            self.state.u_ring = None
        if self.state.p is not None:
            self.state.p = None
            self.ledger.release()
        self._drop_pending()
        self.tf.clear()
        if self.archive_live and self.state.restarts > 0:
            # a restarted basis no longer satisfies one Lanczos relation;
            # freeze the archive at the pre-restart history
            self.archive_live = False

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SolveResult:
        status = self._start_cycle(first=True)
        if status == "zero":
            return self._finish("converged", 0.0)
        while True:
            try:
                status, final_rec = self._run_cycle()
                break
            except BreakdownSignal as exc:
                self.warnings.append(str(exc))
                last_rec = abs(self.tf.zeta[-1]) if self.tf.zeta else self.state.r0_norm
                self._emit_row(last_rec, self._true_resnorm(self.state.x), event="breakdown")
                if self.state.restarts >= self.cfg.max_restarts:
                    status, final_rec = "breakdown_unrecovered", last_rec
                    break
                self.state.restarts += 1
                self._teardown_cycle()
                outcome = self._start_cycle(first=False)
                if outcome in ("converged", "zero"):
                    status, final_rec = "converged", self.trace.last.recursive_resnorm
                    break
        return self._finish(status, final_rec)

    def _finish(self, status, final_rec) -> SolveResult:
        self.counters.live_vector_peak = self.ledger.peak
        if self.bw.near_breakdowns:
            self.warnings.extend(
                f"near-breakdown at iteration {i}: root argument {arg:.3e}"
                for i, arg in self.bw.near_breakdowns
            )
        return SolveResult(
            x=self.state.x,
            status=status,
            iterations=self.steps,
            restarts=self.state.restarts,
            final_recursive_resnorm=final_rec,
            final_true_resnorm=self._true_resnorm(self.state.x),
            r0_norm=self.ref_norm,
            trace=self.trace,
            counts=self.counters,
            archive=self.archive,
            warnings=self.warnings,
        )

    def _run_cycle(self) -> tuple[str, float]:
        l = self.l
        cfg = self.cfg
        bw = self.bw
        tf = self.tf
        z = bw.z_ring
        u = self.state.u_ring
        i = 0
        while True:
            # matrix-vector product (the iteration's only spmv)
            w = self._alloc()
            self._spmv(z[i], w)
            self.counters.iterations += 1
            mz = None
            if self.precon is not None:
                mz = self._alloc()
                self.precon.apply(w, out=mz)
                self.counters.precon_applies += 1
            if i < l:
                sigma = self.shifts[i]
                if self.precon is not None:
                    _kernels.axpy_inplace(-sigma, u[i], w)
                    self._adopt(w)
                    u.put(i + 1, w, counted=True)
                    _kernels.axpy_inplace(-sigma, z[i], mz)
                    self._adopt(mz)
                    z.put(i + 1, mz, counted=True)
                    self.counters.axpys += 2
                else:
                    _kernels.axpy_inplace(-sigma, z[i], w)
                    self._adopt(w)
                    z.put(i + 1, w, counted=True)
                    self.counters.axpys += 1
                if self.archive is not None and self.archive_live:
                    self.archive.add_z_vector(z[i + 1])
                w = mz = None

            # warm-up copy of the intermediate basis vector.  Basis k only
            # ever reads its index-k vector (the t = 0 recurrence drops the
            # delta_{-1} term), so one copy into one ring suffices.
            if self.stable and i < l - 1:
                bw.rings[i + 1].put(i + 1, z[i + 1].copy())

            lucky = False
            if i >= l:
                t = i - l
                inject = cfg.inject_breakdown_at == i and not self._injected
                if inject:
                    self._injected = True
                gram_finalize(bw, i, l, inject_breakdown=inject)
                tridiag_update(bw, tf, i, l, self.shifts)
                if not (math.isfinite(tf.gamma[t]) and math.isfinite(tf.delta[t])):
                    raise NumericError("non-finite tridiagonal entry", iteration=t)
                if self.archive is not None and self.archive_live:
                    self.archive.add_gram_column(t + 1, bw.gram.full_column(t + 1))
                    self.archive.add_tridiag_entry(tf.gamma[t], tf.delta[t])
                lucky = tf.delta[t] == 0.0
                if not lucky:
                    mv = mz if self.precon is not None else w
                    if self.precon is not None:
                        dm1 = tf.delta_at(t - 1)
                        _kernels.three_term_update(w, -tf.gamma[t], u[i], -dm1, u[i - 1], tf.delta[t], w)
                        self._adopt(w)
                        u.put(i + 1, w, counted=True)
                        self.counters.axpys += 2
                    self._adopt(mv)
                    if self.stable:
                        stable_basis_update(bw, tf, i, l, self.shifts, mv)
                        self.counters.axpys += 2 * (l + 1)
                    else:
                        original_basis_update(bw, tf, i, l, mv)
                        self.counters.axpys += 2 + (t + 1 - max(0, t + 1 - 2 * l))
                    if self.archive is not None and self.archive_live:
                        self.archive.add_basis_vector(bw.rings[0][t + 1])
                        self.archive.add_z_vector(z[i + 1])

            if not lucky:
                # initiate the dot products whose results the Gram update
                # will consume l iterations from now
                self._initiate_dots(i)
                z.evict_below(max(0, min(i, i - l + 3)) if self.stable else max(0, min(i, i - l + 1)))
                if u is not None:
                    u.evict_below(i)

            if i >= l:
                t = i - l
                if i > l:
                    # LU factors stay valid even when delta_t == 0 (lucky)
                    lu_advance(tf, i, l)
                    if not (math.isfinite(tf.eta[t]) and math.isfinite(tf.zeta[t])):
                        raise NumericError("non-finite LU factor", iteration=t)
                solution_update(self.state, bw, tf, i, l)
                if self.archive is not None and self.archive_live:
                    self.archive.add_p_vector(self.state.p)
                if i > l:
                    self.steps += 1
                    self.counters.axpys += 2
                    rec = abs(tf.zeta[t])
                    converged = rec / self.ref_norm < cfg.tau
                    self._emit_row(rec, self._true_resnorm(self.state.x), event="converged" if converged else "")
                    if converged:
                        return "converged", rec
                    if not lucky and t >= cfg.max_iterations:
                        return "max_iterations", rec
                if lucky:
                    return self._lucky_drain(t)
            i += 1

    def _initiate_dots(self, i):
        l = self.l
        bw = self.bw
        z = bw.z_ring
        probe = self.state.u_ring[i + 1] if self.precon is not None else z[i + 1]
        rows: dict[int, float] = {}
        if bw.gram.economized:
            boundary = i + 1 - l
            if boundary >= 0:
                rows[boundary] = _kernels.seq_dot(probe, bw.rings[0][boundary])
        else:
            for j in range(max(0, i - 2 * l + 1), i - l + 2):
                rows[j] = _kernels.seq_dot(probe, bw.rings[0][j])
        for j in range(max(0, i - l + 2), i + 2):
            rows[j] = _kernels.seq_dot(probe, z[j])
        bw.inflight.append((i + 1, rows))
        self.counters.dots += len(rows)
        self.counters.dots_by_iteration.append(len(rows))

    def _lucky_drain(self, t) -> tuple[str, float]:
        """delta_t == 0: the exact solution should lie in the current space.

        The drained iterate is verified against the true residual; if the
        zero off-diagonal was a numerical fluke rather than an invariant
        subspace, fall back to the breakdown/restart path (keeping the
        advanced iterate, which used only valid quantities).
        """
        _kernels.axpy_inplace(self.tf.zeta[t], self.state.p, self.state.x)
        self.counters.axpys += 1
        true_res = self._true_resnorm(self.state.x)
        if true_res / self.ref_norm > self.cfg.tau:
            raise BreakdownSignal(
                f"zero off-diagonal at step {t} did not yield convergence "
                f"(true relative residual {true_res / self.ref_norm:.3e})",
                root_argument=0.0,
            )
        self.warnings.append(f"lucky breakdown at step {t}: invariant subspace reached")
        self.steps += 1
        self.trace.append(0.0, true_res, event="converged")
        return "converged", 0.0
