"""Classic CG, D-Lanczos and Ghysels' single-reduction pipelined CG.

All three share the trace convention of the pipelined engine: row t carries
the recursive residual norm of iterate x_t, so residual histories are
directly comparable across every variant in the package.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..diagnostics import BasisArchive, IterationTrace, lanczos_deviation, orthogonality_loss
from ..errors import DefinitenessError, NumericError
from ..sparsekit import CsrMatrix
from .config import OperationCounts, SolverConfig, SolveResult
from .state import VectorLedger

__all__ = ["run_cg", "run_dlanczos", "run_pcg_ghysels"]


class _ClassicBase:
    def __init__(self, a: CsrMatrix, b: np.ndarray, x0: np.ndarray, cfg: SolverConfig):
        self.a = a
        self.b = b
        self.cfg = cfg
        self.x = x0.copy()
        self.counters = OperationCounts()
        self.ledger = VectorLedger()
        self.trace = IterationTrace()
        self.archive = None
        self.warnings: list[str] = []
        self.ref_norm = 0.0

    def _true_resnorm(self, x) -> float:
        self.counters.spmv_diagnostic += 1
        return float(
            _kernels.csr_residual_norm(self.a.row_offsets, self.a.col_indices, self.a.values, x, self.b)
        )

    def _emit_row(self, recursive, event=""):
        orth = dev = None
        if (
            self.archive is not None
            and len(self.trace) % self.cfg.diag_interval == 0
            and self.archive.count >= 1
        ):
            orth = orthogonality_loss(self.archive)
            if self.archive.count >= 2 and self.archive.gammas:
                dev = lanczos_deviation(self.a, self.archive, matvec_hook=self._count_diag_spmv)
        return self.trace.append(recursive, self._true_resnorm(self.x), orth, dev, event)

    def _count_diag_spmv(self):
        self.counters.spmv_diagnostic += 1

    def _initial_residual(self):
        r = np.empty(self.a.n)
        self.ledger.acquire()
        self.a.matvec(self.x, out=r)
        self.counters.spmv_setup += 1
        np.subtract(self.b, r, out=r)
        nrm = float(_kernels.seq_norm2(r))
        self.counters.dots_setup += 1
        self.ref_norm = nrm
        return r, nrm

    def _finish(self, status, final_rec) -> SolveResult:
        self.counters.live_vector_peak = self.ledger.peak
        return SolveResult(
            x=self.x,
            status=status,
            iterations=self.trace.rows[-1].iteration,
            restarts=0,
            final_recursive_resnorm=final_rec,
            final_true_resnorm=self._true_resnorm(self.x),
            r0_norm=self.ref_norm,
            trace=self.trace,
            counts=self.counters,
            archive=self.archive,
            warnings=self.warnings,
        )


class _CgEngine(_ClassicBase):
    """Hestenes-Stiefel CG: two reductions, one spmv per iteration."""

    def run(self) -> SolveResult:
        r, nrm = self._initial_residual()
        if nrm == 0.0:
            self._emit_row(0.0, event="converged")
            return self._finish("converged", 0.0)
        self._emit_row(nrm)
        p = r.copy()
        w = np.empty(self.a.n)
        self.ledger.acquire(2)
        rr = _kernels.seq_dot(r, r)
        self.counters.dots += 1
        t = 0
        while True:
            self.a.matvec(p, out=w)
            self.counters.spmv += 1
            self.counters.iterations += 1
            pw = _kernels.seq_dot(p, w)
            self.counters.dots += 1
            if pw <= 0.0:
                raise DefinitenessError(f"(p, Ap) = {pw} <= 0 at iteration {t}; matrix is not SPD")
            alpha = rr / pw
            _kernels.axpy_inplace(alpha, p, self.x)
            _kernels.axpy_inplace(-alpha, w, r)
            self.counters.axpys += 2
            rr_new = _kernels.seq_dot(r, r)
            self.counters.dots += 1
            rec = math.sqrt(rr_new)
            if not math.isfinite(rec):
                raise NumericError("non-finite residual norm", iteration=t)
            t += 1
            converged = rec / self.ref_norm < self.cfg.tau
            self._emit_row(rec, event="converged" if converged else "")
            if converged:
                return self._finish("converged", rec)
            if t >= self.cfg.max_iterations:
                return self._finish("max_iterations", rec)
            beta = rr_new / rr
            rr = rr_new
            _kernels.xpay(r, beta, p, p)
            self.counters.axpys += 1


class _DLanczosEngine(_ClassicBase):
    """Direct Lanczos: explicit three-term basis plus running LU solve."""

    def __init__(self, a, b, x0, cfg):
        super().__init__(a, b, x0, cfg)
        if cfg.record_diagnostics:
            self.archive = BasisArchive(a.n)

    def run(self) -> SolveResult:
        r, nrm = self._initial_residual()
        if nrm == 0.0:
            self._emit_row(0.0, event="converged")
            return self._finish("converged", 0.0)
        _kernels.divide_inplace(nrm, r)
        v = r  # r buffer becomes v_0
        if self.archive is not None:
            self.archive.add_basis_vector(v)
        self._emit_row(nrm)
        v_prev = None
        p = None
        w = np.empty(self.a.n)
        self.ledger.acquire()
        gamma, delta, eta, zeta = [], [], [], [nrm]
        j = 0
        while True:
            self.a.matvec(v, out=w)
            self.counters.spmv += 1
            self.counters.iterations += 1
            if j >= 1:
                _kernels.axpy_inplace(-delta[j - 1], v_prev, w)
                self.counters.axpys += 1
            g = _kernels.seq_dot(w, v)
            self.counters.dots += 1
            gamma.append(g)
            if j == 0:
                if g <= 0.0:
                    raise DefinitenessError(f"(Av, v) = {g} <= 0; matrix is not SPD")
                eta.append(g)
                p = v / g
                self.ledger.acquire()
            else:
                lam = delta[j - 1] / eta[j - 1]
                eta.append(g - lam * delta[j - 1])
                zeta.append(-lam * zeta[j - 1])
                if not (math.isfinite(eta[j]) and math.isfinite(zeta[j])):
                    raise NumericError("non-finite LU factor", iteration=j)
                _kernels.axpy_inplace(zeta[j - 1], p, self.x)
                if eta[j] == 0.0:
                    raise DefinitenessError(f"eta_{j} is zero; matrix is not SPD")
                _kernels.three_term_update(v, -delta[j - 1], p, 0.0, p, eta[j], p)
                self.counters.axpys += 2
                rec = abs(zeta[j])
                converged = rec / self.ref_norm < self.cfg.tau
                self._emit_row(rec, event="converged" if converged else "")
                if converged:
                    return self._finish("converged", rec)
                if j >= self.cfg.max_iterations:
                    return self._finish("max_iterations", rec)
            _kernels.axpy_inplace(-g, v, w)
            self.counters.axpys += 1
            d = float(_kernels.seq_norm2(w))
            self.counters.dots += 1
            delta.append(d)
            if self.archive is not None:
                self.archive.add_tridiag_entry(g, d)
            if d == 0.0:
                # invariant subspace: one more step lands on the exact solution
                _kernels.axpy_inplace(zeta[j], p, self.x)
                self.counters.axpys += 1
                self._emit_row(0.0, event="converged")
                self.warnings.append(f"lucky breakdown at step {j}: invariant subspace reached")
                return self._finish("converged", 0.0)
            _kernels.divide_inplace(d, w)
            if v_prev is None:
                v_prev = v
                v = w
                w = np.empty(self.a.n)
                self.ledger.acquire()
            else:
                v_prev, v, w = v, w, v_prev
            if self.archive is not None:
                self.archive.add_basis_vector(v)
            j += 1


class _PcgGhyselsEngine(_ClassicBase):
    """Single-reduction pipelined CG with fully recursive auxiliary vectors.

    Mathematically equivalent to CG; its recurrences propagate local
    rounding errors, which is exactly the attainable-accuracy defect the
    stable deep-pipelined method removes.
    """

    def run(self) -> SolveResult:
        r, nrm = self._initial_residual()
        if nrm == 0.0:
            self._emit_row(0.0, event="converged")
            return self._finish("converged", 0.0)
        self._emit_row(nrm)
        n = self.a.n
        w = np.empty(n)
        self.ledger.acquire()
        self.a.matvec(r, out=w)
        self.counters.spmv_setup += 1
        z = np.empty(n)
        s = np.empty(n)
        p = np.empty(n)
        q = np.empty(n)
        self.ledger.acquire(4)
        gamma_prev = 0.0
        alpha_prev = 0.0
        t = 0
        while True:
            gamma = _kernels.seq_dot(r, r)
            dlt = _kernels.seq_dot(w, r)
            self.counters.dots += 2
            rec = math.sqrt(gamma)
            if not math.isfinite(rec):
                raise NumericError("non-finite residual norm", iteration=t)
            if t > 0:
                converged = rec / self.ref_norm < self.cfg.tau
                self._emit_row(rec, event="converged" if converged else "")
                if converged:
                    return self._finish("converged", rec)
                if t >= self.cfg.max_iterations:
                    return self._finish("max_iterations", rec)
            self.a.matvec(w, out=q)
            self.counters.spmv += 1
            self.counters.iterations += 1
            if t == 0:
                if dlt <= 0.0:
                    raise DefinitenessError(f"(Ar, r) = {dlt} <= 0; matrix is not SPD")
                beta = 0.0
                alpha = gamma / dlt
                z[:] = q
                s[:] = w
                p[:] = r
            else:
                beta = gamma / gamma_prev
                denom = dlt - beta * gamma / alpha_prev
                if denom == 0.0 or not math.isfinite(denom):
                    raise NumericError("degenerate step-length denominator", iteration=t)
                alpha = gamma / denom
                _kernels.xpay(q, beta, z, z)
                _kernels.xpay(w, beta, s, s)
                _kernels.xpay(r, beta, p, p)
            _kernels.axpy_inplace(alpha, p, self.x)
            _kernels.axpy_inplace(-alpha, s, r)
            _kernels.axpy_inplace(-alpha, z, w)
            self.counters.axpys += 6
            gamma_prev = gamma
            alpha_prev = alpha
            t += 1


def run_cg(a, b, x0, cfg) -> SolveResult:
    return _CgEngine(a, b, x0, cfg).run()


def run_dlanczos(a, b, x0, cfg) -> SolveResult:
    return _DLanczosEngine(a, b, x0, cfg).run()


def run_pcg_ghysels(a, b, x0, cfg) -> SolveResult:
    return _PcgGhyselsEngine(a, b, x0, cfg).run()
