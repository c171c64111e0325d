"""Spectrum-interval estimation and Chebyshev shifts for the auxiliary basis.

The pipelined solvers apply a degree-l polynomial to build their auxiliary
basis; its conditioning is best when the polynomial is small over the
operator spectrum.  The shifts that minimize the 2-norm over an interval
[lambda_min, lambda_max] are the Chebyshev points of that interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PipecgError
from .sparsekit import CsrMatrix
from . import _kernels

__all__ = ["SpectrumEstimate", "ShiftSet", "power_method", "chebyshev_shifts"]


@dataclass(frozen=True)
class SpectrumEstimate:
    """Interval [lambda_min, lambda_max] believed to contain the spectrum."""

    lambda_min: float
    lambda_max: float
    source: str = "user"  # one of: analytic | power_method | user

    def __post_init__(self):
        if self.lambda_min < 0 or self.lambda_max <= 0 or self.lambda_min > self.lambda_max:
            raise PipecgError(
                f"invalid spectrum interval [{self.lambda_min}, {self.lambda_max}]"
            )

    @property
    def degenerate(self) -> bool:
        return self.lambda_min == self.lambda_max


@dataclass(frozen=True)
class ShiftSet:
    """The l stabilizing shifts sigma_0..sigma_{l-1}; length equals l."""

    sigmas: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=np.float64))
        if self.sigmas.ndim != 1 or self.sigmas.shape[0] < 1:
            raise PipecgError("shift set must be a nonempty 1-D array")

    def __len__(self):
        return int(self.sigmas.shape[0])

    def __getitem__(self, i):
        return float(self.sigmas[i])

    @classmethod
    def zeros(cls, l: int) -> "ShiftSet":
        return cls(np.zeros(l))


def power_method(a: CsrMatrix, iters: int = 50, seed: int = 0) -> float:
    """Rayleigh-quotient estimate of lambda_max after ``iters`` iterations.

    The start vector is drawn from a seeded generator so estimates are
    reproducible.  Raises for a (numerically) zero operator.
    """
    if iters < 1:
        raise PipecgError("power_method needs iters >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.n)
    nrm = _kernels.seq_norm2(v)
    if nrm == 0.0:
        raise PipecgError("degenerate start vector")
    _kernels.scale_inplace(1.0 / nrm, v)
    av = np.empty_like(v)
    rayleigh = 0.0
    for _ in range(iters):
        a.matvec(v, out=av)
        denom = _kernels.seq_dot(v, v)
        rayleigh = _kernels.seq_dot(v, av) / denom
        nrm = _kernels.seq_norm2(av)
        if nrm == 0.0:
            raise PipecgError("power method hit the null space; matrix is zero or start vector unlucky")
        np.divide(av, nrm, out=v)
    return float(rayleigh)


def chebyshev_shifts(spec: SpectrumEstimate, l: int) -> ShiftSet:
    """Chebyshev points of [lambda_min, lambda_max] as stabilizing shifts.

    sigma_i = center + halfwidth * cos((2i+1) pi / (2l)), i = 0..l-1.
    A degenerate interval returns all shifts equal to the single point,
    flagged on the result.
    """
    if l < 1:
        raise PipecgError("pipeline length l must be >= 1")
    center = (spec.lambda_max + spec.lambda_min) / 2.0
    half = (spec.lambda_max - spec.lambda_min) / 2.0
    sigmas = np.array(
        [center + half * math.cos((2 * i + 1) * math.pi / (2 * l)) for i in range(l)]
    )
    return ShiftSet(sigmas, degenerate=spec.degenerate)
