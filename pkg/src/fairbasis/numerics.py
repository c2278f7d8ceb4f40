"""Scalar and matrix primitives: normal CDF and quantile, seeded streams,
Cholesky factorization and Pearson correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import DegenerateVariance, DomainError, NotPositiveDefinite, ShapeError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, relative error below 1.15e-9 before polishing.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _scalar_or_array(values, was_scalar):
    return float(values) if was_scalar else values


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


def std_normal_cdf(x):
    """Standard normal CDF, accurate to a few ulps in both tails."""
    was_scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("std_normal_cdf requires finite input")
    return _scalar_or_array(0.5 * erfc(-x / SQRT2), was_scalar)


def _lower_quantile(p):
    # valid for 0 < p <= 0.5; result is <= 0
    out = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        out[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num / den
    # one Halley step against the erfc-based CDF
    e = 0.5 * erfc(-out / SQRT2) - p
    u = e * SQRT2PI * np.exp(0.5 * out * out)
    return out - u / (1.0 + 0.5 * out * u)


def std_normal_quantile(p):
    """Inverse of the standard normal CDF on the open interval (0, 1).

    The upper half is computed by symmetry from ``1 - p``, which is exact in
    floating point for ``p >= 0.5``, so both tails keep full relative accuracy.
    """
    was_scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    out = np.empty_like(p)
    low = p <= 0.5
    if np.any(low):
        out[low] = _lower_quantile(p[low])
    if np.any(~low):
        out[~low] = -_lower_quantile(1.0 - p[~low])
    if was_scalar:
        return float(out[0])
    return out


@dataclass(frozen=True)
class RandomStream:
    """Immutable descriptor of an independent pseudo-random stream.

    ``generator()`` always starts from the beginning of the stream, so two
    calls give identical sequences. Streams with different ``stream_index``
    come from distinct spawn keys of the same seed sequence.
    """

    seed: int
    stream_index: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise DomainError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_index), *self.path))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, key: int) -> "RandomStream":
        """Independent sub-stream, e.g. for the train/test split of one replicate."""
        return RandomStream(self.seed, self.stream_index, (*self.path, int(key)))


def cholesky_factor(matrix) -> np.ndarray:
    """Lower-triangular ``L`` with positive diagonal and ``L @ L.T == matrix``.

    A non-positive pivot raises :class:`NotPositiveDefinite`; this is the
    positive-definiteness test used throughout, with no repair attempted.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
        raise DomainError("matrix is not symmetric within 1e-12")
    n = a.shape[0]
    L = np.zeros_like(a)
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j] - np.dot(L[i, :j], L[j, :j])
            if i == j:
                if not s > 0.0:
                    raise NotPositiveDefinite(f"pivot {i} is {s:.3g}; matrix is not positive definite")
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


def pearson_corr(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("pearson_corr needs two 1-d sequences of equal length")
    if x.size < 2:
        raise ShapeError("pearson_corr needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0:
        raise DegenerateVariance("x")
    if syy == 0.0:
        raise DegenerateVariance("y")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def sample_mvn(L, n: int, stream: RandomStream) -> np.ndarray:
    """Draw ``n`` rows of ``L @ eps`` with ``eps`` i.i.d. standard normal."""
    L = np.asarray(L, dtype=float)
    if n < 1:
        raise DomainError("n must be at least 1")
    eps = stream.generator().standard_normal((n, L.shape[0]))
    return eps @ L.T
