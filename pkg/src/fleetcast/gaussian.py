"""Standard-normal kernels, jitter-laddered Cholesky, and seeded MVN sampling.

Reproducibility contract: all randomness flows through numpy's counter-based
Philox bit generator; gaussian variates come from ``Generator.standard_normal``
(ziggurat method). Child streams for parallel work derive integer seeds from
(seed, index) via ``SeedSequence`` hashing, so serial and threaded runs agree
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

__all__ = [
    "CholeskyFactor",
    "std_normal_cdf",
    "std_normal_inv",
    "cholesky",
    "sample_mvn",
    "substream_seed",
    "JITTER_LADDER",
]

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = 1.0 / float(np.sqrt(2.0 * np.pi))

# Escalating diagonal jitter applied until the factorization succeeds; the
# estimated correlation matrix is frequently rank-deficient when the number of
# training columns is below the site count.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

# Rational approximation coefficients for the normal quantile (Acklam).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def std_normal_cdf(z) -> float | np.ndarray:
    """Standard normal CDF, computed as 0.5 * erfc(-z / sqrt(2)).

    Absolute error is at the level of double rounding (<< 1e-10 on [-8, 8]).
    """
    zs = np.asarray(z, dtype=float)
    if np.isnan(zs).any():
        raise ValueError("std_normal_cdf received NaN")
    out = 0.5 * erfc(-zs / _SQRT2)
    return float(out) if zs.ndim == 0 else out


def _acklam(u: np.ndarray) -> np.ndarray:
    x = np.empty_like(u)

    low = u < _P_LOW
    high = u > 1.0 - _P_LOW
    mid = ~(low | high)

    # The tail ratio evaluates directly to the (negative) lower-tail quantile.
    if low.any():
        q = np.sqrt(-2.0 * np.log(u[low]))
        x[low] = (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if high.any():
        q = np.sqrt(-2.0 * np.log(1.0 - u[high]))
        x[high] = -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if mid.any():
        q = u[mid] - 0.5
        r = q * q
        x[mid] = (
            ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        ) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    return x


def std_normal_inv(u) -> float | np.ndarray:
    """Standard normal quantile function for u strictly inside (0, 1).

    Rational approximation refined by one Halley step against the CDF, which
    brings the error down to the quantization of u itself (callers needing
    ~1e-9 get ample margin). The upper half reflects through the lower half --
    1 - u is exact there -- so the refinement keeps full relative precision in
    both tails and inv(1 - u) == -inv(u) holds exactly. Boundary values are
    rejected: clamp first.
    """
    us = np.asarray(u, dtype=float)
    scalar = us.ndim == 0
    us = np.atleast_1d(us)
    if np.isnan(us).any() or (us <= 0.0).any() or (us >= 1.0).any():
        raise ValueError("std_normal_inv requires u strictly inside (0, 1)")

    flip = us > 0.5
    v = np.where(flip, 1.0 - us, us)
    x = _acklam(v)
    # One Halley step: f = Phi(x) - v, f' = phi(x), f'' = -x phi(x).
    # x <= 0 here, so Phi(x) = 0.5 erfc(-x/sqrt2) is small and the residual
    # retains full relative precision even for v near 0.
    err = 0.5 * erfc(-x / _SQRT2) - v
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    r = err / phi
    x = x - r / (1.0 + 0.5 * x * r)
    x = np.where(flip, -x, x)
    return float(x[0]) if scalar else x


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor with the diagonal jitter that made it succeed."""

    dim: int
    lower: np.ndarray
    jitter_used: float

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        if lower.flags.writeable:
            lower = lower.copy()
            lower.setflags(write=False)
        object.__setattr__(self, "lower", lower)


def cholesky(m: np.ndarray) -> CholeskyFactor:
    """Factor a symmetric (near-)PSD matrix, escalating diagonal jitter.

    Tries jitter 0, then 1e-10 up to 1e-4; raises once the ladder is
    exhausted. ``jitter_used`` records the first level that worked.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky requires a square matrix")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("cholesky requires a symmetric matrix")

    n = a.shape[0]
    eye = np.eye(n)
    for jitter in JITTER_LADDER:
        try:
            lower = np.linalg.cholesky(a + jitter * eye if jitter else a)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(dim=n, lower=lower, jitter_used=jitter)
    raise np.linalg.LinAlgError("matrix not PSD-repairable")


def substream_seed(seed: int, index: int) -> int:
    """Derive a deterministic child seed for parallel work item ``index``."""
    ss = np.random.SeedSequence(entropy=[int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_mvn(factor: CholeskyFactor, s_count: int, seed: int) -> np.ndarray:
    """Draw an (N, S) matrix of MVN(0, L L^T) samples, deterministic per seed."""
    if s_count < 1:
        raise ValueError("s_count must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.standard_normal((factor.dim, int(s_count)))
    return factor.lower @ g
