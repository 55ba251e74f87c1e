"""Self-contained special functions for the forward models.

Integer-order Bessel functions of the first kind (Miller's backward
recurrence with sum-rule normalization), generalized Laguerre polynomials
(three-term recurrence), and overflow-safe square-root factorial ratios.

Validated ranges: |v| <= 64 and |x| <= 100 for bessel_j; n <= 64, k <= 8
for laguerre; n <= 64 for sqrt_factorial_ratio. Inputs outside these
ranges raise DomainError rather than returning degraded values.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

BESSEL_MAX_ORDER = 64
BESSEL_MAX_ARG = 100.0
LAGUERRE_MAX_N = 64
LAGUERRE_MAX_K = 8
FACTORIAL_MAX_N = 64

# rescale threshold during backward recursion; growth toward low orders
# can span hundreds of decades for x << v
_RENORM_LIMIT = 1e250


def _miller_start_order(v_max: int, x_max: float) -> int:
    # generous even start order; cost is linear in the start order
    base = max(v_max, int(math.ceil(x_max)))
    m = base + 20 + int(math.sqrt(40.0 * (base + 1)))
    return m + (m % 2)


def bessel_j_table(v_max: int, x) -> np.ndarray:
    """J_v(x) for all orders v = 0..v_max at once, vectorized over x.

    Backward (Miller) recurrence from a start order well above both
    v_max and max|x|, normalized with J_0 + 2*sum_k J_2k = 1. Returns an
    array of shape (v_max + 1,) + shape(x).

    This is the workhorse for sideband sums, where every order up to the
    truncation is needed at each modulation index.
    """
    if v_max < 0:
        raise DomainError(f"v_max must be >= 0, got {v_max}")
    if v_max > BESSEL_MAX_ORDER:
        raise DomainError(f"order {v_max} outside validated range <= {BESSEL_MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("bessel argument must be finite")
    if np.any(np.abs(x) > BESSEL_MAX_ARG):
        raise DomainError(f"|x| outside validated range <= {BESSEL_MAX_ARG}")

    scalar_in = x.ndim == 0
    xf = np.atleast_1d(x).ravel()
    out = np.zeros((v_max + 1, xf.size))

    # J_v(0) = delta_v0; J_v(-x) = (-1)^v J_v(x)
    sign = np.where(xf < 0.0, -1.0, 1.0)
    xa = np.abs(xf)
    zero = xa == 0.0
    nonzero = ~zero
    out[0, zero] = 1.0

    if np.any(nonzero):
        xs = xa[nonzero]
        m_start = _miller_start_order(v_max, float(xs.max()))
        jp = np.zeros_like(xs)           # J_{m+1}
        jc = np.full_like(xs, 1e-30)     # J_m (arbitrary seed)
        norm = np.zeros_like(xs)         # accumulates J_0 + 2*sum J_2k
        rows = np.zeros((v_max + 1, xs.size))
        for m in range(m_start, 0, -1):
            jm = (2.0 * m / xs) * jc - jp
            jp, jc = jc, jm
            if m - 1 <= v_max:
                rows[m - 1] = jc
            if (m - 1) % 2 == 0:
                norm += jc if m - 1 == 0 else 2.0 * jc
            big = np.abs(jc) > _RENORM_LIMIT
            if np.any(big):
                jp[big] *= 1e-250
                jc[big] *= 1e-250
                norm[big] *= 1e-250
                rows[:, big] *= 1e-250
        rows /= norm
        out[:, nonzero] = rows

    # odd orders flip sign for negative arguments
    odd = np.arange(v_max + 1) % 2 == 1
    out[odd] *= sign
    out = out.reshape((v_max + 1,) + np.atleast_1d(x).shape)
    if scalar_in:
        out = out[:, 0] if out.ndim == 2 else out.reshape(v_max + 1)
    return out


def bessel_j(v: int, x: float) -> float:
    """Bessel function of the first kind, integer order.

    |v| <= 64 and |x| <= 100 (validated range). Negative orders use
    J_{-v}(x) = (-1)^v J_v(x) exactly.
    """
    if v != int(v):
        raise DomainError(f"order must be an integer, got {v!r}")
    v = int(v)
    if abs(v) > BESSEL_MAX_ORDER:
        raise DomainError(f"|v| = {abs(v)} outside validated range <= {BESSEL_MAX_ORDER}")
    table = bessel_j_table(abs(v), float(x))
    val = float(table[abs(v)])
    if v < 0 and v % 2 != 0:
        val = -val
    return val


def laguerre(n: int, k: int, x: float) -> float:
    """Generalized Laguerre polynomial L_n^k(x) by the three-term recurrence.

    n <= 64, k <= 8, x >= 0 (validated range).
    """
    if n != int(n) or k != int(k):
        raise DomainError("n and k must be integers")
    n, k = int(n), int(k)
    if n < 0 or k < 0:
        raise DomainError(f"n and k must be nonnegative, got n={n}, k={k}")
    if n > LAGUERRE_MAX_N or k > LAGUERRE_MAX_K:
        raise DomainError(
            f"(n={n}, k={k}) outside validated range n <= {LAGUERRE_MAX_N}, k <= {LAGUERRE_MAX_K}"
        )
    if not (math.isfinite(x) and x >= 0.0):
        raise DomainError(f"x must be finite and >= 0, got {x!r}")
    if n == 0:
        return 1.0
    prev = 1.0              # L_0
    cur = 1.0 + k - x       # L_1
    for m in range(1, n):
        prev, cur = cur, ((2 * m + k + 1 - x) * cur - (m + k) * prev) / (m + 1)
    return cur


def laguerre_table(n_max: int, k: int, x: float) -> np.ndarray:
    """L_n^k(x) for all n = 0..n_max (same recurrence, one pass)."""
    if n_max < 0 or n_max > LAGUERRE_MAX_N:
        raise DomainError(f"n_max outside validated range 0..{LAGUERRE_MAX_N}")
    if k < 0 or k > LAGUERRE_MAX_K:
        raise DomainError(f"k outside validated range 0..{LAGUERRE_MAX_K}")
    if not (math.isfinite(x) and x >= 0.0):
        raise DomainError(f"x must be finite and >= 0, got {x!r}")
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + k - x
    for m in range(1, n_max):
        out[m + 1] = ((2 * m + k + 1 - x) * out[m] - (m + k) * out[m - 1]) / (m + 1)
    return out


def sqrt_factorial_ratio(n_less: int, n_greater: int) -> float:
    """sqrt(n_less! / n_greater!) in log-space; requires n_less <= n_greater."""
    if n_less != int(n_less) or n_greater != int(n_greater):
        raise DomainError("arguments must be integers")
    n_less, n_greater = int(n_less), int(n_greater)
    if n_less < 0:
        raise DomainError(f"n_less must be >= 0, got {n_less}")
    if n_less > n_greater:
        raise DomainError(f"n_less={n_less} exceeds n_greater={n_greater}")
    if n_greater > FACTORIAL_MAX_N:
        raise DomainError(f"n_greater outside validated range <= {FACTORIAL_MAX_N}")
    if n_less == n_greater:
        return 1.0
    return math.exp(0.5 * (math.lgamma(n_less + 1) - math.lgamma(n_greater + 1)))
