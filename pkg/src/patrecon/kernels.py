"""Finite-time filter kernels, their discrete time-filter matrices and the closed-form
singular integrals the kernels are built from.

The finite-time kernel is

    k_T(r, t) = 2 / (pi * sqrt|r^2 - t^2|) * kt_T(r, t)

with ``kt_T(r, t) = p.v. sqrt|r^2 - t^2| * int_t^T s ds / ((s^2 - r^2) sqrt(s^2 - t^2))``
evaluated in closed form (log branch for ``r > t``, arctan branch for ``r < t``).
"""
from dataclasses import dataclass
import math

import numpy as np

from .exceptions import DomainError, InvalidArgumentError
from .grid import TimeGrid

DIAGONAL_TOL = 1e-12
LOG_BOUND = math.log(6.0 + math.sqrt(2.0))

# target size of one streamed filter block, in matrix entries
_BLOCK_ENTRIES = 4_000_000

# "corrected": arctan branch uses sqrt(T^2 - r2^2), which matches the defining integral.
# "published": arctan branch uses sqrt(T^2 - r1^2), kept to reproduce reference numbers.
KERNEL_VARIANTS = ("corrected", "published")


def _tilde_k_unchecked(r1, r2, T, variant="corrected"):
    r1, r2 = np.broadcast_arrays(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float))
    out = np.zeros(r1.shape)
    diff = r1 - r2
    above = diff > DIAGONAL_TOL
    below = diff < -DIAGONAL_TOL
    if np.any(above):
        a, b = r1[above], r2[above]
        big = np.sqrt(np.maximum(T * T - b * b, 0.0))
        gap = np.sqrt((a - b) * (a + b))
        # 1/2 log((big - gap)/(big + gap)) with big^2 - gap^2 = T^2 - a^2
        out[above] = 0.5 * np.log((T - a) * (T + a)) - np.log(big + gap)
    if np.any(below):
        a, b = r1[below], r2[below]
        top = b if variant == "corrected" else a
        out[below] = np.arctan2(np.sqrt(np.maximum((T - top) * (T + top), 0.0)),
                                np.sqrt((b - a) * (b + a)))
    return out


def _check_kernel_domain(r1, r2, T):
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise DomainError("kernel radii must be non-negative")
    if np.any(r1 >= T):
        raise DomainError(f"first kernel argument must lie below T={T}")
    if np.any(r2 > T):
        raise DomainError(f"second kernel argument must not exceed T={T}")
    return r1, r2


def _check_variant(variant):
    if variant not in KERNEL_VARIANTS:
        raise InvalidArgumentError(f"unknown kernel variant {variant!r}")


def tilde_k_T(r1, r2, T, variant="corrected"):
    """Bounded factor of the finite-time kernel; zero on the diagonal.

    ``r1 > r2``: ``0.5*log((sqrt(T^2-r2^2) - sqrt(r1^2-r2^2)) / (sqrt(T^2-r2^2) + sqrt(r1^2-r2^2)))``
    ``r1 < r2``: ``arctan(sqrt(T^2-r2^2) / sqrt(r2^2-r1^2))``
    """
    _check_variant(variant)
    r1, r2 = _check_kernel_domain(r1, r2, T)
    out = _tilde_k_unchecked(r1, r2, float(T), variant)
    return out[()] if out.ndim == 0 else out


def k_T(r1, r2, T, variant="corrected"):
    """Finite-time kernel ``2 / (pi sqrt|r1^2 - r2^2|) * tilde_k_T(r1, r2, T)``, zero on the diagonal."""
    _check_variant(variant)
    r1, r2 = _check_kernel_domain(r1, r2, T)
    kt = _tilde_k_unchecked(r1, r2, float(T), variant)
    gap = np.sqrt(np.abs(r1 * r1 - r2 * r2))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(kt != 0.0, 2.0 / math.pi * kt / gap, 0.0)
    return out[()] if out.ndim == 0 else out


def k_inf(r1, r2):
    """Infinite-horizon kernel ``1/sqrt(r2^2 - r1^2)`` for ``r2 > r1``, zero otherwise."""
    r1, r2 = np.broadcast_arrays(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float))
    if np.any(r1 <= 0) or np.any(r2 <= 0):
        raise DomainError("k_inf is defined for positive radii")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r2 - r1 > DIAGONAL_TOL, 1.0 / np.sqrt(np.abs(r2 * r2 - r1 * r1)), 0.0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class FilterMatrix:
    """Dense time-filter matrix of shape ``(n_t - 1, n_t)``."""
    data: np.ndarray
    kind: str
    timegrid: TimeGrid
    T: float = None
    variant: str = "corrected"


def _A_rows(times, rows):
    tl = times[rows][:, None]
    tj = times[None, 1:]
    tj1 = times[None, :-1]
    out = np.zeros((len(rows), times.size))
    with np.errstate(invalid="ignore"):
        block = np.sqrt(np.maximum(tj * tj - tl * tl, 0.0)) - np.sqrt(np.maximum(tj1 * tj1 - tl * tl, 0.0))
    mask = np.arange(1, times.size)[None, :] > np.asarray(rows)[:, None]
    out[:, 1:] = np.where(mask, block, 0.0)
    return out


def _A_T_rows(times, rows, T, variant="corrected"):
    tl = times[rows][:, None]
    tm = times[None, 1:]
    tm1 = times[None, :-1]
    out = np.zeros((len(rows), times.size))
    width = np.abs(np.sqrt(np.abs(tm * tm - tl * tl)) - np.sqrt(np.abs(tm1 * tm1 - tl * tl))) / tm
    out[:, 1:] = width * _tilde_k_unchecked(tl, tm, T, variant)
    return out


def build_A(tg):
    """Infinite-horizon increment matrix ``A[i, j] = sqrt(t_j^2 - t_i^2) - sqrt(t_{j-1}^2 - t_i^2)``, i < j."""
    times = tg.times
    return FilterMatrix(_A_rows(times, np.arange(tg.n_t - 1)), "A", tg)


def build_A_T(tg, T=None, variant="corrected"):
    """Finite-time filter matrix with column 0 identically zero."""
    _check_variant(variant)
    T = tg.T if T is None else float(T)
    times = tg.times
    if times[-1] > T:
        raise DomainError("time grid extends beyond T")
    return FilterMatrix(_A_T_rows(times, np.arange(tg.n_t - 1), T, variant), "A_T", tg, T, variant)


def filter_rows(tg, kind, rows, T=None, variant="corrected"):
    """Rows ``rows`` of the quadrature matrix used by the reconstructors.

    ``A_T`` rows are returned as built. ``A`` rows are divided column-wise by ``t_j``
    so that ``row @ g`` approximates ``int_{t_l}^{T} g(t) / sqrt(t^2 - t_l^2) dt``.
    """
    times = tg.times
    rows = np.asarray(rows, dtype=np.intp)
    if kind == "A_T":
        return _A_T_rows(times, rows, tg.T if T is None else float(T), variant)
    if kind == "A":
        out = _A_rows(times, rows)
        out[:, 1:] /= times[None, 1:]
        return out
    raise InvalidArgumentError(f"unknown filter kind {kind!r}")


def apply_filter(traces, tg, kind, T=None, block_rows=None, variant="corrected"):
    """Compute ``traces @ M.T`` for the quadrature matrix ``M`` without storing ``M``.

    ``traces`` has shape ``(..., n_t)``; the result has shape ``(..., n_t - 1)``.
    Rows of ``M`` are assembled in blocks so memory stays bounded for long time grids.
    """
    traces = np.asarray(traces, dtype=float)
    n_t = tg.n_t
    if traces.shape[-1] != n_t:
        raise InvalidArgumentError(f"trace length {traces.shape[-1]} does not match n_t={n_t}")
    flat = traces.reshape(-1, n_t)
    out = np.empty((flat.shape[0], n_t - 1))
    if block_rows is None:
        block_rows = max(1, _BLOCK_ENTRIES // n_t)
    for start in range(0, n_t - 1, block_rows):
        rows = np.arange(start, min(start + block_rows, n_t - 1))
        out[:, rows] = flat @ filter_rows(tg, kind, rows, T, variant).T
    return out.reshape(traces.shape[:-1] + (n_t - 1,))


def inverse_product_antiderivative(x, a, b):
    """Antiderivative of ``1 / (x sqrt(x^2-a^2) sqrt(x^2-b^2))`` for ``x >= max(a, b)``."""
    hi, lo = max(a, b), min(a, b)
    ratio = hi / lo
    q = np.sqrt((x * x - hi * hi) / (x * x - lo * lo))
    return np.log((q + ratio) / (ratio - q)) / (2.0 * a * b)


def _check_inverse_product(a, b):
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be positive")
    if a == b:
        raise DomainError("a and b must differ")


def inverse_product_integral(a, b, c, d):
    """``int_c^d dx / (x sqrt(x^2-a^2) sqrt(x^2-b^2))`` for ``max(a, b) < c < d``."""
    _check_inverse_product(a, b)
    if not (max(a, b) < c < d):
        raise DomainError("need max(a, b) < c < d")
    return float(inverse_product_antiderivative(d, a, b) - inverse_product_antiderivative(c, a, b))


def inverse_product_improper(a, b):
    """``int_{max(a,b)}^inf dx / (x sqrt(x^2-a^2) sqrt(x^2-b^2))``."""
    _check_inverse_product(a, b)
    ratio = max(a, b) / min(a, b)
    return math.log((1.0 + ratio) / (ratio - 1.0)) / (2.0 * a * b)


def shifted_pole_integral(a, b, c, d):
    """``int_a^b x dx / ((x^2 - c^2) sqrt(x^2 - d^2))`` for ``a < b``, ``c`` outside ``[a, b]``, ``d <= a``."""
    if not a < b:
        raise DomainError("need a < b")
    if a <= c <= b:
        raise DomainError("c must lie outside [a, b]")
    if not (0 <= d <= a):
        raise DomainError("need 0 <= d <= a")
    if abs(c) == d:
        raise DomainError("need |c| != d")
    ua = math.sqrt(a * a - d * d)
    ub = math.sqrt(b * b - d * d)
    if abs(c) < d:
        s = math.sqrt(d * d - c * c)
        return (math.atan(ub / s) - math.atan(ua / s)) / s
    s = math.sqrt(c * c - d * d)
    return math.log(abs((s - ub) / (s + ub) * (s + ua) / (s - ua))) / (2.0 * s)


def shifted_pole_limit_ratio(c, d, eps):
    """The epsilon-ratio whose limit (eps -> 0, c > d) is one."""
    if not c > d >= 0:
        raise DomainError("need c > d >= 0")
    s = math.sqrt(c * c - d * d)
    lo = math.sqrt((c - eps) ** 2 - d * d)
    hi = math.sqrt((c + eps) ** 2 - d * d)
    return (s - lo) / (s + lo) * (hi + s) / (hi - s)


def g_eps(t, c, eps):
    """Log term that bounds the principal-value remainder on ``[c - eps, c]``; zero elsewhere."""
    t = np.asarray(t, dtype=float)
    inside = (t >= c - eps) & (t <= c)
    tt = np.where(inside, t, c)
    outer = np.sqrt((c + eps) ** 2 - tt * tt)
    inner = np.sqrt(np.maximum(c * c - tt * tt, 0.0))
    return np.where(inside, np.log((outer + inner) / (outer - inner)), 0.0)


def h_eps(t, c, eps):
    """Log term of the symmetric principal-value cut on ``[0, c - eps]``; zero elsewhere."""
    if not 0 < eps < c:
        raise DomainError("need 0 < eps < c")
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= c - eps)
    tt = np.where(inside, t, 0.0)
    mid = np.sqrt(c * c - tt * tt)
    low = np.sqrt(np.maximum((c - eps) ** 2 - tt * tt, 0.0))
    high = np.sqrt((c + eps) ** 2 - tt * tt)
    val = np.log((mid - low) / (mid + low) * (high + mid) / (high - mid))
    return np.where(inside, val, 0.0)
