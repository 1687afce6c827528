"""Spherical means of Gaussian-sum phantoms and the Abel-type relations tying them to
wave traces on the detection surface.

For ``f = A exp(-|x - c|^2 / s^2)`` and ``a = 1/s^2``, ``d = |x - c|``:

* circle mean ``M f(x, r) = A exp(-a (d - r)^2) i0e(2 a r d)``
* sphere mean ``M f(x, r) = A exp(-a (d - r)^2) (1 - exp(-4 a r d)) / (4 a r d)``

These closed forms are independent of the FFT solver and are cross-checked against
plain trapezoidal quadrature over the circle.
"""
from dataclasses import dataclass, field
import functools
import math

import numpy as np
from scipy import special
from scipy.signal import fftconvolve

from . import rawio
from .exceptions import DomainError, FormatError, InvalidArgumentError
from .grid import DetectorGeometry
from .phantom import eval_analytic, eval_analytic_gradient, _gaussians

@functools.lru_cache(maxsize=64)
def _legendre_roots(n):
    return special.roots_legendre(n)


def _gauss_legendre(n, lo=0.0, hi=math.pi / 2):
    x, w = _legendre_roots(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _unit(v):
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if not np.isclose(nrm, 1.0, atol=1e-12):
        raise InvalidArgumentError("direction must be a unit vector")
    return v


def circle_mean(spec, x, r, tol=1e-12, max_nodes=1 << 16):
    """Trapezoidal angular average of ``f`` over the circle ``|y - x| = r``.

    The node count doubles until the relative change drops below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if r < 0:
        raise DomainError("radius must be non-negative")
    if r == 0:
        return float(eval_analytic(spec, x))
    n = 32
    prev = None
    while True:
        theta = 2.0 * math.pi * np.arange(n) / n
        pts = x + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        val = float(np.mean(eval_analytic(spec, pts)))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val
        if prev is not None and abs(val) < 1e-300:
            return val
        if n >= max_nodes:
            return val
        prev = val
        n *= 2


def circle_mean_normal_derivative(spec, y, nu, r, tol=1e-12, max_nodes=1 << 16):
    """Trapezoidal average of ``<nu, grad f>`` over the circle ``|x - y| = r``."""
    y = np.asarray(y, dtype=float)
    nu = _unit(nu)
    if r < 0:
        raise DomainError("radius must be non-negative")
    if not spec.primitives:
        return 0.0
    n = 32
    prev = None
    while True:
        theta = 2.0 * math.pi * np.arange(n) / n
        pts = y + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        val = float(np.mean(eval_analytic_gradient(spec, pts) @ nu))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val
        if n >= max_nodes or (prev is not None and val == 0.0):
            return val
        prev = val
        n *= 2


def _center_offsets(spec, x):
    """Per-Gaussian ``(amplitude, a, d, unit direction x - c)`` with ``x`` of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    for g in _gaussians(spec):
        diff = x - np.asarray(g.center, dtype=float)
        d = np.linalg.norm(diff, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(d[..., None] > 0, diff / np.where(d > 0, d, 1.0)[..., None], 0.0)
        yield g.amplitude, 1.0 / g.width ** 2, d, e


def gaussian_circle_means(spec, x, r):
    """Closed-form circle means ``M f(x, r)`` with the radial and center derivatives.

    Returns ``(M, dM/dr, dM/dd_vec, d2M/dr dd_vec)`` where the last two are gradients in ``x``
    (shape ``r.shape + (2,)``). ``x`` is a single point, ``r`` any array of radii.
    """
    r = np.asarray(r, dtype=float)
    m = np.zeros(r.shape)
    mr = np.zeros(r.shape)
    mx = np.zeros(r.shape + (2,))
    mrx = np.zeros(r.shape + (2,))
    for amp, a, d, e in _center_offsets(spec, x):
        z = 2.0 * a * r * d
        base = amp * np.exp(-a * (d - r) ** 2)
        i0 = special.i0e(z)
        i1 = special.i1e(z)
        m += base * i0
        mr += base * (-2.0 * a * r * i0 + 2.0 * a * d * i1)
        md = base * (-2.0 * a * d * i0 + 2.0 * a * r * i1)
        mrd = 4.0 * a * a * base * (2.0 * r * d * i0 - (r * r + d * d) * i1)
        mx += md[..., None] * e
        mrx += mrd[..., None] * e
    return m, mr, mx, mrx


def sphere_mean_3d(spec, x, r):
    """Closed-form sphere mean of a Gaussian sum in three dimensions."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    out = np.zeros(r.shape)
    for amp, a, d, _ in _center_offsets(spec, x):
        z = 2.0 * a * r * d
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(z > 1e-12, -np.expm1(-2.0 * z) / np.where(z > 0, 2.0 * z, 1.0), 1.0 - z)
        out += amp * np.exp(-a * (d - r) ** 2) * ratio
    return out[()] if out.ndim == 0 else out


def sphere_mean_3d_normal_derivative(spec, y, nu, r):
    """``<nu, grad_y M f(y, r)>`` for the 3-D sphere mean."""
    nu = _unit(nu)
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    for amp, a, d, e in _center_offsets(spec, y):
        if d < 1e-8:
            continue
        P = np.exp(-a * (d - r) ** 2)
        Q = np.exp(-a * (d + r) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            dd = np.where(r > 0, amp / (4.0 * a * np.where(r > 0, r, 1.0))
                          * ((-2.0 * a * (d - r) * P + 2.0 * a * (d + r) * Q) / d - (P - Q) / d ** 2), 0.0)
        out += float(e @ nu) * dd
    return out[()] if out.ndim == 0 else out


def semianalytic_u_3d(spec, y, t):
    """Pressure ``u(y, t) = d/dt [t M f(y, t)]`` in three dimensions."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    for amp, a, d, _ in _center_offsets(spec, y):
        P = np.exp(-a * (d - t) ** 2)
        Q = np.exp(-a * (d + t) ** 2)
        if d < 1e-8:
            out += amp * (1.0 - 2.0 * a * t * t) * np.exp(-a * t * t)
        else:
            out += amp * (0.5 * (P + Q) - t / (2.0 * d) * (P - Q))
    return out[()] if out.ndim == 0 else out


def semianalytic_dnu_u_3d(spec, y, nu, t):
    """``<nu, grad_y u(y, t)>`` in three dimensions."""
    nu = _unit(nu)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    for amp, a, d, e in _center_offsets(spec, y):
        if d < 1e-8:
            continue
        P = np.exp(-a * (d - t) ** 2)
        Q = np.exp(-a * (d + t) ** 2)
        du = (-((d - t) * P + (d + t) * Q) / (2.0 * d * d)
              + (P * (1.0 - 2.0 * a * (d - t) ** 2) + Q * (1.0 - 2.0 * a * (d + t) ** 2)) / (2.0 * d))
        out += amp * float(e @ nu) * du
    return out[()] if out.ndim == 0 else out


def _abel_time_quadrature(values_at, t, n_theta):
    """``int_0^{pi/2} [sin(th) F(t sin th) + t sin(th)^2 F_r(t sin th)] dth`` for each t."""
    theta, w = _gauss_legendre(n_theta)
    s = np.sin(theta)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    val, dval = values_at(t[:, None] * s[None, :])
    return (val * s + t[:, None] * dval * (s * s)) @ w


def _adaptive(fn, t, n_theta, tol=1e-13, max_theta=1 << 14):
    """Double ``n_theta`` until successive estimates agree to ``tol`` times the peak value.

    Only the times that have not converged are recomputed at the next level.
    """
    t = np.asarray(t, dtype=float).ravel()
    prev = fn(t, n_theta)
    scale = max(np.max(np.abs(prev), initial=0.0), 1e-300)
    todo = np.arange(t.size)
    while n_theta < max_theta and todo.size:
        n_theta *= 2
        cur = fn(t[todo], n_theta)
        scale = max(scale, np.max(np.abs(cur), initial=0.0))
        done = np.abs(cur - prev[todo]) <= tol * scale
        prev[todo] = cur
        todo = todo[~done]
    return prev


def semianalytic_u_2d(spec, x, t, n_theta=128):
    """Pressure of the 2-D wave equation with initial data ``(f, 0)`` at ``x``.

    Uses ``u = d/dt int_0^t r M f(x, r) / sqrt(t^2 - r^2) dr`` after ``r = t sin(th)``,
    differentiating under the integral with the closed-form circle means.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be non-negative")
    if not spec.primitives:
        return np.zeros(t_arr.shape)[()] if t_arr.ndim == 0 else np.zeros(t_arr.shape)

    def values_at(r):
        m, mr, _, _ = gaussian_circle_means(spec, x, r)
        return m, mr

    out = _adaptive(lambda tt, n: _abel_time_quadrature(values_at, tt, n), t_arr, n_theta)
    out = out.reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


def semianalytic_dnu_u_2d(spec, y, nu, t, n_theta=128):
    """Normal derivative ``<nu, grad u(y, t)>`` from the same representation with ``D_nu M f``."""
    nu = _unit(nu)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be non-negative")
    if not spec.primitives:
        return np.zeros(t_arr.shape)[()] if t_arr.ndim == 0 else np.zeros(t_arr.shape)

    def values_at(r):
        _, _, mx, mrx = gaussian_circle_means(spec, y, r)
        return mx @ nu, mrx @ nu

    out = _adaptive(lambda tt, n: _abel_time_quadrature(values_at, tt, n), t_arr, n_theta)
    out = out.reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


def oracle_traces_2d(spec, geom, tg, kind="dirichlet", detectors=None):
    """Oracle trace matrix (rows for ``detectors``, default all) on the time grid ``tg``."""
    idx = np.arange(geom.n_phi) if detectors is None else np.atleast_1d(detectors)
    pts = geom.points[idx]
    nus = geom.normals[idx]
    out = np.empty((len(idx), tg.n_t))
    for row, (y, nu) in enumerate(zip(pts, nus)):
        if kind == "dirichlet":
            out[row] = semianalytic_u_2d(spec, y, tg.times)
        elif kind == "neumann":
            out[row] = semianalytic_dnu_u_2d(spec, y, nu, tg.times)
        else:
            raise InvalidArgumentError(f"unknown oracle kind {kind!r}")
    return out


# --- Abel machinery -------------------------------------------------------------------

def _abel_weights(n, h):
    """Product-trapezoid weights ``w_m`` with ``int_0^{x_n} v(r) (x_n - r)^(-1/2) dr = sum_m w_m v_{n-m}``."""
    m = np.arange(n, dtype=float)
    s = lambda k: np.sqrt(np.maximum(k, 0.0) * h)
    # integral of s^(-1/2) and s^(1/2) over [k h, (k+1) h]
    I = lambda k: 2.0 * (s(k + 1) - s(k))
    J = lambda k: (2.0 / 3.0) * (s(k + 1) ** 3 - s(k) ** 3)
    left = (J(m - 1) - (m - 1) * h * I(m - 1)) / h       # rising hat on [(m-1)h, m h]
    right = ((m + 1) * h * I(m) - J(m)) / h              # falling hat on [m h, (m+1)h]
    left[0] = 0.0
    return left, right


def abel_forward(values, h):
    """``F(x_n) = int_0^{x_n} v(r) / sqrt(x_n - r) dr`` for samples ``v`` on ``x_k = k h``.

    Exact for the piecewise-linear interpolant of ``v``.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    left, right = _abel_weights(n, h)
    full = left + right
    out = fftconvolve(v, full)[:n]
    # the node r = 0 has no hat piece below r = 0
    out -= right * v[0]
    return out


def abel_inverse(F, h):
    """Solve ``int_0^x v(r)/sqrt(x - r) dr = F(x)`` via ``v = (1/pi) d/dr int_0^r F(x)/sqrt(r - x) dx``."""
    G = abel_forward(F, h)
    return np.gradient(G, h, edge_order=2) / math.pi


def _theta_nodes(r, dt):
    # round up to a power of two so the node cache is shared across radii
    n = max(64, math.ceil(4.0 * r / dt))
    return _gauss_legendre(min(1 << (n - 1).bit_length(), 1 << 15))


def abel_matrix(radii, n_t, dt):
    """Sparse-free dense ``(len(radii), n_t)`` matrix mapping a trace row to
    ``(2/pi) int_0^{pi/2} u(r sin th) dth`` with linear interpolation in time.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < 0):
        raise DomainError("radii must be non-negative")
    if np.any(radii > (n_t - 1) * dt * (1 + 1e-12)):
        raise DomainError("radius beyond the recorded time interval")
    W = np.zeros((radii.size, n_t))
    for i, r in enumerate(radii):
        theta, w = _theta_nodes(r, dt)
        s = np.clip(r * np.sin(theta) / dt, 0.0, n_t - 1)
        j = np.minimum(np.floor(s).astype(np.intp), n_t - 2)
        frac = s - j
        W[i] = (np.bincount(j, weights=w * (1.0 - frac), minlength=n_t)
                + np.bincount(j + 1, weights=w * frac, minlength=n_t))
    return W * (2.0 / math.pi)


def abel_recover_mean(dirichlet_row, r, dt):
    """Circle mean ``M f(y, r) = (2/pi) int_0^r u(y, t) / sqrt(r^2 - t^2) dt`` from a trace row.

    ``dirichlet_row`` may be a matrix of rows; ``r`` a scalar or array.
    """
    row = np.asarray(dirichlet_row, dtype=float)
    W = abel_matrix(r, row.shape[-1], dt)
    out = row @ W.T
    return out[..., 0] if np.ndim(r) == 0 else out


def abel_recover_weighted_mean(neumann_row, r, dt):
    """Weighted mean ``M_nu f(y, r)`` from a Neumann row (same Abel relation)."""
    return abel_recover_mean(neumann_row, r, dt)


# --- weighted-mean inversion ----------------------------------------------------------

@dataclass(frozen=True)
class MeanSamples:
    """Mean values on the radius grid ``radii[m] = m * dr`` for every detector."""
    geometry: DetectorGeometry
    dr: float
    values: np.ndarray = field(repr=False)
    kind: str = "mean"
    dim: int = 2

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.geometry.n_phi:
            raise InvalidArgumentError("values must have shape (n_phi, n_r)")
        if self.kind not in ("mean", "weighted_mean"):
            raise InvalidArgumentError(f"unknown mean kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise InvalidArgumentError("dimension must be 2 or 3")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def radii(self):
        return self.dr * np.arange(self.values.shape[1])

    def support_violation(self):
        """Largest ``|value|`` at radii ``>= 2 rho``."""
        far = self.radii >= 2.0 * self.geometry.rho
        return float(np.max(np.abs(self.values[:, far]), initial=0.0))


def mean_samples_from_spec(spec, geom, dr, r_max, kind="weighted_mean"):
    """Closed-form circle means (or weighted means) of a Gaussian sum at every detector."""
    n_r = int(math.floor(r_max / dr + 1e-9)) + 1
    radii = dr * np.arange(n_r)
    vals = np.empty((geom.n_phi, n_r))
    for k, (y, nu) in enumerate(zip(geom.points, geom.normals)):
        m, _, mx, _ = gaussian_circle_means(spec, y, radii)
        vals[k] = m if kind == "mean" else mx @ nu
    return MeanSamples(geom, dr, vals, kind)


def mean_samples_from_traces(trace, r_max=None):
    """Recover means from a Dirichlet or Neumann trace on the trace's own time grid."""
    tg = trace.timegrid
    n_r = tg.n_t if r_max is None else int(math.floor(r_max / tg.dt + 1e-9)) + 1
    radii = tg.dt * np.arange(n_r)
    vals = abel_recover_mean(trace.data, radii, tg.dt)
    kind = {"dirichlet": "mean", "neumann": "weighted_mean"}.get(trace.kind)
    if kind is None:
        raise InvalidArgumentError("means can be recovered from dirichlet or neumann traces only")
    return MeanSamples(trace.geometry, tg.dt, vals, kind)


def _pv_midpoint_table(samples):
    """``P[k, l] = p.v. int r M_nu(y_k, r) / (r^2 - c_l^2) dr`` at ``c_l = (l + 1/2) dr``.

    The sample nodes sit symmetrically around every midpoint, which realizes the
    principal value by cancellation.
    """
    r = samples.radii
    c = samples.dr * (np.arange(r.size - 1) + 0.5)
    W = samples.dr * r[:, None] / (r[:, None] ** 2 - c[None, :] ** 2)
    return samples.values @ W, c


def _check_inside(geom, x, dx):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dist = np.linalg.norm(x - np.asarray(geom.center), axis=1)
    if np.any(dist >= geom.rho - dx):
        raise DomainError("evaluation point too close to the detector circle")
    return x


def invert_weighted_means(samples, x, dx=None):
    """Reconstruct ``f(x)`` from weighted circle means on the whole detector circle.

    ``f(x) = (1/pi) sum_k rho dphi p.v. int r M_nu f(y_k, r) / (r^2 - |x - y_k|^2) dr``
    """
    if samples.kind != "weighted_mean":
        raise InvalidArgumentError("expected weighted means")
    geom = samples.geometry
    single = np.ndim(x) == 1
    x = _check_inside(geom, x, geom.arc_step if dx is None else dx)
    P, c = _pv_midpoint_table(samples)
    out = np.zeros(len(x))
    for k, y in enumerate(geom.points):
        dist = np.linalg.norm(x - y, axis=1)
        out += np.interp(dist, c, P[k])
    out *= geom.arc_step / math.pi
    return out[0] if single else out


def invert_weighted_means_log(samples, x, sign=1.0, dx=None):
    """Experimental log-kernel variant: ``sign/pi * sum_k rho dphi int d_r(r M_nu) log((r+c)/|r-c|) / (2c) dr``.

    The sign is a free parameter; integration by parts against the principal-value form
    fixes it to ``+1`` in two dimensions.
    """
    if samples.kind != "weighted_mean":
        raise InvalidArgumentError("expected weighted means")
    geom = samples.geometry
    single = np.ndim(x) == 1
    x = _check_inside(geom, x, geom.arc_step if dx is None else dx)
    r = samples.radii
    deriv = np.gradient(r[None, :] * samples.values, samples.dr, axis=1, edge_order=2)
    out = np.zeros(len(x))
    for k, y in enumerate(geom.points):
        c = np.linalg.norm(x - y, axis=1)
        # shift the nodes half a step off the logarithmic singularity
        rr = r[None, 1:] - 0.5 * samples.dr
        g = 0.5 * (deriv[k, 1:] + deriv[k, :-1])
        ker = np.log((rr + c[:, None]) / np.abs(rr - c[:, None])) / (2.0 * c[:, None])
        out += samples.dr * ker @ g
    out *= sign * geom.arc_step / math.pi
    return out[0] if single else out


def operator_coefficients(n, k):
    """Lower-triangular table ``c[kt, l]`` with
    ``(r^-1 d_r)^kt r^(n-2) g = sum_l c[kt, l] r^(n-2-2kt+l) g^(l)``.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidArgumentError("n must be an integer >= 2")
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise InvalidArgumentError("k must be a non-negative integer")
    c = np.zeros((k + 1, k + 1), dtype=np.int64)
    c[0, 0] = 1
    for kt in range(1, k + 1):
        c[kt, 0] = c[kt - 1, 0] * (n - 2 * kt)
        for l in range(1, kt):
            c[kt, l] = c[kt - 1, l - 1] + c[kt - 1, l] * (n - 2 * kt + l)
        c[kt, kt] = 1
    return c


def write_mean_samples(samples, path):
    meta = {"kind": samples.kind, "dim": samples.dim, "dr": samples.dr,
            "geometry": samples.geometry.to_dict()}
    rawio.write_raw(path, samples.values, "means", meta)


def read_mean_samples(path):
    values, h = rawio.read_raw(path, "means", required=("kind", "dim", "dr", "geometry"))
    try:
        g = h["geometry"]
        geom = DetectorGeometry(float(g["rho"]), tuple(g["center"]), int(g["n_phi"]))
        return MeanSamples(geom, float(h["dr"]), values, h["kind"], int(h["dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad mean-sample metadata: {exc}") from exc
