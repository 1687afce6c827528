"""Self-check suites behind ``patrecon validate``.

Each suite compares closed forms or pipeline outputs with an independent reference
(adaptive quadrature, finite differences, analytic phantoms) and reports the measured
value next to its tolerance. The reference integrals are also used by the test-suite.
"""
import json
import math
import time

import numpy as np
from scipy import integrate

from . import kernels, sphmeans
from .grid import build_detectors, build_grid, build_timegrid
from .phantom import Gaussian, PhantomSpec, eval_analytic, gaussian_phantom, rasterize
from .recon2d import reconstruct_dirichlet, reconstruct_mixed, reconstruct_neumann, relative_l2
from .recon3d import interior_lattice, lebedev, range_condition_3d, reconstruct_mixed_3d
from .wavesim import combine_mixed, simulate

_QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=500)


# --- reference integrals ------------------------------------------------------------------

def quad_tilde_k(r1, r2, T):
    """``sqrt|r1^2 - r2^2| * p.v. int_{r2}^T s / ((s^2 - r1^2) sqrt(s^2 - r2^2)) ds`` by quadrature.

    With ``s^2 = r2^2 + v^2`` the integrand becomes ``1 / (v^2 - (r1^2 - r2^2))``; the pole
    (only present for ``r1 > r2``) is handled by QUADPACK's Cauchy weight.
    """
    V = math.sqrt(T * T - r2 * r2)
    gap2 = r1 * r1 - r2 * r2
    if gap2 > 0:
        c = math.sqrt(gap2)
        val, _ = integrate.quad(lambda v: 1.0 / (v + c), 0.0, V, weight="cauchy", wvar=c, **_QUAD)
        return c * val
    c = math.sqrt(-gap2)
    val, _ = integrate.quad(lambda v: 1.0 / (v * v + c * c), 0.0, V, **_QUAD)
    return c * val


def quad_inverse_product(a, b, c, d):
    val, _ = integrate.quad(lambda x: 1.0 / (x * math.sqrt(x * x - a * a) * math.sqrt(x * x - b * b)),
                            c, d, **_QUAD)
    return val


def quad_inverse_product_improper(a, b):
    """Improper integral after ``x = M cosh(w)`` (``M = max(a, b)``), which removes the endpoint singularity."""
    M, m = max(a, b), min(a, b)

    def f(w):
        x = M * math.cosh(w)
        return 1.0 / (x * math.sqrt(x * x - m * m))
    # the integrand decays like exp(-2 w); beyond w = 40 it is below double precision
    val, _ = integrate.quad(f, 0.0, 40.0, **_QUAD)
    return val


def quad_shifted_pole(a, b, c, d):
    """``int_a^b x / ((x^2 - c^2) sqrt(x^2 - d^2)) dx`` after ``v = sqrt(x^2 - d^2)``."""
    lo, hi = math.sqrt(a * a - d * d), math.sqrt(b * b - d * d)
    shift = d * d - c * c
    val, _ = integrate.quad(lambda v: 1.0 / (v * v + shift), lo, hi, **_QUAD)
    return val


def random_kernel_tuples(rng, n):
    """``(r1, r2, T)`` with ``0 < r1 < T``, ``0 < r2 < T`` and a clear gap between r1 and r2."""
    out = []
    while len(out) < n:
        T = rng.uniform(1.0, 8.0)
        r1, r2 = rng.uniform(0.02 * T, 0.98 * T, size=2)
        if abs(r1 - r2) > 1e-3 * T:
            out.append((r1, r2, T))
    return out


def random_inverse_product_tuples(rng, n):
    out = []
    while len(out) < n:
        a, b = rng.uniform(0.1, 2.0, size=2)
        if abs(a - b) < 1e-2:
            continue
        c = max(a, b) * rng.uniform(1.01, 2.0)
        d = c * rng.uniform(1.01, 3.0)
        out.append((a, b, c, d))
    return out


def random_shifted_pole_tuples(rng, n):
    out = []
    while len(out) < n:
        a = rng.uniform(0.2, 2.0)
        b = a * rng.uniform(1.05, 3.0)
        d = a * rng.uniform(0.0, 0.95)
        c = rng.choice([rng.uniform(0.0, 0.95 * a), rng.uniform(1.05 * b, 2.0 * b + 1.0)])
        if abs(abs(c) - d) > 1e-2:
            out.append((a, b, c, d))
    return out


# --- suites -------------------------------------------------------------------------------

def _result(name, measured, tolerance, passed, started, detail=None):
    return {"suite": name, "measured": float(measured), "tolerance": float(tolerance),
            "passed": bool(passed), "runtime_s": round(time.perf_counter() - started, 3),
            "detail": detail or ""}


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def suite_kernel_quadrature(n=100, seed=0, tol=1e-10):
    """Kernel and closed-form singular integrals vs adaptive quadrature."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r1, r2, T in random_kernel_tuples(rng, n):
        worst = max(worst, _rel(kernels.tilde_k_T(r1, r2, T), quad_tilde_k(r1, r2, T)))
        kq = 2.0 / math.pi * quad_tilde_k(r1, r2, T) / math.sqrt(abs(r1 * r1 - r2 * r2))
        worst = max(worst, _rel(kernels.k_T(r1, r2, T), kq))
    for a, b, c, d in random_inverse_product_tuples(rng, n):
        worst = max(worst, _rel(kernels.inverse_product_integral(a, b, c, d), quad_inverse_product(a, b, c, d)))
        worst = max(worst, _rel(kernels.inverse_product_improper(a, b), quad_inverse_product_improper(a, b)))
    for a, b, c, d in random_shifted_pole_tuples(rng, n):
        worst = max(worst, _rel(kernels.shifted_pole_integral(a, b, c, d), quad_shifted_pole(a, b, c, d)))
    return _result("kernel_quadrature", worst, tol, worst < tol, t0,
                   f"{n} tuples each for the kernel and the two integral families")


def suite_log_bounds(eps_list=(1e-1, 1e-2, 1e-3, 1e-4), c_list=(0.5, 1.0, 2.0), samples=2001):
    """``g_eps`` decreasing on ``[c-eps, c]``, ``h_eps`` increasing on ``[0, c-eps]``, both bounded."""
    t0 = time.perf_counter()
    worst = 0.0
    monotone = True
    for eps in eps_list:
        for c in c_list:
            tg = np.linspace(c - eps, c, samples)
            g = kernels.g_eps(tg, c, eps)
            th = np.linspace(0.0, c - eps, samples)
            h = kernels.h_eps(th, c, eps)
            monotone &= bool(np.all(np.diff(g) <= 1e-12) and np.all(np.diff(h) >= -1e-12))
            worst = max(worst, float(np.max(np.abs(g))), float(np.max(np.abs(h))))
    ok = monotone and worst <= kernels.LOG_BOUND
    return _result("log_bounds", worst, kernels.LOG_BOUND, ok, t0,
                   "max |g|, |h| against log(6 + sqrt 2); monotone=" + str(monotone))


ABEL_TEST_FUNCTIONS = (
    ("r^2", lambda r: r ** 2),
    ("r^3 - r^2", lambda r: r ** 3 - r ** 2),
    ("sin(pi r)", lambda r: np.sin(math.pi * r)),
    ("r exp(-r)", lambda r: r * np.exp(-r)),
    ("1 - cos(2 r)", lambda r: 1.0 - np.cos(2.0 * r)),
    ("r / (1 + r^2)", lambda r: r / (1.0 + r * r)),
    ("r^2 exp(-r^2)", lambda r: r * r * np.exp(-r * r)),
    ("sinh(r) - r", lambda r: np.sinh(r) - r),
    ("r log(1 + r)", lambda r: r * np.log1p(r)),
    ("atan(r)^2", lambda r: np.arctan(r) ** 2),
)


def suite_abel_round_trip(n_nodes=10_000, r_max=1.0, tol=1e-4):
    """Forward Abel operator followed by its inversion on ten smooth functions vanishing at 0."""
    t0 = time.perf_counter()
    r = np.linspace(0.0, r_max, n_nodes)
    h = r[1] - r[0]
    worst = 0.0
    for _, fn in ABEL_TEST_FUNCTIONS:
        v = fn(r)
        back = sphmeans.abel_inverse(sphmeans.abel_forward(v, h), h)
        worst = max(worst, float(np.max(np.abs(back - v))))
    return _result("abel_round_trip", worst, tol, worst < tol, t0, f"{n_nodes} nodes on [0, {r_max}]")


def suite_abel_means(dt=1e-3, tol=1e-3, n_detectors=4):
    """Means recovered from oracle traces vs direct circle means (Dirichlet and Neumann)."""
    t0 = time.perf_counter()
    spec = gaussian_phantom()
    geom = build_detectors(1.0, (0.0, 0.0), 2.0 / 128)
    tg = build_timegrid(2.0, dt)
    radii = np.linspace(0.05, 2.0, 40)
    worst = 0.0
    for k in np.linspace(0, geom.n_phi - 1, n_detectors).astype(int):
        y, nu = geom.points[k], geom.normals[k]
        u = sphmeans.semianalytic_u_2d(spec, y, tg.times)
        du = sphmeans.semianalytic_dnu_u_2d(spec, y, nu, tg.times)
        m_rec = sphmeans.abel_recover_mean(u, radii, dt)
        w_rec = sphmeans.abel_recover_weighted_mean(du, radii, dt)
        m, _, mx, _ = sphmeans.gaussian_circle_means(spec, y, radii)
        w = mx @ nu
        worst = max(worst, np.max(np.abs(m_rec - m)) / np.max(np.abs(m)),
                    np.max(np.abs(w_rec - w)) / np.max(np.abs(w)))
    return _result("abel_means", worst, tol, worst < tol, t0, f"dt={dt}, {n_detectors} detectors")


def suite_forward_oracle(N=129, dt=1e-2, tol=1e-3):
    """Spectral traces vs the quadrature oracle at a handful of detectors."""
    t0 = time.perf_counter()
    spec = gaussian_phantom()
    grid = build_grid(N, 1.0, (0.0, 0.0))
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, dt)
    d, n = simulate(rasterize(spec, grid), geom, tg)
    idx = np.linspace(0, geom.n_phi - 1, 8).astype(int)
    od = sphmeans.oracle_traces_2d(spec, geom, tg, "dirichlet", idx)
    on = sphmeans.oracle_traces_2d(spec, geom, tg, "neumann", idx)
    err = max(np.max(np.abs(d.data[idx] - od)) / np.max(np.abs(od)),
              np.max(np.abs(n.data[idx] - on)) / np.max(np.abs(on)))
    return _result("forward_oracle", err, tol, err < tol, t0, f"N={N}, dt={dt}")


def suite_reconstruction_2d(N=65, dt=2e-3, tol=0.05):
    """Finite-time reconstructions of a Gaussian phantom from exact traces."""
    t0 = time.perf_counter()
    spec = gaussian_phantom()
    grid = build_grid(N, 1.0, (0.0, 0.0))
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, dt)
    f = rasterize(spec, grid)
    d, n = simulate(f, geom, tg)
    m = combine_mixed(d, n, 1.0, 0.1)
    errs = [relative_l2(reconstruct_neumann(n, grid), f), relative_l2(reconstruct_mixed(m, grid), f),
            relative_l2(reconstruct_dirichlet(d, grid), f)]
    worst = max(errs)
    return _result("reconstruction_2d", worst, tol, worst < tol, t0,
                   "F_T(n), F_T(mix), G_T(d) rel. L2 = " + ", ".join(f"{e:.2e}" for e in errs))


def suite_weighted_mean_inversion(N=65, dr=1e-3, tol=0.05):
    """Principal-value inversion of closed-form weighted means on the grid nodes."""
    t0 = time.perf_counter()
    spec = gaussian_phantom()
    grid = build_grid(N, 1.0, (0.0, 0.0))
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    samples = sphmeans.mean_samples_from_spec(spec, geom, dr, 2.0)
    X1, X2 = grid.coordinates()
    mask = grid.inside_mask(1.0 - 2 * grid.dx)
    pts = np.stack([X1[mask], X2[mask]], axis=1)
    f = eval_analytic(spec, pts)
    rec = sphmeans.invert_weighted_means(samples, pts)
    err = float(np.linalg.norm(rec - f) / np.linalg.norm(f))
    return _result("weighted_mean_inversion", err, tol, err < tol, t0, f"N={N}, dr={dr}")


def suite_inversion_3d(tol=1e-2):
    """Mixed-data inversion, range condition and a-independence in three dimensions."""
    t0 = time.perf_counter()
    spec = PhantomSpec((Gaussian((0.2, 0.1, -0.1), 0.15, 1.0), Gaussian((-0.25, -0.2, 0.1), 0.2, 0.6)))
    quad = lebedev(order=53)
    pts = interior_lattice()
    f = eval_analytic(spec, pts)
    rec = reconstruct_mixed_3d(spec, quad, 1.0, 0.1, pts)
    rec_a = reconstruct_mixed_3d(spec, quad, 2.0, 0.1, pts)
    rc = range_condition_3d(spec, quad, pts)
    rel = float(np.linalg.norm(rec - f) / np.linalg.norm(f))
    fmax = float(np.max(np.abs(f)))
    ok = rel < tol and np.max(np.abs(rc)) < 1e-4 * fmax and np.max(np.abs(rec - rec_a)) < 1e-4 * fmax
    return _result("inversion_3d", rel, tol, ok, t0,
                   f"range residual {np.max(np.abs(rc)):.2e}, a-shift {np.max(np.abs(rec - rec_a)):.2e}")


def kernel_limit_sequence(pairs, Ts=(4.0, 16.0, 64.0, 256.0)):
    """``|k_T - k_inf|`` for every pair (rows) and end time (columns)."""
    r1, r2 = pairs[:, 0], pairs[:, 1]
    kinf = kernels.k_inf(r1, r2)
    return np.stack([np.abs(kernels.k_T(r1, r2, T) - kinf) for T in Ts], axis=1)


def suite_kernel_limit(n=100, seed=1):
    """``k_T -> k_inf`` monotonically along growing end times."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pairs = rng.uniform(0.05, 2.0, size=(n, 2))
    pairs = pairs[np.abs(pairs[:, 0] - pairs[:, 1]) > 1e-3]
    diffs = kernel_limit_sequence(pairs)
    increments = np.diff(diffs, axis=1)
    worst = float(np.max(increments))
    return _result("kernel_limit", worst, 0.0, worst <= 0.0, t0,
                   f"largest increase of |k_T - k_inf| along T; final max {np.max(diffs[:, -1]):.2e}")


SUITES = {
    "kernel_quadrature": suite_kernel_quadrature,
    "log_bounds": suite_log_bounds,
    "abel_round_trip": suite_abel_round_trip,
    "abel_means": suite_abel_means,
    "kernel_limit": suite_kernel_limit,
    "forward_oracle": suite_forward_oracle,
    "reconstruction_2d": suite_reconstruction_2d,
    "weighted_mean_inversion": suite_weighted_mean_inversion,
    "inversion_3d": suite_inversion_3d,
}


def run_suites(names=None):
    names = list(names or SUITES)
    results = []
    for name in names:
        try:
            results.append(SUITES[name]())
        except Exception as exc:  # a crashing suite is a failing suite
            results.append({"suite": name, "measured": float("nan"), "tolerance": float("nan"),
                            "passed": False, "runtime_s": 0.0, "detail": f"{type(exc).__name__}: {exc}"})
    return {"passed": all(r["passed"] for r in results), "suites": results}


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
