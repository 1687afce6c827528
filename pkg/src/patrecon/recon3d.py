"""Three-dimensional mixed-data inversion on a spherical detection surface.

Forward data comes from the closed-form Gaussian sphere means, so the only
discretization is the surface quadrature over the detector sphere:

    f(x) = 1/(2 pi b) * sum_k w_k (a u + b d_nu u)(y_k, |x - y_k|) / |x - y_k|
"""
from dataclasses import dataclass, field
import csv
import math
import os

import numpy as np
from scipy.integrate import lebedev_rule

from .exceptions import DomainError, InvalidArgumentError
from .phantom import check_support, eval_analytic
from .sphmeans import semianalytic_u_3d, semianalytic_dnu_u_3d
from .validation import check_int, check_positive, check_vector


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes ``y_k`` on the sphere of radius ``rho`` about ``center`` with area weights ``w_k``."""
    rho: float
    center: tuple
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    rule: str = "product"
    degree: int = 0

    @property
    def normals(self):
        return (self.nodes - np.asarray(self.center)) / self.rho

    @property
    def size(self):
        return len(self.weights)


def product_rule(rho=1.0, center=(0.0, 0.0, 0.0), n_polar=48, n_azimuth=96):
    """Gauss-Legendre in ``cos(theta)`` times the uniform azimuthal rule.

    Exact for spherical harmonics of degree ``<= min(2 n_polar - 1, n_azimuth - 1)``.
    """
    rho = check_positive(rho, "rho")
    center = check_vector(center, "center", dims=(3,))
    n_polar = check_int(n_polar, "n_polar", minimum=1)
    n_azimuth = check_int(n_azimuth, "n_azimuth", minimum=1)
    mu, wmu = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    s = np.sqrt(1.0 - MU * MU)
    unit = np.stack([s * np.cos(PHI), s * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_azimuth, 2.0 * math.pi / n_azimuth)[None, :]).ravel()
    return SphereQuadrature(rho, tuple(center), center + rho * unit, rho * rho * w, "product",
                            min(2 * n_polar - 1, n_azimuth - 1))


def lebedev(rho=1.0, center=(0.0, 0.0, 0.0), order=53):
    """Lebedev rule from scipy (order 53 has 974 nodes)."""
    rho = check_positive(rho, "rho")
    center = check_vector(center, "center", dims=(3,))
    x, w = lebedev_rule(order)
    return SphereQuadrature(rho, tuple(center), center + rho * x.T, rho * rho * w, "lebedev", order)


def default_quadrature(rho=1.0, center=(0.0, 0.0, 0.0)):
    return product_rule(rho, center)


def _check_inputs(spec, quad, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != 3:
        raise InvalidArgumentError("evaluation points must be 3-vectors")
    if np.any(np.linalg.norm(x - np.asarray(quad.center), axis=1) >= quad.rho):
        raise DomainError("evaluation point outside the detector sphere")
    if spec.primitives:
        check_support(spec, quad.rho, quad.center)
    return x


def _surface_sum(spec, quad, x, a, b):
    """``sum_k w_k (a u + b d_nu u)(y_k, |x - y_k|) / |x - y_k|`` for each row of ``x``."""
    out = np.zeros(len(x))
    for k, (y, nu, w) in enumerate(zip(quad.nodes, quad.normals, quad.weights)):
        dist = np.linalg.norm(x - y, axis=1)
        val = np.zeros(len(x))
        if a != 0:
            val += a * semianalytic_u_3d(spec, y, dist)
        if b != 0:
            val += b * semianalytic_dnu_u_3d(spec, y, nu, dist)
        out += w * val / dist
    return out


def reconstruct_mixed_3d(spec, quad, a, b, x):
    """Reconstruct ``f(x)`` from mixed data ``a u + b d_nu u`` on the sphere (``b != 0``)."""
    if b == 0:
        raise InvalidArgumentError("mixed reconstruction needs b != 0")
    single = np.ndim(x) == 1
    x = _check_inputs(spec, quad, x)
    out = _surface_sum(spec, quad, x, a, b) / (2.0 * math.pi * b)
    return out[0] if single else out


def range_condition_3d(spec, quad, x):
    """``sum_k w_k u(y_k, |x - y_k|) / |x - y_k|``; zero for exact data."""
    single = np.ndim(x) == 1
    x = _check_inputs(spec, quad, x)
    out = _surface_sum(spec, quad, x, 1.0, 0.0)
    return out[0] if single else out


def interior_lattice(rho=1.0, center=(0.0, 0.0, 0.0), n=5, extent=0.5):
    """``n^3`` points on a cube of half-width ``extent * rho`` about ``center``."""
    ax = np.linspace(-extent * rho, extent * rho, n)
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    return X + np.asarray(center, dtype=float)


def lattice_reconstruction(spec, quad, a, b, points):
    """Rows ``(x, f_hat, f, error)`` for every lattice point."""
    f_hat = reconstruct_mixed_3d(spec, quad, a, b, points)
    f = eval_analytic(spec, points) if spec.primitives else np.zeros(len(points))
    return points, f_hat, f, f_hat - f


def write_lattice_csv(points, f_hat, f, path):
    with open(os.fspath(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "x3", "f_hat", "f", "error"])
        for p, fh_, f_ in zip(points, f_hat, f):
            writer.writerow([f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}",
                             repr(float(fh_)), repr(float(f_)), repr(float(fh_ - f_))])
