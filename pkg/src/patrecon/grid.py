"""Sampling primitives: the square image grid, the detector ring and the time axis.

Array convention: ``data[i, j]`` sits at ``center + (-rho + i*dx, -rho + j*dx)``,
so the first array axis is the first spatial coordinate.
"""
from dataclasses import dataclass
import math

import numpy as np

from .exceptions import InvalidArgumentError
from .validation import check_int, check_positive, check_vector

# slack for ceil/floor of ratios that are integers in exact arithmetic
_RATIO_SLACK = 1e-9


@dataclass(frozen=True)
class Grid2D:
    N: int
    rho: float
    center: tuple

    @property
    def dx(self):
        return 2.0 * self.rho / (self.N - 1)

    @property
    def axis(self):
        """1-D node offsets ``-rho + i*dx`` relative to the center."""
        ax = -self.rho + self.dx * np.arange(self.N)
        ax[-1] = self.rho
        return ax

    def coordinates(self):
        """Return ``(X1, X2)`` arrays of shape (N, N) holding the node coordinates."""
        ax = self.axis
        return np.meshgrid(ax + self.center[0], ax + self.center[1], indexing="ij")

    def node(self, i, j):
        ax = self.axis
        return np.array([self.center[0] + ax[i], self.center[1] + ax[j]])

    def inside_mask(self, radius=None):
        """Boolean mask of nodes strictly inside the ball of ``radius`` (default rho)."""
        radius = self.rho if radius is None else radius
        X1, X2 = self.coordinates()
        return (X1 - self.center[0]) ** 2 + (X2 - self.center[1]) ** 2 < radius ** 2

    def to_dict(self):
        return {"N": self.N, "rho": self.rho, "center": list(self.center)}


@dataclass(frozen=True)
class DetectorGeometry:
    rho: float
    center: tuple
    n_phi: int

    @property
    def angular_step(self):
        return 2.0 * math.pi / self.n_phi

    @property
    def arc_step(self):
        """Arc length per detector, ``rho * angular_step``."""
        return self.rho * self.angular_step

    @property
    def angles(self):
        return self.angular_step * np.arange(self.n_phi)

    @property
    def normals(self):
        phi = self.angles
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)

    @property
    def points(self):
        return np.asarray(self.center) + self.rho * self.normals

    def to_dict(self):
        return {"rho": self.rho, "center": list(self.center), "n_phi": self.n_phi}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    dt: float

    @property
    def n_t(self):
        return int(math.floor(self.T / self.dt + 1.0 + _RATIO_SLACK))

    @property
    def times(self):
        return np.minimum(self.dt * np.arange(self.n_t), self.T)

    def truncate(self, T):
        """Time grid with the same step and a shorter end time."""
        return build_timegrid(T, self.dt)

    def to_dict(self):
        return {"T": self.T, "dt": self.dt, "n_t": self.n_t}


def build_grid(N, rho, z=(0.0, 0.0)):
    N = check_int(N, "N", minimum=2)
    rho = check_positive(rho, "rho")
    z = check_vector(z, "z")
    return Grid2D(N=N, rho=rho, center=(float(z[0]), float(z[1])))


def build_detectors(rho, z, dx):
    """Detector ring with ``ceil(2*pi*rho/dx)`` equiangular points."""
    rho = check_positive(rho, "rho")
    dx = check_positive(dx, "dx")
    z = check_vector(z, "z", dims=(2, 3))
    n_phi = int(math.ceil(2.0 * math.pi * rho / dx - _RATIO_SLACK))
    if n_phi < 1:
        raise InvalidArgumentError("detector spacing larger than the circumference")
    return DetectorGeometry(rho=rho, center=tuple(float(c) for c in z), n_phi=n_phi)


def build_timegrid(T, dt):
    T = check_positive(T, "T")
    dt = check_positive(dt, "dt")
    if dt >= T:
        raise InvalidArgumentError(f"dt must be smaller than T, got dt={dt}, T={T}")
    return TimeGrid(T=T, dt=dt)


def interp_time(values, query, dt, t0=0.0):
    """Piecewise-linear interpolation of samples ``values[l]`` taken at ``t0 + l*dt``.

    ``values`` may carry leading batch axes; interpolation runs along the last one.
    Queries outside the sampled interval raise :class:`InvalidArgumentError`.
    """
    values = np.asarray(values, dtype=float)
    q = np.asarray(query, dtype=float)
    n = values.shape[-1]
    s = (q - t0) / dt
    tol = 1e-9
    if np.any(s < -tol) or np.any(s > n - 1 + tol):
        raise InvalidArgumentError(f"query outside [{t0}, {t0 + (n - 1) * dt}]")
    s = np.clip(s, 0.0, n - 1)
    idx = np.minimum(np.floor(s).astype(np.intp), n - 2)
    w = s - idx
    lo = np.take(values, idx, axis=-1)
    hi = np.take(values, idx + 1, axis=-1)
    return (1.0 - w) * lo + w * hi
