"""Initial-pressure phantoms: smooth-edged geometric primitives and Gaussian sums."""
from dataclasses import dataclass, field
import math
import os

import numpy as np

from . import rawio
from .exceptions import FormatError, SupportError, UnsupportedSpecError
from .grid import Grid2D, build_grid


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_in: float
    r_out: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    semiaxes: tuple
    angle: float = 0.0
    amplitude: float = 1.0


@dataclass(frozen=True)
class Gaussian:
    """``amplitude * exp(-|x - center|^2 / width^2)``; ``center`` may be 2-D or 3-D."""
    center: tuple
    width: float
    amplitude: float = 1.0


PRIMITIVES = {"disk": Disk, "annulus": Annulus, "ellipse": Ellipse, "gaussian": Gaussian}


@dataclass(frozen=True)
class PhantomSpec:
    primitives: tuple = ()
    smoothing: float = 0.03
    margin: float = 0.05
    clip_and_mask: bool = False

    @property
    def is_gaussian(self):
        return all(isinstance(p, Gaussian) for p in self.primitives)

    def to_dict(self):
        out = []
        for p in self.primitives:
            kind = next(k for k, v in PRIMITIVES.items() if isinstance(p, v))
            entry = {"type": kind}
            entry.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in p.__dict__.items()})
            out.append(entry)
        return {"primitives": out, "smoothing": self.smoothing, "margin": self.margin,
                "clip_and_mask": self.clip_and_mask}

    @classmethod
    def from_dict(cls, data):
        prims = []
        for entry in data.get("primitives", []):
            entry = dict(entry)
            kind = entry.pop("type", None)
            if kind not in PRIMITIVES:
                raise UnsupportedSpecError(f"unknown primitive type {kind!r}")
            entry = {k: (tuple(v) if isinstance(v, list) else v) for k, v in entry.items()}
            try:
                prims.append(PRIMITIVES[kind](**entry))
            except TypeError as exc:
                raise UnsupportedSpecError(f"bad {kind} primitive: {exc}") from exc
        return cls(primitives=tuple(prims), smoothing=float(data.get("smoothing", 0.03)),
                   margin=float(data.get("margin", 0.05)),
                   clip_and_mask=bool(data.get("clip_and_mask", False)))


def head_phantom(smoothing=0.03):
    """Deterministic head-like phantom: annular skull with interior structures, values in [0, 1]."""
    return PhantomSpec(primitives=(
        Annulus((0.0, 0.0), 0.78, 0.88, 1.0),
        Ellipse((0.0, 0.0), (0.70, 0.62), 0.0, 0.3),
        Ellipse((-0.25, 0.2), (0.18, 0.10), math.radians(30.0), 0.5),
        Disk((0.3, 0.25), 0.1, 0.6),
        Disk((0.05, -0.35), 0.12, 0.4),
        Ellipse((0.3, -0.15), (0.08, 0.14), math.radians(-20.0), 0.25),
    ), smoothing=smoothing, margin=0.05, clip_and_mask=True)


def gaussian_phantom():
    """Off-center two-blob Gaussian sum used by the oracle-backed tests."""
    return PhantomSpec(primitives=(
        Gaussian((0.2, 0.1), 0.15, 1.0),
        Gaussian((-0.25, -0.2), 0.2, 0.6),
    ))


def smooth_step(s):
    """C-infinity step: 1 for s <= 0, 0 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        b = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def _edge(signed_distance, width):
    """Indicator of ``signed_distance < 0`` mollified over ``width``."""
    if width <= 0:
        return (signed_distance < 0).astype(float)
    return smooth_step(signed_distance / width + 0.5)


def _extent(p, smoothing):
    c = np.asarray(p.center, dtype=float)
    if isinstance(p, Disk):
        return c, p.radius + smoothing / 2
    if isinstance(p, Annulus):
        return c, p.r_out + smoothing / 2
    if isinstance(p, Ellipse):
        return c, max(p.semiaxes) + smoothing / 2
    return c, 3.0 * p.width


def check_support(spec, rho, center):
    """Raise :class:`SupportError` unless every primitive sits inside ``rho - margin`` of ``center``."""
    limit = rho - spec.margin
    center = np.asarray(center, dtype=float)
    for p in spec.primitives:
        c, reach = _extent(p, spec.smoothing)
        if c.shape != center.shape:
            raise SupportError(f"primitive {p} has dimension {c.size}, expected {center.size}")
        if np.linalg.norm(c - center) + reach >= limit:
            raise SupportError(f"primitive {p} reaches beyond radius {limit}")


def _primitive_values(p, X1, X2, smoothing):
    d1 = X1 - p.center[0]
    d2 = X2 - p.center[1]
    if isinstance(p, Gaussian):
        return p.amplitude * np.exp(-(d1 * d1 + d2 * d2) / p.width ** 2)
    r = np.hypot(d1, d2)
    if isinstance(p, Disk):
        return p.amplitude * _edge(r - p.radius, smoothing)
    if isinstance(p, Annulus):
        return p.amplitude * _edge(r - p.r_out, smoothing) * _edge(p.r_in - r, smoothing)
    ca, sa = math.cos(p.angle), math.sin(p.angle)
    u = (ca * d1 + sa * d2) / p.semiaxes[0]
    v = (-sa * d1 + ca * d2) / p.semiaxes[1]
    # normalized radius scaled back to a length by the minor semiaxis
    dist = (np.hypot(u, v) - 1.0) * min(p.semiaxes)
    return p.amplitude * _edge(dist, smoothing)


@dataclass(frozen=True)
class ScalarField2D:
    grid: Grid2D
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.shape != (self.grid.N, self.grid.N):
            raise ValueError(f"data shape {data.shape} does not match grid N={self.grid.N}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)


def rasterize(spec, grid):
    """Sample ``spec`` at the nodes of ``grid``."""
    check_support(spec, grid.rho, grid.center)
    X1, X2 = grid.coordinates()
    data = np.zeros((grid.N, grid.N))
    for p in spec.primitives:
        data += _primitive_values(p, X1, X2, spec.smoothing)
    if spec.clip_and_mask:
        data = np.clip(data, 0.0, 1.0)
        data[~grid.inside_mask(grid.rho - spec.margin)] = 0.0
    return ScalarField2D(grid, data)


def _gaussians(spec):
    if not spec.is_gaussian:
        raise UnsupportedSpecError("analytic evaluation needs a pure Gaussian spec")
    return spec.primitives


def eval_analytic(spec, point):
    """Gaussian-sum value at ``point`` (shape ``(..., d)``)."""
    point = np.asarray(point, dtype=float)
    out = np.zeros(point.shape[:-1])
    for g in _gaussians(spec):
        diff = point - np.asarray(g.center)
        out = out + g.amplitude * np.exp(-np.sum(diff * diff, axis=-1) / g.width ** 2)
    return out[()] if out.ndim == 0 else out


def eval_analytic_gradient(spec, point):
    point = np.asarray(point, dtype=float)
    out = np.zeros(point.shape)
    for g in _gaussians(spec):
        diff = point - np.asarray(g.center)
        val = g.amplitude * np.exp(-np.sum(diff * diff, axis=-1) / g.width ** 2)
        out = out - 2.0 / g.width ** 2 * val[..., None] * diff
    return out


def eval_analytic_hessian(spec, point):
    point = np.asarray(point, dtype=float)
    dim = point.shape[-1]
    out = np.zeros(point.shape + (dim,))
    for g in _gaussians(spec):
        diff = point - np.asarray(g.center)
        a = 1.0 / g.width ** 2
        val = g.amplitude * np.exp(-a * np.sum(diff * diff, axis=-1))
        outer = 4.0 * a * a * diff[..., :, None] * diff[..., None, :] - 2.0 * a * np.eye(dim)
        out = out + val[..., None, None] * outer
    return out


def write_field(field, path, provenance=None):
    meta = {"grid": field.grid.to_dict(), "axis_order": "data[i, j] at center + (-rho + i*dx, -rho + j*dx)",
            "units": "arbitrary pressure units; lengths in units of rho"}
    if provenance:
        meta["provenance"] = provenance
    rawio.write_raw(path, field.data, "field", meta)


def read_field(path):
    data, header = rawio.read_raw(path, "field", required=("grid",))
    try:
        g = header["grid"]
        grid = build_grid(int(g["N"]), float(g["rho"]), tuple(g["center"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad grid metadata") from exc
    if data.shape != (grid.N, grid.N):
        raise FormatError(f"{path}: data shape {data.shape} disagrees with N={grid.N}")
    return ScalarField2D(grid, data)


def to_uint8(data):
    """Min-max scale to 0..255; a constant image maps to mid gray."""
    data = np.asarray(data, dtype=float)
    lo, hi = float(np.min(data)), float(np.max(data))
    if hi - lo <= 0:
        return np.full(data.shape, 128, dtype=np.uint8)
    return np.round(255.0 * (data - lo) / (hi - lo)).astype(np.uint8)


def export_pgm(data, path):
    """Write a binary 8-bit PGM. Rows of the image follow the first array axis."""
    img = to_uint8(data)
    with open(os.fspath(path), "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
