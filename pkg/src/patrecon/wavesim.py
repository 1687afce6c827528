"""Forward model: pseudo-spectral wave propagation with initial data ``(f, 0)`` and
detector traces (Dirichlet, Neumann, mixed) sampled on the ring.

The field is embedded in a periodic box large enough that no periodic image reaches a
detector before the end time. In Fourier space the solution is exact in time,
``u_hat(k, t) = f_hat(k) cos(|k| t)``, so each snapshot costs one inverse FFT (three
with the gradient) and no time stepping error accumulates.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import rawio
from .exceptions import FormatError, GeometryMismatchError, InvalidArgumentError, PadTooSmallError
from .grid import DetectorGeometry, TimeGrid, build_detectors, build_grid, build_timegrid
from .phantom import ScalarField2D
from .validation import check_choice, check_positive

KINDS = ("dirichlet", "neumann", "mixed")


@dataclass(frozen=True)
class PaddedDomain:
    """Periodic box of ``size x size`` nodes with spacing ``grid.dx``.

    The base grid occupies nodes ``offset .. offset + N - 1`` on both axes.
    """
    grid: object
    size: int

    @property
    def offset(self):
        return (self.size - self.grid.N) // 2

    @property
    def width(self):
        """Period length of the box."""
        return self.size * self.grid.dx

    def origin(self):
        """Coordinates of box node (0, 0)."""
        dx = self.grid.dx
        return np.asarray(self.grid.center) - self.grid.rho - self.offset * dx

    def required_width(self, T):
        return T + 2.0 * self.grid.rho + 4.0 * self.grid.dx

    def check(self, T):
        if self.size < self.grid.N:
            raise PadTooSmallError("padded box smaller than the base grid")
        if self.width < self.required_width(T):
            raise PadTooSmallError(
                f"box width {self.width:.4f} below {self.required_width(T):.4f} needed for T={T}")

    def wavenumbers(self):
        """``(k1, k2)`` broadcastable to the rfft2 layout (k2 is the half axis)."""
        k1 = 2.0 * math.pi * sfft.fftfreq(self.size, d=self.grid.dx)[:, None]
        k2 = 2.0 * math.pi * sfft.rfftfreq(self.size, d=self.grid.dx)[None, :]
        return k1, k2

    def embed(self, data):
        box = np.zeros((self.size, self.size))
        o, n = self.offset, self.grid.N
        box[o:o + n, o:o + n] = data
        return box


def build_padded_domain(grid, T):
    """Smallest FFT-friendly box satisfying ``width >= T + 2 rho + 4 dx``."""
    T = check_positive(T, "T")
    need = int(math.ceil((T + 2.0 * grid.rho + 4.0 * grid.dx) / grid.dx - 1e-9))
    size = sfft.next_fast_len(max(need, grid.N), real=True)
    size += size % 2
    return PaddedDomain(grid, size)


@dataclass(frozen=True)
class TraceSet:
    geometry: DetectorGeometry
    timegrid: TimeGrid
    kind: str
    weights: tuple
    data: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_choice(self.kind, "kind", KINDS)
        data = np.array(self.data, dtype=np.float64)
        if data.shape != (self.geometry.n_phi, self.timegrid.n_t):
            raise GeometryMismatchError(
                f"trace shape {data.shape} != ({self.geometry.n_phi}, {self.timegrid.n_t})")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def truncate(self, T):
        """Same trace restricted to ``[0, T]``."""
        tg = self.timegrid.truncate(T)
        if tg.n_t > self.timegrid.n_t:
            raise InvalidArgumentError(f"cannot extend traces from T={self.timegrid.T} to T={T}")
        return replace(self, timegrid=tg, data=self.data[:, :tg.n_t], meta=dict(self.meta))

    def with_data(self, data, **meta):
        merged = dict(self.meta)
        merged.update(meta)
        return replace(self, data=data, meta=merged)


def _spectral_snapshots(f_hat, pad, times, gradient):
    k1, k2 = pad.wavenumbers()
    kabs = np.sqrt(k1 * k1 + k2 * k2)
    shape = (pad.size, pad.size)
    if gradient:
        # Nyquist modes have no real derivative; drop them
        nyq1 = np.abs(np.abs(k1) - math.pi / pad.grid.dx) < 1e-9
        nyq2 = np.abs(np.abs(k2) - math.pi / pad.grid.dx) < 1e-9
        ik1 = np.where(nyq1, 0.0, 1j * k1)
        ik2 = np.where(nyq2, 0.0, 1j * k2)
    for t in times:
        u_hat = f_hat * np.cos(kabs * t)
        u = sfft.irfft2(u_hat, s=shape)
        if gradient:
            grad = np.stack([sfft.irfft2(ik1 * u_hat, s=shape), sfft.irfft2(ik2 * u_hat, s=shape)])
        else:
            grad = None
        yield t, u, grad


def propagate(field, pad, tg, gradient=True):
    """Yield ``(t_l, u(., t_l), grad u(., t_l))`` on the padded box for every sample time.

    Snapshots are closed-form in time: any time can be evaluated independently.
    """
    pad.check(tg.T)
    f_hat = sfft.rfft2(pad.embed(field.data))
    return _spectral_snapshots(f_hat, pad, tg.times, gradient)


def propagate_box(box_values, pad, times, gradient=True):
    """Propagate values given on the whole periodic box (no wrap-around check)."""
    f_hat = sfft.rfft2(np.asarray(box_values, dtype=float))
    return _spectral_snapshots(f_hat, pad, np.atleast_1d(times), gradient)


def spectral_energy(box_values, pad, t):
    """Discrete wave energy ``sum |k|^2 |u_hat|^2 + |d_t u_hat|^2`` at time ``t`` (Parseval)."""
    f_hat = sfft.fft2(np.asarray(box_values, dtype=float))
    k1 = 2.0 * math.pi * sfft.fftfreq(pad.size, d=pad.grid.dx)[:, None]
    k2 = 2.0 * math.pi * sfft.fftfreq(pad.size, d=pad.grid.dx)[None, :]
    kabs = np.sqrt(k1 * k1 + k2 * k2)
    u_hat = f_hat * np.cos(kabs * t)
    ut_hat = -kabs * f_hat * np.sin(kabs * t)
    return float(np.sum(kabs ** 2 * np.abs(u_hat) ** 2 + np.abs(ut_hat) ** 2)) / pad.size ** 2


def _lagrange_weights(w, order):
    """1-D Lagrange weights for fractional offset ``w`` on stencil offsets of the given order."""
    if order == 1:
        return (0,), [1.0 - w, w]
    return (-1,), [-w * (w - 1.0) * (w - 2.0) / 6.0, (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0,
                   -(w + 1.0) * w * (w - 2.0) / 2.0, (w + 1.0) * w * (w - 1.0) / 6.0]


def sampling_matrix(pad, points, method="cubic"):
    """Sparse ``(n_points, size*size)`` operator evaluating box fields at ``points``.

    ``method`` is ``"bilinear"`` (2x2 stencil) or ``"cubic"`` (4x4 Lagrange stencil).
    """
    check_choice(method, "method", ("bilinear", "cubic"))
    order = 1 if method == "bilinear" else 3
    dx = pad.grid.dx
    s = (np.asarray(points, dtype=float) - pad.origin()) / dx
    lo = 0 if order == 1 else 1
    hi = pad.size - 1 if order == 1 else pad.size - 3
    if np.any(s < lo) or np.any(s > hi + 1):
        raise GeometryMismatchError("detector outside the padded domain")
    i0 = np.minimum(np.floor(s).astype(np.intp), hi - (1 if order == 1 else 0))
    w = s - i0
    (start,), wi = _lagrange_weights(w[:, 0], order)
    _, wj = _lagrange_weights(w[:, 1], order)
    rows, cols, vals = [], [], []
    for a, wa in enumerate(wi):
        for b, wb in enumerate(wj):
            rows.append(np.arange(len(s)))
            cols.append((i0[:, 0] + start + a) * pad.size + (i0[:, 1] + start + b))
            vals.append(wa * wb)
    n = pad.size * pad.size
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(s), n))


def bilinear_matrix(pad, points):
    return sampling_matrix(pad, points, "bilinear")


def _check_detectors(pad, geom):
    if not np.allclose(geom.center, pad.grid.center[:2]):
        raise GeometryMismatchError("detector ring and grid have different centers")


def extract_dirichlet(stream, geom, pad, tg, method="cubic"):
    _check_detectors(pad, geom)
    S = sampling_matrix(pad, geom.points, method)
    data = np.empty((geom.n_phi, tg.n_t))
    for l, (_, u, _) in enumerate(stream):
        data[:, l] = S @ u.ravel()
    return TraceSet(geom, tg, "dirichlet", (1.0, 0.0), data)


def extract_neumann(stream, geom, pad, tg, method="cubic"):
    """Normal derivative ``<nu_k, grad u(y_k, t_l)>``, stored without the weight b."""
    _check_detectors(pad, geom)
    S = sampling_matrix(pad, geom.points, method)
    nu = geom.normals
    data = np.empty((geom.n_phi, tg.n_t))
    for l, (_, _, grad) in enumerate(stream):
        if grad is None:
            raise InvalidArgumentError("stream was produced without gradients")
        data[:, l] = nu[:, 0] * (S @ grad[0].ravel()) + nu[:, 1] * (S @ grad[1].ravel())
    return TraceSet(geom, tg, "neumann", (0.0, 1.0), data)


def simulate(field, geom, tg, pad=None, method="cubic"):
    """Dirichlet and Neumann traces from a single propagation pass."""
    if pad is None:
        pad = build_padded_domain(field.grid, tg.T)
    _check_detectors(pad, geom)
    S = sampling_matrix(pad, geom.points, method)
    nu = geom.normals
    d = np.empty((geom.n_phi, tg.n_t))
    n = np.empty((geom.n_phi, tg.n_t))
    for l, (_, u, grad) in enumerate(propagate(field, pad, tg, gradient=True)):
        d[:, l] = S @ u.ravel()
        n[:, l] = nu[:, 0] * (S @ grad[0].ravel()) + nu[:, 1] * (S @ grad[1].ravel())
    meta = {"solver": f"pseudo-spectral cos(|k|t), {method} detector sampling",
            "padded_size": pad.size, "grid_N": field.grid.N}
    return (TraceSet(geom, tg, "dirichlet", (1.0, 0.0), d, dict(meta)),
            TraceSet(geom, tg, "neumann", (0.0, 1.0), n, dict(meta)))


def _same_setup(x, y):
    if x.geometry != y.geometry or x.timegrid != y.timegrid:
        raise GeometryMismatchError("traces differ in geometry or time grid")


def combine_mixed(d, n, a, b):
    """Mixed trace ``a * u + b * d_nu u`` from a Dirichlet/Neumann pair."""
    _same_setup(d, n)
    if d.kind != "dirichlet" or n.kind != "neumann":
        raise InvalidArgumentError("combine_mixed needs a dirichlet and a neumann trace")
    meta = dict(d.meta)
    meta.update(n.meta)
    return TraceSet(d.geometry, d.timegrid, "mixed", (a, b), a * d.data + b * n.data, meta)


def add_noise(trace, percent, seed):
    """Add i.i.d. Gaussian noise with std ``percent * max|data|``."""
    percent = check_positive(percent, "percent", allow_zero=True)
    if percent == 0:
        return trace.with_data(trace.data, noise=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    sigma = percent * float(np.max(np.abs(trace.data)))
    noisy = trace.data + rng.normal(0.0, sigma, size=trace.data.shape)
    return trace.with_data(noisy, noise=percent, seed=seed)


def write_traces(trace, path):
    meta = {"kind": trace.kind, "a": trace.weights[0], "b": trace.weights[1],
            "rho": trace.geometry.rho, "z": list(trace.geometry.center),
            "n_phi": trace.geometry.n_phi, "T": trace.timegrid.T, "dt": trace.timegrid.dt,
            "seed": trace.meta.get("seed"), "noise": trace.meta.get("noise", 0.0),
            "provenance": {k: v for k, v in trace.meta.items() if k not in ("seed", "noise")}}
    rawio.write_raw(path, trace.data, "traces", meta)


def read_traces(path):
    data, h = rawio.read_raw(path, "traces", required=("kind", "a", "b", "rho", "z", "n_phi", "T", "dt"))
    try:
        geom = DetectorGeometry(float(h["rho"]), tuple(float(c) for c in h["z"]), int(h["n_phi"]))
        tg = build_timegrid(float(h["T"]), float(h["dt"]))
        meta = dict(h.get("provenance") or {})
        meta.update(seed=h.get("seed"), noise=h.get("noise", 0.0))
        return TraceSet(geom, tg, h["kind"], (h["a"], h["b"]), data, meta)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: inconsistent trace metadata: {exc}") from exc


class WaveSimulator(TransformerMixin, BaseEstimator):
    """Transformer mapping initial pressure images to detector traces.

    Parameters mirror the experiment setup; ``transform`` accepts an ``(N, N)`` image
    (or a :class:`ScalarField2D`) and returns the requested :class:`TraceSet`.
    """

    def __init__(self, N=257, rho=1.0, center=(0.0, 0.0), T=2.0, dt=1e-3, kind="dirichlet",
                 a=1.0, b=0.1):
        self.N = N
        self.rho = rho
        self.center = center
        self.T = T
        self.dt = dt
        self.kind = kind
        self.a = a
        self.b = b

    def fit(self, X=None, y=None):
        check_choice(self.kind, "kind", KINDS)
        self.grid_ = build_grid(self.N, self.rho, self.center)
        self.geometry_ = build_detectors(self.rho, self.center, self.grid_.dx)
        self.timegrid_ = build_timegrid(self.T, self.dt)
        self.pad_ = build_padded_domain(self.grid_, self.T)
        return self

    def transform(self, X):
        check_is_fitted(self, "pad_")
        if isinstance(X, ScalarField2D):
            field = X
        else:
            X = np.asarray(X, dtype=float)
            if X.shape != (self.grid_.N, self.grid_.N):
                raise GeometryMismatchError(f"image shape {X.shape} does not match the fitted grid")
            field = ScalarField2D(self.grid_, X)
        if field.grid != self.grid_:
            raise GeometryMismatchError("image grid does not match the fitted grid")
        d, n = simulate(field, self.geometry_, self.timegrid_, self.pad_)
        if self.kind == "dirichlet":
            return d
        if self.kind == "neumann":
            return n
        return combine_mixed(d, n, self.a, self.b)
