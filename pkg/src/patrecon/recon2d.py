"""Filtered backprojection from detector traces on a circle.

Every reconstructor has the same two stages:

1. filter each detector row in time, ``Q = traces @ M.T`` with ``M`` the finite-time
   matrix ``A_T`` or the infinite-horizon matrix ``A`` (streamed in row blocks);
2. backproject: sum ``Q[k]`` evaluated at the travel time ``|x - y_k|`` over detectors.

``F`` formulas backproject directly; ``G`` formulas backproject with ``cos(phi_k)`` and
``sin(phi_k)`` weights and take the divergence by central differences.
"""
from dataclasses import dataclass, field
import csv
import logging
import math
import os

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import GeometryMismatchError, InvalidArgumentError
from .grid import build_grid
from .kernels import apply_filter
from .phantom import ScalarField2D, write_field
from .validation import check_choice

log = logging.getLogger(__name__)

HORIZONS = ("finite", "infinite")
CSV_COLUMNS = ("formula", "horizon", "kind", "noise", "T", "dt", "L2")


@dataclass(frozen=True)
class Reconstruction:
    field: ScalarField2D
    provenance: dict = field(default_factory=dict)

    @property
    def data(self):
        return self.field.data

    @property
    def grid(self):
        return self.field.grid


def _check_trace(trace, kind, horizon):
    check_choice(horizon, "horizon", HORIZONS)
    if trace.kind != kind:
        raise InvalidArgumentError(f"expected a {kind} trace, got {trace.kind}")
    diam = 2.0 * trace.geometry.rho
    if horizon == "finite" and trace.timegrid.T < diam * (1.0 - 1e-12):
        raise InvalidArgumentError(
            f"finite-time inversion needs T >= diameter {diam}, got T={trace.timegrid.T}")


def _check_grid(trace, grid):
    if not np.allclose(grid.center, trace.geometry.center[:2]):
        raise GeometryMismatchError("output grid and detector ring are not concentric")
    if grid.rho > trace.geometry.rho * (1.0 + 1e-12):
        raise GeometryMismatchError("output grid extends beyond the detector ring")


def filtered_traces(data, tg, horizon, variant="corrected"):
    """``data @ M.T`` with ``M = A_T`` (finite) or ``A`` scaled by ``1/t_j`` (infinite)."""
    kind = "A_T" if horizon == "finite" else "A"
    return apply_filter(data, tg, kind, tg.T, variant=variant)


def backproject(Q, geom, grid, tg, weights=None):
    """``out[i, j] = sum_k w_k interp(Q[..., k, :], |x_ij - y_k|)``.

    ``Q`` has shape ``(..., n_phi, n_t - 1)`` (filtered values at ``t_0 .. t_{n_t - 2}``) and
    ``weights`` shape ``(..., n_phi)``. Travel times past ``t_{n_t - 2}`` are clamped to the
    last node; the number of clamped evaluations is returned alongside the image.
    """
    Q = np.asarray(Q, dtype=float)
    lead = Q.shape[:-2]
    n_phi, n_q = Q.shape[-2:]
    if n_phi != geom.n_phi or n_q != tg.n_t - 1:
        raise GeometryMismatchError("filtered traces do not match geometry and time grid")
    if weights is None:
        weights = np.ones(lead + (n_phi,))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), lead + (n_phi,))
    X1, X2 = grid.coordinates()
    out = np.zeros(lead + X1.shape)
    t_last = (n_q - 1) * tg.dt
    clamped = 0
    for k, y in enumerate(geom.points):
        dist = np.hypot(X1 - y[0], X2 - y[1])
        over = dist > t_last
        clamped += int(np.count_nonzero(over))
        s = np.minimum(dist, t_last) / tg.dt
        idx = np.minimum(s.astype(np.intp), n_q - 2)
        w = s - idx
        row = Q[..., k, :]
        vals = (1.0 - w) * row[..., idx] + w * row[..., idx + 1]
        out += weights[..., k, None, None] * vals
    return out, clamped


def central_difference(data, dx, axis):
    """Second-order central differences with one-sided second-order stencils at the edges."""
    return np.gradient(data, dx, axis=axis, edge_order=2)


def _coefficient(geom, horizon):
    if horizon == "finite":
        return 2.0 * geom.arc_step / math.pi ** 2
    return geom.arc_step / math.pi


def _finish(data, grid, trace, formula, horizon, clamped, variant):
    data = np.where(grid.inside_mask(grid.rho), data, 0.0) if grid.rho >= trace.geometry.rho else data
    if clamped:
        log.info("%d travel-time evaluations clamped to the last filter node", clamped)
    prov = {"formula": formula, "horizon": horizon, "kind": trace.kind,
            "weights": list(trace.weights), "T": trace.timegrid.T, "dt": trace.timegrid.dt,
            "noise": trace.meta.get("noise", 0.0), "seed": trace.meta.get("seed"),
            "clamped": clamped}
    if horizon == "finite":
        prov["kernel"] = variant
    return Reconstruction(ScalarField2D(grid, data), prov)


def _neumann_operator(trace, grid, horizon, variant):
    tg = trace.timegrid
    Q = filtered_traces(trace.data, tg, horizon, variant)
    img, clamped = backproject(Q, trace.geometry, grid, tg)
    return _coefficient(trace.geometry, horizon) * img, clamped


def reconstruct_neumann(trace, grid, horizon="finite", variant="corrected"):
    """``F_T`` (finite) or ``F_inf`` (infinite) from Neumann traces."""
    _check_trace(trace, "neumann", horizon)
    _check_grid(trace, grid)
    img, clamped = _neumann_operator(trace, grid, horizon, variant)
    return _finish(img, grid, trace, "F", horizon, clamped, variant)


def reconstruct_dirichlet(trace, grid, horizon="finite", variant="corrected"):
    """``G_T`` (finite) or ``G_inf`` (infinite) from Dirichlet traces."""
    _check_trace(trace, "dirichlet", horizon)
    _check_grid(trace, grid)
    geom, tg = trace.geometry, trace.timegrid
    Q = filtered_traces(trace.data, tg, horizon, variant)
    nu = geom.normals
    both, clamped = backproject(np.stack([Q, Q]), geom, grid, tg, weights=nu.T)
    div = central_difference(both[0], grid.dx, 0) + central_difference(both[1], grid.dx, 1)
    return _finish(_coefficient(geom, horizon) * div, grid, trace, "G", horizon, clamped, variant)


def reconstruct_mixed(trace, grid, horizon="finite", variant="corrected"):
    """Neumann formula applied to mixed data ``a u + b d_nu u``, scaled by ``1/b``."""
    _check_trace(trace, "mixed", horizon)
    _check_grid(trace, grid)
    b = trace.weights[1]
    if b == 0:
        raise InvalidArgumentError("mixed reconstruction needs b != 0")
    img, clamped = _neumann_operator(trace, grid, horizon, variant)
    return _finish(img / b, grid, trace, "F", horizon, clamped, variant)


def range_condition_residual(trace, grid, horizon="finite", variant="corrected"):
    """Neumann formula applied to Dirichlet data; vanishes for exact data."""
    _check_trace(trace, "dirichlet", horizon)
    _check_grid(trace, grid)
    img, clamped = _neumann_operator(trace, grid, horizon, variant)
    return _finish(img, grid, trace, "F", horizon, clamped, variant)


def l2_error(recon, reference):
    """``sqrt(sum |recon - ref|^2 dx^2)`` over nodes strictly inside the detection ball."""
    if recon.grid != reference.grid:
        raise GeometryMismatchError("reconstruction and reference grids differ")
    grid = reference.grid
    mask = grid.inside_mask(grid.rho)
    diff = recon.data[mask] - reference.data[mask]
    return float(math.sqrt(np.sum(diff * diff) * grid.dx ** 2))


def relative_l2(recon, reference):
    zero = ScalarField2D(reference.grid, np.zeros_like(reference.data))
    return l2_error(recon, reference) / l2_error(reference, zero)


def write_reconstruction(recon, path):
    write_field(recon.field, path, provenance=recon.provenance)


def write_error_csv(rows, path):
    """Write error rows (dicts keyed by :data:`CSV_COLUMNS`) in the fixed column order."""
    with open(os.fspath(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


RECONSTRUCTORS = {
    ("F", "neumann"): reconstruct_neumann,
    ("G", "dirichlet"): reconstruct_dirichlet,
    ("F", "mixed"): reconstruct_mixed,
    ("F", "dirichlet"): range_condition_residual,
}


class FilteredBackprojection(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` fixes the output grid, ``transform`` maps a TraceSet to a
    :class:`Reconstruction`. ``formula`` is ``"F"`` or ``"G"``; the trace kind selects the
    specific reconstructor (``F`` on Dirichlet data gives the range-condition residual).
    """

    def __init__(self, N=257, rho=1.0, center=(0.0, 0.0), formula="F", horizon="finite",
                 variant="corrected"):
        self.N = N
        self.rho = rho
        self.center = center
        self.formula = formula
        self.horizon = horizon
        self.variant = variant

    def fit(self, X=None, y=None):
        check_choice(self.formula, "formula", ("F", "G"))
        check_choice(self.horizon, "horizon", HORIZONS)
        self.grid_ = build_grid(self.N, self.rho, self.center)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        fn = RECONSTRUCTORS.get((self.formula, X.kind))
        if fn is None:
            raise InvalidArgumentError(f"formula {self.formula} is not defined for {X.kind} traces")
        return fn(X, self.grid_, self.horizon, self.variant)
