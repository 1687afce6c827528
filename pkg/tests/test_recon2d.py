import math

import numpy as np
import pytest
from sklearn.base import clone

from patrecon.exceptions import GeometryMismatchError, InvalidArgumentError
from patrecon.grid import build_detectors, build_grid, build_timegrid
from patrecon.phantom import Gaussian, PhantomSpec, ScalarField2D, rasterize
from patrecon.recon2d import (CSV_COLUMNS, FilteredBackprojection, backproject, l2_error, range_condition_residual,
                              reconstruct_dirichlet, reconstruct_mixed, reconstruct_neumann, relative_l2,
                              write_error_csv, write_reconstruction)
from patrecon.phantom import read_field
from patrecon.wavesim import TraceSet, combine_mixed, simulate

RECONS = [(reconstruct_neumann, "n"), (reconstruct_dirichlet, "d"), (range_condition_residual, "d")]


def _zero(trace):
    return trace.with_data(np.zeros_like(trace.data))


@pytest.mark.parametrize("horizon", ["finite", "infinite"])
def test_zero_trace_gives_zero_field(small_setup, horizon):
    s = small_setup
    for fn, key in RECONS:
        assert not np.any(fn(_zero(s[key]), s["grid"], horizon).data)
    m = combine_mixed(_zero(s["d"]), _zero(s["n"]), 1.0, 0.1)
    assert not np.any(reconstruct_mixed(m, s["grid"], horizon).data)


def test_provenance(small_setup):
    s = small_setup
    r = reconstruct_neumann(s["n"], s["grid"])
    p = r.provenance
    assert (p["formula"], p["horizon"], p["kind"], p["T"], p["dt"]) == ("F", "finite", "neumann", 2.0, 4e-3)
    assert p["kernel"] == "corrected" and "noise" in p and "weights" in p
    assert r.grid == s["grid"]
    assert "kernel" not in reconstruct_neumann(s["n"], s["grid"], "infinite").provenance


def test_short_horizon_rejected(small_setup):
    s = small_setup
    short = s["n"].truncate(1.5)
    with pytest.raises(InvalidArgumentError):
        reconstruct_neumann(short, s["grid"], "finite")
    reconstruct_neumann(short, s["grid"], "infinite")


def test_kind_mismatch(small_setup):
    s = small_setup
    with pytest.raises(InvalidArgumentError):
        reconstruct_neumann(s["d"], s["grid"])
    with pytest.raises(InvalidArgumentError):
        reconstruct_dirichlet(s["n"], s["grid"])
    with pytest.raises(InvalidArgumentError):
        reconstruct_mixed(s["n"], s["grid"])


def test_mixed_needs_b(small_setup):
    s = small_setup
    with pytest.raises(InvalidArgumentError):
        reconstruct_mixed(combine_mixed(s["d"], s["n"], 1.0, 0.0), s["grid"])


def test_grid_mismatch(small_setup):
    s = small_setup
    with pytest.raises(GeometryMismatchError):
        reconstruct_neumann(s["n"], build_grid(65, 1.0, (0.2, 0.0)))
    with pytest.raises(GeometryMismatchError):
        reconstruct_neumann(s["n"], build_grid(65, 1.5))


@pytest.mark.parametrize("horizon", ["finite", "infinite"])
def test_mixed_with_pure_neumann_weights(small_setup, horizon):
    s = small_setup
    m = combine_mixed(s["d"], s["n"], 0.0, 1.0)
    assert np.array_equal(reconstruct_mixed(m, s["grid"], horizon).data,
                          reconstruct_neumann(s["n"], s["grid"], horizon).data)


@pytest.mark.parametrize("horizon", ["finite", "infinite"])
def test_mixed_a_dependence_is_range_residual(small_setup, horizon):
    s = small_setup
    g = s["grid"]
    r1 = reconstruct_mixed(combine_mixed(s["d"], s["n"], 1.0, 0.1), g, horizon).data
    r2 = reconstruct_mixed(combine_mixed(s["d"], s["n"], 2.0, 0.1), g, horizon).data
    r0 = reconstruct_mixed(combine_mixed(s["d"], s["n"], 0.0, 0.1), g, horizon).data
    res = range_condition_residual(s["d"], g, horizon).data
    scale = np.max(np.abs(res))
    assert np.max(np.abs((r1 - r2) - (1 - 2) / 0.1 * res)) < 1e-10 * scale / 0.1
    assert np.max(np.abs((r1 - r0) - 1 / 0.1 * res)) < 1e-10 * scale / 0.1


@pytest.mark.parametrize("fn,key", RECONS)
def test_linearity(small_setup, fn, key):
    s = small_setup
    tr = s[key]
    other = tr.with_data(np.roll(tr.data, 11, axis=0))
    alpha, beta = 1.7, -0.4
    combo = fn(tr.with_data(alpha * tr.data + beta * other.data), s["grid"]).data
    sep = alpha * fn(tr, s["grid"]).data + beta * fn(other, s["grid"]).data
    assert np.max(np.abs(combo - sep)) <= 1e-12 * np.max(np.abs(sep))


def test_rotational_equivariance():
    grid = build_grid(129, 1.0)
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, 4e-3)
    c = np.array([0.3, 0.1])
    p = geom.angular_step
    rot = np.array([[math.cos(p), -math.sin(p)], [math.sin(p), math.cos(p)]])
    _, n = simulate(rasterize(PhantomSpec((Gaussian(tuple(c), 0.15),)), grid), geom, tg)
    _, n_rot = simulate(rasterize(PhantomSpec((Gaussian(tuple(rot @ c), 0.15),)), grid), geom, tg)
    # detector k + 1 sees the turned phantom as detector k sees the original
    rec = reconstruct_neumann(n, grid).data
    rec_back = reconstruct_neumann(n_rot.with_data(np.roll(n_rot.data, -1, axis=0)), grid).data
    assert np.max(np.abs(rec_back - rec)) < 1e-2 * np.max(np.abs(rec))


def test_backproject_clamps_and_counts():
    grid = build_grid(9, 1.0)
    geom = build_detectors(1.0, (0.0, 0.0), 0.5)
    tg = build_timegrid(2.0, 0.5)
    Q = np.ones((geom.n_phi, tg.n_t - 1))
    img, clamped = backproject(Q, geom, grid, tg)
    assert clamped > 0
    assert np.allclose(img, geom.n_phi)
    with pytest.raises(GeometryMismatchError):
        backproject(np.ones((geom.n_phi, tg.n_t)), geom, grid, tg)


def test_l2_error_examples():
    grid = build_grid(513, 1.0)
    ref = ScalarField2D(grid, np.zeros((513, 513)))
    assert l2_error(ref, ref) == 0.0
    one = ScalarField2D(grid, np.ones((513, 513)))
    assert l2_error(one, ref) == pytest.approx(math.sqrt(math.pi), rel=1e-3)
    mask_count = grid.inside_mask().sum()
    assert l2_error(one, ref) == pytest.approx(math.sqrt(mask_count) * grid.dx, rel=1e-14)
    with pytest.raises(GeometryMismatchError):
        l2_error(one, ScalarField2D(build_grid(9, 1.0), np.zeros((9, 9))))


def test_relative_l2(small_setup):
    f = small_setup["field"]
    assert relative_l2(f, f) == 0.0
    assert relative_l2(ScalarField2D(f.grid, 2 * f.data), f) == pytest.approx(1.0, rel=1e-12)


def test_background_finite_below_infinite(small_setup):
    s = small_setup
    g = s["grid"]
    outside = g.inside_mask(0.95) & (s["field"].data < 1e-6)
    fin = np.median(np.abs(reconstruct_neumann(s["n"], g, "finite").data[outside]))
    inf = np.median(np.abs(reconstruct_neumann(s["n"], g, "infinite").data[outside]))
    assert fin < inf


def test_csv_and_field_output(tmp_path, small_setup):
    s = small_setup
    rec = reconstruct_neumann(s["n"], s["grid"])
    write_reconstruction(rec, tmp_path / "r.f64")
    assert np.array_equal(read_field(tmp_path / "r.f64").data, rec.data)
    row = {"formula": "F", "horizon": "finite", "kind": "neumann", "noise": 0.0, "T": 2.0, "dt": 1e-3, "L2": 0.1}
    write_error_csv([row], tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "F,finite,neumann,0.0,2.0,0.001,0.1"


def test_estimator(small_setup):
    s = small_setup
    est = FilteredBackprojection(N=65, formula="G", horizon="finite")
    assert clone(est).get_params() == est.get_params()
    out = est.fit().transform(s["d"])
    assert np.array_equal(out.data, reconstruct_dirichlet(s["d"], s["grid"]).data)
    with pytest.raises(InvalidArgumentError):
        est.transform(s["n"])
    with pytest.raises(InvalidArgumentError):
        FilteredBackprojection(horizon="forever").fit()
