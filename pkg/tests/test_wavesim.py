import math

import numpy as np
import pytest
from sklearn.base import clone

from patrecon.exceptions import GeometryMismatchError, InvalidArgumentError, PadTooSmallError
from patrecon.grid import build_detectors, build_grid, build_timegrid
from patrecon.phantom import Gaussian, PhantomSpec, ScalarField2D, gaussian_phantom, head_phantom, rasterize
from patrecon.sphmeans import oracle_traces_2d
from patrecon.wavesim import (PaddedDomain, TraceSet, WaveSimulator, add_noise, build_padded_domain,
                              combine_mixed, extract_dirichlet, extract_neumann, propagate,
                              propagate_box, read_traces, sampling_matrix, simulate, spectral_energy,
                              write_traces)


def _setup(N=33, T=2.0, dt=0.05):
    grid = build_grid(N, 1.0)
    return grid, build_detectors(1.0, (0.0, 0.0), grid.dx), build_timegrid(T, dt)


def test_padding_rule():
    for N, T in [(33, 2.0), (129, 8.0), (257, 2.0)]:
        grid = build_grid(N, 1.0)
        pad = build_padded_domain(grid, T)
        assert pad.width >= T + 2.0 + 4.0 * grid.dx
        assert pad.size % 2 == 0
        pad.check(T)


def test_pad_too_small():
    grid, geom, tg = _setup()
    pad = PaddedDomain(grid, grid.N + 2)
    with pytest.raises(PadTooSmallError):
        next(propagate(ScalarField2D(grid, np.zeros((33, 33))), pad, tg))


def test_initial_snapshot_is_phantom():
    grid, geom, tg = _setup()
    f = rasterize(gaussian_phantom(), grid)
    pad = build_padded_domain(grid, tg.T)
    t, u, grad = next(propagate(f, pad, tg))
    assert t == 0.0
    o = pad.offset
    assert np.allclose(u[o:o + grid.N, o:o + grid.N], f.data, atol=1e-14)


def test_single_mode_eigenfunction():
    grid = build_grid(17, 1.0)
    pad = PaddedDomain(grid, 32)                      # period 4 = two wavelengths of cos(pi x)
    x1 = pad.origin()[0] + grid.dx * np.arange(pad.size)
    box = np.repeat(np.cos(math.pi * x1)[:, None], pad.size, axis=1)
    for t, u, _ in propagate_box(box, pad, [0.0, 0.3, 1.7, 5.25], gradient=False):
        assert np.max(np.abs(u - box * math.cos(math.pi * t))) < 1e-10


def test_energy_conserved():
    grid = build_grid(33, 1.0)
    pad = build_padded_domain(grid, 2.0)
    box = pad.embed(rasterize(gaussian_phantom(), grid).data)
    e0 = spectral_energy(box, pad, 0.0)
    for t in (0.4, 1.3, 2.0):
        assert abs(spectral_energy(box, pad, t) - e0) < 1e-10 * e0


def test_snapshots_are_path_independent():
    grid, geom, tg = _setup()
    f = rasterize(gaussian_phantom(), grid)
    pad = build_padded_domain(grid, tg.T)
    stream = list(propagate(f, pad, tg))
    box = pad.embed(f.data)
    _, u, grad = next(propagate_box(box, pad, [tg.times[17]]))
    assert np.array_equal(u, stream[17][1])
    assert np.array_equal(grad, stream[17][2])


def test_zero_phantom_traces():
    grid, geom, tg = _setup()
    d, n = simulate(ScalarField2D(grid, np.zeros((33, 33))), geom, tg)
    assert not np.any(d.data) and not np.any(n.data)


def test_head_phantom_trace_vanishes_at_t0():
    grid, geom, tg = _setup(N=65)
    d, _ = simulate(rasterize(head_phantom(), grid), geom, build_timegrid(2.0, 0.5))
    assert np.max(np.abs(d.data[:, 0])) < 1e-6


def test_radial_phantom_rows():
    grid = build_grid(65, 1.0)
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, 0.02)
    f = rasterize(PhantomSpec((Gaussian((0.0, 0.0), 0.2),)), grid)
    d, n = simulate(f, geom, tg)
    k = np.arange(1, geom.n_phi)
    # mirror images across the first axis see the same grid values
    assert np.max(np.abs(n.data[k] - n.data[geom.n_phi - k])) < 1e-10
    assert np.max(np.abs(d.data[k] - d.data[geom.n_phi - k])) < 1e-10
    # arbitrary rows differ only by the detector interpolation error
    scale = np.max(np.abs(n.data))
    assert np.max(np.abs(n.data - n.data[0])) < 1e-3 * scale


def test_traces_match_oracle_coarse():
    grid = build_grid(129, 1.0)
    geom = build_detectors(1.0, (0.0, 0.0), grid.dx)
    tg = build_timegrid(2.0, 1e-2)
    spec = gaussian_phantom()
    d, n = simulate(rasterize(spec, grid), geom, tg)
    rows = [0, 101, 250, 402]
    for kind, tr in (("dirichlet", d), ("neumann", n)):
        ref = oracle_traces_2d(spec, geom, tg, kind, rows)
        assert np.max(np.abs(tr.data[rows] - ref)) / np.max(np.abs(ref)) < 1e-3


def test_extract_matches_simulate():
    grid, geom, tg = _setup()
    f = rasterize(gaussian_phantom(), grid)
    pad = build_padded_domain(grid, tg.T)
    d, n = simulate(f, geom, tg, pad)
    assert np.array_equal(extract_dirichlet(propagate(f, pad, tg), geom, pad, tg).data, d.data)
    assert np.array_equal(extract_neumann(propagate(f, pad, tg), geom, pad, tg).data, n.data)
    with pytest.raises(InvalidArgumentError):
        extract_neumann(propagate(f, pad, tg, gradient=False), geom, pad, tg)


def test_sampling_is_exact_for_low_order_polynomials():
    grid = build_grid(33, 1.0)
    pad = build_padded_domain(grid, 2.0)
    coords = pad.origin() + grid.dx * np.arange(pad.size)[:, None]
    X1, X2 = np.meshgrid(coords[:, 0], coords[:, 1], indexing="ij")
    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
    lin = 2.0 * X1 - X2 + 0.5
    cub = X1 ** 3 - X1 * X2 ** 2 + X2
    for method, field, fn in (("bilinear", lin, lambda p: 2 * p[:, 0] - p[:, 1] + 0.5),
                              ("cubic", cub, lambda p: p[:, 0] ** 3 - p[:, 0] * p[:, 1] ** 2 + p[:, 1])):
        S = sampling_matrix(pad, pts, method)
        assert np.allclose(S @ field.ravel(), fn(pts), atol=1e-12)


def test_detector_outside_box():
    grid = build_grid(33, 1.0)
    pad = build_padded_domain(grid, 2.0)
    with pytest.raises(GeometryMismatchError):
        sampling_matrix(pad, [[50.0, 0.0]])


def test_geometry_mismatch():
    grid, geom, tg = _setup()
    other = build_detectors(1.0, (0.1, 0.0), grid.dx)
    with pytest.raises(GeometryMismatchError):
        simulate(ScalarField2D(grid, np.zeros((33, 33))), other, tg)


@pytest.fixture(scope="module")
def pair():
    grid, geom, tg = _setup()
    return simulate(rasterize(gaussian_phantom(), grid), geom, tg)


def test_combine_mixed(pair):
    d, n = pair
    m = combine_mixed(d, n, 1.0, 0.1)
    assert m.kind == "mixed" and m.weights == (1.0, 0.1)
    assert np.array_equal(m.data, d.data + 0.1 * n.data)
    assert np.array_equal(combine_mixed(d, n, 0.0, 1.0).data, n.data)
    assert np.array_equal(combine_mixed(d, n, 1.0, 0.0).data, d.data)
    a1, b1, a2, b2 = 0.3, 1.7, -2.0, 0.25
    lhs = combine_mixed(d, n, a1 + a2, b1 + b2).data
    rhs = combine_mixed(d, n, a1, b1).data + combine_mixed(d, n, a2, b2).data
    assert np.allclose(lhs, rhs, rtol=1e-15, atol=1e-15)


def test_combine_mixed_mismatch(pair):
    d, n = pair
    with pytest.raises(GeometryMismatchError):
        combine_mixed(d, n.truncate(1.5), 1.0, 0.1)
    with pytest.raises(InvalidArgumentError):
        combine_mixed(n, d, 1.0, 0.1)


def test_noise_contract():
    geom = build_detectors(1.0, (0.0, 0.0), 2 * math.pi / 1000)
    tg = build_timegrid(1.0, 1e-3)
    data = np.sin(np.linspace(0, 20, geom.n_phi * tg.n_t)).reshape(geom.n_phi, tg.n_t) * 3.0
    tr = TraceSet(geom, tg, "dirichlet", (1.0, 0.0), data)
    assert np.array_equal(add_noise(tr, 0.0, 1).data, tr.data)
    noisy = add_noise(tr, 0.2, 42)
    std = np.std(noisy.data - tr.data)
    assert abs(std - 0.2 * 3.0) < 0.02 * 0.6
    assert np.array_equal(add_noise(tr, 0.2, 42).data, noisy.data)
    assert not np.array_equal(add_noise(tr, 0.2, 43).data, noisy.data)
    assert noisy.meta["seed"] == 42 and noisy.meta["noise"] == 0.2
    with pytest.raises(InvalidArgumentError):
        add_noise(tr, -0.1, 0)


def test_trace_file_round_trip(tmp_path, pair):
    d, n = pair
    m = add_noise(combine_mixed(d, n, 1.0, 0.1), 0.2, 5)
    write_traces(m, tmp_path / "m.f64")
    back = read_traces(tmp_path / "m.f64")
    assert back.kind == "mixed" and back.weights == (1.0, 0.1)
    assert back.geometry == m.geometry and back.timegrid == m.timegrid
    assert back.meta["seed"] == 5 and back.meta["noise"] == 0.2
    assert np.array_equal(back.data, m.data)


def test_truncate(pair):
    d, _ = pair
    short = d.truncate(1.0)
    assert short.timegrid.n_t == 21
    assert np.array_equal(short.data, d.data[:, :21])
    with pytest.raises(InvalidArgumentError):
        d.truncate(3.0)


def test_trace_is_read_only(pair):
    with pytest.raises(ValueError):
        pair[0].data[0, 0] = 1.0


def test_wave_simulator_estimator(pair):
    est = WaveSimulator(N=33, T=2.0, dt=0.05, kind="mixed", a=1.0, b=0.1)
    assert clone(est).get_params() == est.get_params()
    grid = build_grid(33, 1.0)
    out = est.fit().transform(rasterize(gaussian_phantom(), grid).data)
    d, n = pair
    assert np.allclose(out.data, d.data + 0.1 * n.data, atol=1e-15)
    with pytest.raises(GeometryMismatchError):
        est.transform(np.zeros((17, 17)))
