import math
import json

import numpy as np
import pytest

from patrecon.exceptions import FormatError, SupportError, UnsupportedSpecError
from patrecon.grid import build_grid
from patrecon.phantom import (Disk, Gaussian, PhantomSpec, ScalarField2D, eval_analytic,
                              eval_analytic_gradient, export_pgm, gaussian_phantom, head_phantom,
                              rasterize, read_field, to_uint8, write_field)


def test_single_gaussian_peak_at_center():
    g = build_grid(257, 1.0)
    f = rasterize(PhantomSpec((Gaussian((0.0, 0.0), 0.2, 1.0),)), g)
    assert f.data[128, 128] == 1.0
    assert np.unravel_index(np.argmax(f.data), f.data.shape) == (128, 128)


def test_empty_spec_gives_zero_field():
    f = rasterize(PhantomSpec(), build_grid(33, 1.0))
    assert not np.any(f.data)


def test_head_phantom_range_and_support():
    g = build_grid(257, 1.0)
    f = rasterize(head_phantom(), g)
    assert f.data.max() <= 1.0 and f.data.min() >= 0.0
    assert f.data.max() > 0.9
    X1, X2 = g.coordinates()
    assert not np.any(f.data[np.hypot(X1, X2) >= 0.95])
    assert np.sum(np.abs(f.data[~g.inside_mask(1.0)])) == 0.0


def test_support_violation_raises():
    spec = PhantomSpec((Disk((0.8, 0.0), 0.3, 1.0),))
    with pytest.raises(SupportError):
        rasterize(spec, build_grid(33, 1.0))


def test_eval_analytic_examples():
    spec = PhantomSpec((Gaussian((0.0, 0.0), 1.0, 1.0),))
    assert eval_analytic(spec, (0.0, 0.0)) == 1.0
    assert eval_analytic(spec, (1.0, 0.0)) == pytest.approx(math.exp(-1.0), abs=1e-15)
    s = 0.3
    pair = PhantomSpec((Gaussian((0.3, 0.0), s), Gaussian((-0.3, 0.0), s)))
    assert eval_analytic(pair, (0.0, 0.0)) == pytest.approx(2 * math.exp(-0.09 / s ** 2), rel=1e-15)
    assert eval_analytic(pair, (0.1, 0.2)) == pytest.approx(eval_analytic(pair, (-0.1, 0.2)), rel=1e-15)


def test_eval_analytic_rejects_non_gaussian():
    with pytest.raises(UnsupportedSpecError):
        eval_analytic(head_phantom(), (0.0, 0.0))


def test_gradient_matches_finite_difference():
    spec = gaussian_phantom()
    x = np.array([0.1, -0.3])
    h = 1e-6
    fd = [(eval_analytic(spec, x + h * e) - eval_analytic(spec, x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(eval_analytic_gradient(spec, x), fd, atol=1e-8)


def test_rasterize_matches_analytic():
    g = build_grid(65, 1.0)
    spec = gaussian_phantom()
    X1, X2 = g.coordinates()
    ref = eval_analytic(spec, np.stack([X1, X2], axis=-1))
    assert np.max(np.abs(rasterize(spec, g).data - ref)) < 1e-12


def test_field_round_trip(tmp_path):
    g = build_grid(17, 1.5, (0.25, -0.5))
    data = np.random.default_rng(0).normal(size=(17, 17))
    path = tmp_path / "f.f64"
    write_field(ScalarField2D(g, data), path)
    back = read_field(path)
    assert back.grid == g
    assert np.array_equal(back.data, data)


def test_corrupt_header_raises(tmp_path):
    g = build_grid(9, 1.0)
    path = tmp_path / "f.f64"
    write_field(ScalarField2D(g, np.ones((9, 9))), path)
    sidecar = next(p for p in tmp_path.iterdir() if p.suffix == ".json")
    sidecar.write_text("{not json")
    with pytest.raises(FormatError):
        read_field(path)
    sidecar.write_text(json.dumps({"kind": "field", "dtype": "<f8", "shape": [9, 9], "grid": {"N": 7}}))
    with pytest.raises(FormatError):
        read_field(path)


def test_truncated_data_raises(tmp_path):
    g = build_grid(9, 1.0)
    path = tmp_path / "f.f64"
    write_field(ScalarField2D(g, np.ones((9, 9))), path)
    with open(path, "r+b") as fh:
        fh.truncate(100)
    with pytest.raises(FormatError):
        read_field(path)


def test_constant_field_exports_uniform_gray(tmp_path):
    img = to_uint8(np.full((4, 4), 3.0))
    assert np.all(img == img.flat[0])
    path = tmp_path / "c.pgm"
    export_pgm(np.full((4, 6), 3.0), path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n6 4\n255\n")
    assert len(set(raw[len(b"P5\n6 4\n255\n"):])) == 1


def test_spec_dict_round_trip():
    spec = head_phantom()
    assert PhantomSpec.from_dict(spec.to_dict()) == spec
