import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxbridge.planner import PathPolyline
from voxbridge.smoothing import (SmoothingConfig, curve_length, fit_spline, resample_macro,
                                 smooth_path, subdivide_micro)


def line(length, n):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return t * np.array([[length, 0.0, 0.0]])


def random_polyline(rng, n=10, step=0.1):
    return np.cumsum(np.vstack([np.zeros(3), rng.normal(size=(n - 1, 3)) * step]), axis=0)


def test_config_validation():
    with pytest.raises(ValueError):
        SmoothingConfig(s_macro=0.001, d_max=0.002)
    with pytest.raises(ValueError):
        SmoothingConfig(d_max=0.0)


def test_spline_interpolates_knots():
    rng = np.random.default_rng(30)
    pts = random_polyline(rng)
    c = fit_spline(pts)
    np.testing.assert_allclose(c(np.arange(10) / 9), pts, atol=1e-12)


def test_collinear_points_give_straight_line():
    c = fit_spline(line(0.3, 6))
    y = c(np.linspace(0, 1, 301))
    assert np.abs(y[:, 1:]).max() < 1e-12
    np.testing.assert_allclose(y[:, 0], np.linspace(0, 0.3, 301), atol=1e-12)


def test_natural_boundary_and_c2_continuity():
    rng = np.random.default_rng(31)
    pts = random_polyline(rng)
    c = fit_spline(pts)
    d2 = c.derivative(2)
    np.testing.assert_allclose(d2(0.0), 0.0, atol=1e-9)
    np.testing.assert_allclose(d2(1.0), 0.0, atol=1e-9)
    h = 1e-9
    for k in range(1, 9):
        t = k / 9
        assert np.abs(d2(t + h) - d2(t - h)).max() < 1e-6
        # one-sided finite differences of x'' agree across the knot
        d1 = c.derivative(1)
        left = (d1(t) - d1(t - 1e-5)) / 1e-5
        right = (d1(t + 1e-5) - d1(t)) / 1e-5
        assert np.abs(left - right).max() < 1e-2 * max(1.0, np.abs(d2(t)).max())


def test_two_and_three_point_fits():
    c2 = fit_spline(np.array([[0, 0, 0], [0.1, 0.0, 0.0]]))
    np.testing.assert_allclose(c2(0.5), [0.05, 0, 0], atol=1e-15)
    c3 = fit_spline(np.array([[0, 0, 0], [0.1, 0.1, 0], [0.2, 0.0, 0]]))
    np.testing.assert_allclose(c3(0.5), [0.1, 0.1, 0], atol=1e-15)


def test_fit_needs_two_distinct_points():
    with pytest.raises(ValueError):
        fit_spline(np.array([[0.1, 0.2, 0.3]]))
    with pytest.raises(ValueError):
        fit_spline(np.array([[0.1, 0.2, 0.3]] * 3))


def test_duplicates_are_merged():
    pts = np.array([[0, 0, 0], [0, 0, 0], [0.1, 0, 0], [0.2, 0, 0]])
    c = fit_spline(pts)
    assert len(c.points) == 3


def test_macro_count_examples():
    cfg = SmoothingConfig()
    assert len(resample_macro(fit_spline(line(0.0498, 2)), cfg)) == 11
    assert len(resample_macro(fit_spline(line(0.050, 2)), cfg)) == 11
    assert len(resample_macro(fit_spline(line(0.0501, 2)), cfg)) == 12


def test_macro_endpoints_exact():
    rng = np.random.default_rng(32)
    pts = random_polyline(rng)
    macro = resample_macro(fit_spline(pts))
    np.testing.assert_array_equal(macro[0], pts[0])
    np.testing.assert_array_equal(macro[-1], pts[-1])


def test_curve_length_of_quarter_circle():
    th = np.linspace(0, math.pi / 2, 30)
    pts = np.c_[np.cos(th), np.sin(th), np.zeros_like(th)]
    assert curve_length(fit_spline(pts), 4000) == pytest.approx(math.pi / 2, rel=1e-4)


def test_subdivide_examples():
    out = subdivide_micro(np.array([[0, 0, 0], [0.0025, 0, 0]]), 0.001)
    assert len(out) == 4
    np.testing.assert_allclose(np.diff(out[:, 0]), 0.0025 / 3)
    tight = np.array([[0, 0, 0], [0.0005, 0, 0], [0.001, 0, 0]])
    np.testing.assert_array_equal(subdivide_micro(tight, 0.001), tight)
    with pytest.raises(ValueError):
        subdivide_micro(tight, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.floats(1e-4, 0.01), st.integers(0, 2**32 - 1))
def test_micro_gap_bound_and_refinement(n, d_max, seed):
    rng = np.random.default_rng(seed)
    macro = random_polyline(rng, n, step=0.01)
    micro = subdivide_micro(macro, d_max)
    gaps = np.linalg.norm(np.diff(micro, axis=0), axis=1)
    assert gaps.max() <= d_max
    np.testing.assert_array_equal(micro[0], macro[0])
    np.testing.assert_array_equal(micro[-1], macro[-1])
    finer = subdivide_micro(macro, d_max / 2)
    assert np.linalg.norm(np.diff(finer, axis=0), axis=1).max() <= gaps.max()


def test_smooth_path_chain():
    rng = np.random.default_rng(33)
    v = rng.choice([-1, 0, 1], size=(40, 3))
    v = v[np.abs(v).sum(axis=1) > 0][:9]
    # uniform 0.1 m steps, like an improved-planner polyline
    pts = np.vstack([np.zeros(3), np.cumsum(0.1 * v / np.linalg.norm(v, axis=1, keepdims=True), axis=0)])
    ref = smooth_path(PathPolyline(points=pts, success=True))
    assert np.linalg.norm(ref.micro[0] - pts[0]) < 1e-9
    assert np.linalg.norm(ref.micro[-1] - pts[-1]) < 1e-9
    assert np.linalg.norm(np.diff(ref.micro, axis=0), axis=1).max() <= 0.001
    gaps = np.linalg.norm(np.diff(ref.macro, axis=0), axis=1)
    assert ref.total_length == pytest.approx(gaps.sum())
    assert ref.digest() == smooth_path(PathPolyline(points=pts.copy(), success=True)).digest()
