import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from tumormorph import contour as C
from tumormorph import synth

from conftest import disk


def _square_mask(size=5, pad=0):
    m = np.zeros((size + 2 * pad, size + 2 * pad), bool)
    m[pad : pad + size, pad : pad + size] = True
    return m


def test_square_trace_by_hand():
    pts = C.trace_boundary(_square_mask(5)).tolist()
    expected = [
        [0, 0], [0, 1], [0, 2], [0, 3], [0, 4],
        [1, 4], [2, 4], [3, 4], [4, 4],
        [4, 3], [4, 2], [4, 1], [4, 0],
        [3, 0], [2, 0], [1, 0],
    ]
    assert pts == expected


def test_trace_is_counter_clockwise():
    c = C.extract_largest_contour(disk((60, 60), 30, 30, 20))
    assert c.signed_area() > 0


def _four_boundary(mask):
    return mask & ~ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1), border_value=0)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(4, 20), st.floats(4, 20), st.floats(0, math.pi), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)
)
def test_trace_visits_exactly_the_boundary_of_convex_shapes(a, b, ang, ox, oy):
    yy, xx = np.mgrid[0:50, 0:50].astype(float)
    dx, dy = xx - 25 - ox, yy - 25 - oy
    u = dx * math.cos(ang) + dy * math.sin(ang)
    v = -dx * math.sin(ang) + dy * math.cos(ang)
    m = (u / a) ** 2 + (v / b) ** 2 <= 1
    m = C.largest_component(m)
    pts = C.trace_boundary(m)
    ys, xs = np.nonzero(_four_boundary(m))
    assert set(map(tuple, pts.tolist())) == set(zip(xs.tolist(), ys.tolist()))
    # consecutive points are 8-neighbours, including the closing step
    steps = np.abs(np.diff(np.vstack([pts, pts[:1]]), axis=0))
    assert steps.max() == 1 and np.all(steps.sum(axis=1) >= 1)


def test_largest_component_selected():
    m = np.zeros((30, 30), bool)
    m[2:7, 2:10] = True  # 40 px
    m[20:27, 20] = True  # 7 px
    c = C.extract_largest_contour(m)
    assert c.points[:, 1].max() <= 6


def test_empty_and_degenerate_masks():
    with pytest.raises(C.NoTumorError):
        C.extract_largest_contour(np.zeros((5, 5), bool))
    m = np.zeros((5, 5), bool)
    m[2, 2:4] = True
    with pytest.raises(C.DegenerateContourError):
        C.extract_largest_contour(m)


def test_resample_square_perimeter_40():
    sq = C.Contour(np.array([[0, 0], [0, 10], [10, 10], [10, 0]], float))
    r = C.resample_closed(sq, 8)
    np.testing.assert_allclose(
        r.points, [[0, 0], [0, 5], [0, 10], [5, 10], [10, 10], [10, 5], [10, 0], [5, 0]], atol=1e-12
    )
    gaps = np.abs(np.diff(np.vstack([r.points, r.points[:1]]), axis=0)).sum(axis=1)
    np.testing.assert_allclose(gaps, 5.0)


@pytest.mark.parametrize("k", [8, 12, 16, 32])
def test_resample_regular_polygon_identity(k):
    t = 2 * math.pi * np.arange(k) / k
    poly = C.Contour(np.column_stack([np.cos(t), np.sin(t)]) * 17.0)
    np.testing.assert_allclose(C.resample_closed(poly, k).points, poly.points, atol=1e-9)


@pytest.mark.parametrize("k,mult", [(4, 10), (6, 4), (8, 8)])
def test_resample_idempotent_when_corners_are_sampled(k, mult):
    t = 2 * math.pi * np.arange(k) / k
    poly = C.Contour(np.column_stack([np.cos(t), np.sin(t)]) * 11.0)
    once = C.resample_closed(poly, k * mult)
    twice = C.resample_closed(once, k * mult)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-6)


def test_resample_rejects_small_n():
    with pytest.raises(ValueError):
        C.resample_closed(C.Contour(np.eye(3, 2)), 7)


def test_default_point_count():
    assert C.DEFAULT_POINTS == 256


def _signal(mask, n=256):
    comp = C.largest_component(mask)
    c = C.Contour(C.trace_boundary(comp).astype(float))
    return C.to_radial_signal(C.resample_closed(c, n), comp)


def test_circle_radius_40_is_nearly_constant():
    s = _signal(disk((101, 101), 50, 50, 40)).values
    assert s.std() <= 0.01
    # +-0.5 px pixel-centre scatter on a 40 px radius bounds the band at about +-1.3%
    assert 0.985 <= s.min() and s.max() <= 1.015


def test_ellipse_two_to_one_radius_ratio():
    yy, xx = np.mgrid[0:140, 0:140]
    m = ((xx - 70) / 60.0) ** 2 + ((yy - 70) / 30.0) ** 2 <= 1
    s = _signal(m).values
    assert abs(s.max() / s.min() - 2.0) / 2.0 < 0.05


def test_alternating_signal_closed_form():
    s = np.tile([0.9, 1.1], 128)
    assert C.irregularity(s) == pytest.approx(0.1, abs=1e-12)
    assert C.roughness(s) == pytest.approx(51.2, abs=1e-9)


def test_constant_signal_is_smooth():
    s = np.ones(256)
    assert C.irregularity(s) == 0 and C.roughness(s) == 0


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(synth.KINDS), st.integers(0, 10_000), st.floats(12, 35))
def test_radial_signal_has_unit_mean(kind, seed, size):
    _, t, _ = synth.generate(synth.ShapeSpec(kind, size, seed))
    s = _signal(t.data)
    assert abs(s.values.mean() - 1.0) < 1e-9


@pytest.mark.parametrize("kind", synth.KINDS)
def test_scale_two_changes_irregularity_little(kind):
    _, t, _ = synth.generate(synth.ShapeSpec(kind, 25, 4))
    m = t.data
    big = np.repeat(np.repeat(m, 2, axis=0), 2, axis=1)
    assert abs(C.irregularity(_signal(m).values) - C.irregularity(_signal(big).values)) < 0.02


def _rot_points(pts, width):
    # np.rot90(k=1) maps pixel (x, y) to (y, width - 1 - x)
    return np.column_stack([pts[:, 1], width - 1 - pts[:, 0]])


@pytest.mark.parametrize("kind", synth.KINDS)
def test_rotation_equivariance(kind):
    _, t, _ = synth.generate(synth.ShapeSpec(kind, 30, 3))
    m = C.largest_component(t.data)
    base = C.trace_boundary(m)
    rotated = C.trace_boundary(np.rot90(m))
    mapped = _rot_points(base, m.shape[1])
    # same closed polygon, only the start pixel moves
    shift = int(np.flatnonzero((mapped == rotated[0]).all(axis=1))[0])
    np.testing.assert_array_equal(np.roll(mapped, -shift, axis=0), rotated)
    # features move only through the resampling phase
    s0, s1 = _signal(m).values, _signal(np.rot90(m)).values
    assert abs(C.irregularity(s0) - C.irregularity(s1)) < 1e-3
    assert abs(C.roughness(s0) - C.roughness(s1)) / C.roughness(s0) < 0.03
