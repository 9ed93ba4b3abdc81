import math
import warnings
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tumormorph import contour as C
from tumormorph import nonlinear as N
from tumormorph import synth


def koch_snowflake(iterations, size=600.0):
    pts = np.array([[0.0, 0.0], [size, 0.0], [size / 2, size * math.sqrt(3) / 2]])[::-1]
    rot = np.array([[0.5, -math.sqrt(3) / 2], [math.sqrt(3) / 2, 0.5]])
    for _ in range(iterations):
        new = []
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            d = (b - a) / 3
            new += [a, a + d, a + d + rot @ d, a + 2 * d]
        pts = np.array(new)
    return pts


def circle(r, n=2000, cx=100.0, cy=100.0):
    t = np.linspace(0, 2 * math.pi, n, endpoint=False)
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])


# ----------------------------------------------------------------- box counting


def test_line_dimension():
    line = np.column_stack([np.arange(201.0), np.zeros(201)])
    assert N.box_counting_fd(line) == pytest.approx(1.0, abs=0.1)


def test_circle_dimension():
    assert 0.95 <= N.box_counting_fd(circle(80)) <= 1.15


def test_koch_dimension():
    assert N.box_counting_fd(koch_snowflake(4)) == pytest.approx(math.log(4) / math.log(3), abs=0.10)


def test_bresenham_closes_gaps():
    grid = N.rasterize_closed(np.array([[0, 0], [10, 3], [4, 9]]))
    assert grid[0, 0] and grid[3, 10] and grid[9, 4]
    # 8-connected: every occupied pixel has an occupied neighbour
    ys, xs = np.nonzero(grid)
    for y, x in zip(ys, xs):
        assert grid[max(y - 1, 0) : y + 2, max(x - 1, 0) : x + 2].sum() >= 2


@settings(max_examples=20, deadline=None)
@given(st.integers(-500, 500), st.integers(-500, 500))
def test_fd_translation_invariant(dx, dy):
    pts = circle(50)
    assert N.box_counting_fd(pts + [dx, dy]) == N.box_counting_fd(pts)


def test_fd_scaling():
    k = koch_snowflake(3, 300)
    assert abs(N.box_counting_fd(k) - N.box_counting_fd(2 * k)) < 0.05


def test_fd_too_few_scales():
    with pytest.raises(N.InsufficientDataError):
        N.box_counting_fd(circle(5))


def test_chaotic_star_fd_exceeds_ellipse():
    wins = 0
    for seed in range(100):
        fd = {}
        for kind in ("ellipse", "chaotic_star"):
            _, m, _ = synth.generate(synth.ShapeSpec(kind, 30, seed))
            fd[kind] = N.box_counting_fd(C.extract_largest_contour(m.data))
        wins += fd["chaotic_star"] > fd["ellipse"]
    assert wins >= 95


def _analytic_signal(kind, seed, n=256):
    spec = synth.ShapeSpec(kind, 30, seed)
    radius = synth._radius_fn(spec, np.random.default_rng(seed))
    th = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    r = radius(th)
    poly = C.Contour(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    return C.to_radial_signal(C.resample_closed(poly, n)).values


def test_chaotic_star_apen_exceeds_ellipse_on_analytic_boundaries():
    wins = sum(
        N.approximate_entropy(_analytic_signal("chaotic_star", s)) > N.approximate_entropy(_analytic_signal("ellipse", s))
        for s in range(100)
    )
    assert wins >= 95


# ----------------------------------------------------------------- entropies


def apen_textbook(x, m, r):
    """Pincus' definition, written with explicit loops."""
    x = list(x)
    n = len(x)
    r_abs = r * float(np.std(x))

    def phi(mm):
        templates = [x[i : i + mm] for i in range(n - mm + 1)]
        total = 0.0
        for a in templates:
            c = sum(1 for b in templates if max(abs(p - q) for p, q in zip(a, b)) <= r_abs)
            total += math.log(c / len(templates))
        return total / len(templates)

    return phi(m) - phi(m + 1)


def sampen_brute(x, m, r):
    x = list(x)
    n = len(x)
    r_abs = r * float(np.std(x))
    A = B = 0
    for i in range(n - m):
        for j in range(i + 1, n - m):
            if all(abs(x[i + k] - x[j + k]) <= r_abs for k in range(m)):
                B += 1
                if abs(x[i + m] - x[j + m]) <= r_abs:
                    A += 1
    return -math.log(A / B)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(20, 80), elements=st.floats(-3, 3)))
def test_apen_matches_textbook(x):
    if np.std(x) == 0:
        return
    assert N.approximate_entropy(x, 2, 0.2) == pytest.approx(apen_textbook(x, 2, 0.2), abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("n", [50, 120, 200])
def test_sampen_matches_brute_force(seed, n):
    x = np.random.default_rng(seed).normal(size=n)
    x[::7] = np.round(x[::7], 1)
    assert abs(N.sample_entropy(x) - sampen_brute(x, 2, 0.2)) <= 1e-12


def test_constant_series_entropies_are_zero():
    x = np.full(100, 3.0)
    assert N.approximate_entropy(x) == 0
    assert N.sample_entropy(x) == 0
    assert N.permutation_entropy(x) == 0


def test_shuffled_sine_is_less_regular():
    t = np.arange(300)
    s = np.sin(2 * math.pi * t / 25)
    shuffled = np.random.default_rng(3).permutation(s)
    assert N.approximate_entropy(shuffled) > N.approximate_entropy(s)
    assert apen_textbook(shuffled, 2, 0.2) > apen_textbook(s, 2, 0.2)


def test_square_wave_below_white_noise():
    sq = np.where((np.arange(200) // 10) % 2 == 0, 1.0, -1.0)
    noise = np.random.default_rng(4).normal(size=200)
    assert N.sample_entropy(sq) < N.sample_entropy(noise)
    assert sampen_brute(sq, 2, 0.2) < sampen_brute(noise, 2, 0.2)


def test_sampen_clamp_warns():
    x = np.random.default_rng(0).permutation(np.arange(12.0)) ** 3
    with pytest.warns(N.EntropyClampWarning):
        v = N.sample_entropy(x, 2, 0.01)
    n_t = len(x) - 2
    assert v == pytest.approx(math.log(n_t * (n_t - 1) / 2))


@pytest.mark.parametrize("a,b", [(2.0, 0.0), (-1.0, 0.0), (0.5, 0.0), (4.0, 0.0)])
def test_entropies_affine_invariant(a, b):
    x = np.random.default_rng(7).normal(size=256)
    y = a * x + b
    assert N.approximate_entropy(y) == pytest.approx(N.approximate_entropy(x), abs=1e-9)
    assert N.sample_entropy(y) == pytest.approx(N.sample_entropy(x), abs=1e-9)
    if a > 0:
        assert N.permutation_entropy(y) == pytest.approx(N.permutation_entropy(x), abs=1e-9)


def test_entropies_shift_invariant():
    x = np.round(np.random.default_rng(8).normal(size=256), 3)
    y = x + 1000.0
    assert N.approximate_entropy(y) == pytest.approx(N.approximate_entropy(x), abs=1e-9)
    assert N.sample_entropy(y) == pytest.approx(N.sample_entropy(x), abs=1e-9)
    assert N.permutation_entropy(y) == pytest.approx(N.permutation_entropy(x), abs=1e-9)


def test_perm_entropy_increasing_series():
    assert N.permutation_entropy(np.arange(50.0)) == 0


# eight distinct values whose six sliding 3-windows realize each ordinal pattern once
UNIFORM_PATTERNS = np.array([0, 1, 5, 4, 3, 7, 2, 6], float)


def test_uniform_pattern_construction():
    windows = {tuple(np.argsort(UNIFORM_PATTERNS[i : i + 3])) for i in range(6)}
    assert windows == set(permutations(range(3)))
    assert N.permutation_entropy(UNIFORM_PATTERNS) == pytest.approx(1.0, abs=1e-9)


def test_perm_entropy_random_series():
    x = np.random.default_rng(5).uniform(size=20000)
    assert N.permutation_entropy(x) > 0.99


def test_perm_entropy_ties_rank_by_position():
    # with earlier-index-ranks-lower, (2, 2, 2) and (2, 2, 5) are both the increasing pattern
    assert N.permutation_entropy(np.array([2.0, 2.0, 2.0, 5.0])) == 0


# ----------------------------------------------------------------- Lyapunov


def logistic(n=1000, x0=0.1234):
    x = np.empty(n)
    x[0] = x0
    for i in range(n - 1):
        x[i + 1] = 4 * x[i] * (1 - x[i])
    return x


def test_logistic_map_lyapunov():
    assert N.largest_lyapunov(logistic()) == pytest.approx(math.log(2), abs=0.15)


@pytest.mark.parametrize("period", [20, 37.3, 50, 100])
def test_sine_lyapunov_near_zero(period):
    assert N.largest_lyapunov(np.sin(2 * math.pi * np.arange(1000) / period)) <= 0.05


def test_constant_series_has_no_neighbours():
    with pytest.raises(N.InsufficientDataError):
        N.largest_lyapunov(np.full(200, 1.0))


def test_short_series_rejected():
    with pytest.raises(N.InsufficientDataError):
        N.largest_lyapunov(np.arange(40.0))


def test_theiler_window_excludes_temporal_neighbours():
    x = logistic(300)
    curve = N.divergence_curve(x, theiler=8)
    assert np.all(np.isfinite(curve))
    assert curve[0] < curve[5]
