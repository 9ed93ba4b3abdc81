"""Chaotic descriptors of a boundary: fractal dimension, entropies, Lyapunov exponent."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    pass


class EntropyClampWarning(RuntimeWarning):
    """Sample entropy hit a zero match count and was clamped to a finite bound."""


@dataclass(frozen=True)
class ChaoticFeatures:
    fractal_dimension: float
    approx_entropy: float
    sample_entropy: float
    perm_entropy: float
    lyapunov: float


# ---------------------------------------------------------------------------
# box counting


def _bresenham(x0, y0, x1, y1):
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return out
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize_closed(points) -> np.ndarray:
    """Occupied pixels of a closed polyline, shifted so the bounding box starts at 0."""
    pts = np.rint(np.asarray(points, dtype=float)).astype(np.int64)
    pts -= pts.min(axis=0)
    w, h = pts.max(axis=0) + 1
    grid = np.zeros((h, w), dtype=bool)
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        for x, y in _bresenham(int(x0), int(y0), int(x1), int(y1)):
            grid[y, x] = True
    return grid


def box_counts(grid: np.ndarray, sizes) -> np.ndarray:
    ys, xs = np.nonzero(grid)
    counts = []
    for eps in sizes:
        cells = (ys // eps) * (grid.shape[1] // eps + 1) + xs // eps
        counts.append(len(np.unique(cells)))
    return np.array(counts)


def box_counting_fd(contour) -> float:
    """Box-counting dimension of the rasterized closed contour.

    Box sizes are powers of two from 2 up to a quarter of the larger
    bounding-box side; the estimate is the least-squares slope of
    ``log N(eps)`` against ``log(1/eps)``.
    """
    pts = np.asarray(getattr(contour, "points", contour), dtype=float)
    if len(pts) < 8:
        raise InsufficientDataError(f"need at least 8 contour points, got {len(pts)}")
    grid = rasterize_closed(pts)
    limit = max(grid.shape) / 4
    sizes = []
    eps = 2
    while eps <= limit:
        sizes.append(eps)
        eps *= 2
    if len(sizes) < 3:
        raise InsufficientDataError(
            f"bounding box {grid.shape[1]}x{grid.shape[0]} gives only {len(sizes)} box sizes; need 3"
        )
    counts = box_counts(grid, sizes)
    slope = np.polyfit(np.log(1.0 / np.array(sizes, dtype=float)), np.log(counts), 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# template-matching entropies


def _tolerance(x, r):
    return r * float(np.std(x))


def _match_counts(x, m, r_abs):
    """Per-template match counts (self-matches included) for length-``m`` templates.

    Works lag by lag: template ``i`` matches ``i + k`` when ``m`` consecutive
    element differences at lag ``k`` are within ``r_abs``.
    """
    n = len(x) - m + 1
    counts = np.ones(n, dtype=np.int64)
    for k in range(1, n):
        close = np.abs(x[: len(x) - k] - x[k:]) <= r_abs
        run = np.convolve(close.astype(np.int64), np.ones(m, dtype=np.int64), mode="valid")
        hit = run[: n - k] == m
        counts[: n - k] += hit
        counts[k:] += hit
    return counts


def approximate_entropy(series, m: int = 2, r: float = 0.2) -> float:
    """ApEn = Phi^m - Phi^{m+1}, self-matches included, Chebyshev distance.

    ``r`` is a fraction of the series' standard deviation.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 3 * m:
        raise InsufficientDataError(f"series of length {len(x)} too short for m={m}")
    r_abs = _tolerance(x, r)
    if r_abs == 0:
        return 0.0

    def phi(mm):
        c = _match_counts(x, mm, r_abs) / (len(x) - mm + 1)
        return float(np.mean(np.log(c)))

    return phi(m) - phi(m + 1)


def sample_match_pairs(x, m, r_abs):
    """Counts ``(B, A)`` of distinct template pairs matching at lengths m and m+1.

    Only the first ``N - m`` templates are used at both lengths.
    """
    n_t = len(x) - m
    B = A = 0
    for k in range(1, n_t):
        close = (np.abs(x[: len(x) - k] - x[k:]) <= r_abs).astype(np.int64)
        run_m = np.convolve(close, np.ones(m, dtype=np.int64), mode="valid")[: n_t - k]
        run_m1 = np.convolve(close, np.ones(m + 1, dtype=np.int64), mode="valid")[: n_t - k]
        B += int(np.count_nonzero(run_m == m))
        A += int(np.count_nonzero(run_m1 == m + 1))
    return B, A


def sample_entropy(series, m: int = 2, r: float = 0.2) -> float:
    """SampEn = -ln(A/B), self-matches excluded.

    Zero match counts make the statistic infinite; it is then clamped to
    ``ln(number of template pairs)`` and an :class:`EntropyClampWarning` is
    issued.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 3 * m:
        raise InsufficientDataError(f"series of length {len(x)} too short for m={m}")
    r_abs = _tolerance(x, r)
    if r_abs == 0:
        return 0.0
    B, A = sample_match_pairs(x, m, r_abs)
    if A == 0 or B == 0:
        n_t = len(x) - m
        pairs = n_t * (n_t - 1) // 2
        warnings.warn(f"sample entropy undefined (A={A}, B={B}); clamped", EntropyClampWarning, stacklevel=2)
        return math.log(pairs)
    return -math.log(A / B)


def permutation_entropy(series, order: int = 3, delay: int = 1) -> float:
    """Normalized Shannon entropy of ordinal patterns; equal values rank by position."""
    x = np.asarray(series, dtype=float)
    if order < 2 or delay < 1:
        raise ValueError("order must be >= 2 and delay >= 1")
    if len(x) < order * delay + 1:
        raise InsufficientDataError(f"series of length {len(x)} too short for order={order}, delay={delay}")
    n = len(x) - (order - 1) * delay
    idx = np.arange(n)[:, None] + delay * np.arange(order)[None, :]
    patterns = np.argsort(x[idx], axis=1, kind="stable")
    codes = patterns @ (order ** np.arange(order))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / n
    return float(-(p * np.log(p)).sum() / math.log(math.factorial(order)))


# ---------------------------------------------------------------------------
# Lyapunov


def delay_embed(x, dim, tau):
    n = len(x) - (dim - 1) * tau
    return np.column_stack([x[i * tau : i * tau + n] for i in range(dim)])


def divergence_curve(series, dim: int = 3, tau: int = 1, theiler: int = 8, steps: int = 12):
    """Mean log distance between initially-nearest embedded neighbors.

    Neighbors closer in time than ``theiler`` samples, and points that are
    numerically indistinguishable (distance <= 1e-9 times the series scale),
    are not eligible. Returns the curve for steps ``0..steps``.
    """
    x = np.asarray(series, dtype=float)
    Y = delay_embed(x, dim, tau)
    M = len(Y)
    usable = M - steps  # points whose trajectory can be followed for `steps`
    if usable < 2:
        raise InsufficientDataError("series too short for the divergence horizon")
    P = Y[:usable]
    d = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=-1))
    ii = np.arange(usable)
    d[np.abs(ii[:, None] - ii[None, :]) <= theiler] = np.inf
    d[d <= 1e-9 * max(float(np.std(x)), float(np.abs(x).max()), 1e-300)] = np.inf
    nn = np.argmin(d, axis=1)
    valid = np.isfinite(d[ii, nn])
    if not valid.any():
        raise InsufficientDataError("no valid nearest-neighbor pairs")
    i0, j0 = ii[valid], nn[valid]
    curve = np.empty(steps + 1)
    for k in range(steps + 1):
        dk = np.linalg.norm(Y[i0 + k] - Y[j0 + k], axis=1)
        dk = dk[dk > 0]
        curve[k] = np.log(dk).mean() if len(dk) else -np.inf
    return curve


def largest_lyapunov(
    series, dim: int = 3, tau: int = 1, theiler: int = 8, steps: int = 12, fit: tuple = (1, 8)
) -> float:
    """Rosenstein estimate: slope of the mean log-divergence curve over ``fit`` steps."""
    x = np.asarray(series, dtype=float)
    if len(x) < 64:
        raise InsufficientDataError(f"need at least 64 samples, got {len(x)}")
    curve = divergence_curve(x, dim, tau, theiler, steps)
    k = np.arange(fit[0], fit[1] + 1)
    y = curve[k]
    if not np.all(np.isfinite(y)):
        raise InsufficientDataError("divergence curve has empty steps in the fit window")
    return float(np.polyfit(k, y, 1)[0])


def chaotic_features(contour, signal, m=2, r=0.2, order=3, delay=1, lyap=None) -> ChaoticFeatures:
    s = np.asarray(getattr(signal, "values", signal), dtype=float)
    return ChaoticFeatures(
        fractal_dimension=box_counting_fd(contour),
        approx_entropy=approximate_entropy(s, m, r),
        sample_entropy=sample_entropy(s, m, r),
        perm_entropy=permutation_entropy(s, order, delay),
        lyapunov=largest_lyapunov(s, **(lyap or {})),
    )
