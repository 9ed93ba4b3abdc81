"""Boundary extraction and the mean-normalized radial signal.

Coordinates are ``(x, y)`` = ``(column, row)`` of pixel centers, with rows
growing downward. "Counter-clockwise" means counter-clockwise as the image is
displayed, i.e. positive signed area in ``(x, -y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_POINTS = 256

_EIGHT = np.ones((3, 3), dtype=bool)

# neighbor offsets (dx, dy) in counter-clockwise display order, starting west
_CCW = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


class NoTumorError(ValueError):
    """The mask contains no foreground pixels."""


class DegenerateContourError(ValueError):
    """The boundary is too small to describe a closed curve."""


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray  # (n, 2) float, columns x, y

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("contour points must have shape (n, 2)")
        if len(pts) < 3:
            raise DegenerateContourError(f"contour needs at least 3 points, got {len(pts)}")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def perimeter(self) -> float:
        return float(np.hypot(*np.diff(np.vstack([self.points, self.points[:1]]), axis=0).T).sum())

    def signed_area(self) -> float:
        """Shoelace area in display orientation; positive for counter-clockwise."""
        x = self.points[:, 0]
        y = -self.points[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class RadialSignal:
    values: np.ndarray
    centroid: tuple
    mean_radius: float

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class GeometricFeatures:
    irregularity: float
    roughness: float
    area: int
    mean_radius: float


def largest_component(mask) -> np.ndarray:
    """Boolean mask of the largest 8-connected component.

    Ties go to the component whose first pixel in row-major order comes first.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise NoTumorError("mask has no foreground pixels")
    labels, n = ndimage.label(m, structure=_EIGHT)
    if n == 1:
        return labels == 1
    sizes = np.bincount(labels.ravel())[1:]
    # label numbers are assigned in row-major scan order, so the lowest label
    # among the largest components is the one whose first pixel comes first
    best = int(np.flatnonzero(sizes == sizes.max())[0]) + 1
    return labels == best


def trace_boundary(component) -> np.ndarray:
    """Moore-neighbor trace of a single 8-connected component.

    Starts at the topmost-then-leftmost pixel and walks counter-clockwise.
    Returns integer ``(x, y)`` pixel coordinates.
    """
    comp = np.asarray(component, dtype=bool)
    ys, xs = np.nonzero(comp)
    if len(xs) == 0:
        raise NoTumorError("mask has no foreground pixels")
    if len(xs) < 3:
        raise DegenerateContourError(f"component of {len(xs)} pixel(s) has no usable boundary")
    h, w = comp.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = comp

    start = (int(xs[0]), int(ys[0]))  # np.nonzero is row-major
    # the west neighbor of the start pixel is background by construction
    path = [start]
    cur = start
    back = 0  # index in _CCW of the background neighbor we came from
    second = None
    while True:
        cx, cy = cur
        nxt = None
        for step in range(1, 9):
            d = (back + step) % 8
            dx, dy = _CCW[d]
            if padded[cy + dy + 1, cx + dx + 1]:
                nxt = (cx + dx, cy + dy)
                # new backtrack: the neighbor scanned just before, seen from nxt
                px, py = _CCW[(d - 1) % 8]
                bx, by = cx + px - nxt[0], cy + py - nxt[1]
                back = _CCW.index((bx, by))
                break
        if nxt is None:  # isolated pixel; cannot happen for >= 3 connected pixels
            raise DegenerateContourError("isolated pixel")
        if second is None:
            second = nxt
        elif cur == start and nxt == second:
            break
        path.append(nxt)
        cur = nxt
    path.pop()  # last entry repeats the start pixel
    return np.array(path, dtype=np.int64)


def extract_largest_contour(mask) -> Contour:
    """Trace the boundary of the largest 8-connected component of ``mask``."""
    comp = largest_component(mask)
    pts = trace_boundary(comp)
    if len(pts) < 3:
        raise DegenerateContourError(f"boundary has only {len(pts)} distinct pixels")
    return Contour(pts.astype(float))


def resample_closed(contour: Contour, n: int = DEFAULT_POINTS) -> Contour:
    """``n`` points at equal arc-length spacing along the closed polyline.

    Point 0 is the contour's start point; positions between vertices are
    linearly interpolated.
    """
    if n < 8:
        raise ValueError(f"resample needs n >= 8, got {n}")
    pts = contour.points
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    total = seg.sum()
    if total <= 0:
        raise DegenerateContourError("contour has zero perimeter")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * (total / n)
    x = np.interp(targets, cum, closed[:, 0])
    y = np.interp(targets, cum, closed[:, 1])
    return Contour(np.column_stack([x, y]))


def mask_centroid(mask) -> tuple:
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if len(xs) == 0:
        raise NoTumorError("mask has no foreground pixels")
    return float(xs.mean()), float(ys.mean())


def to_radial_signal(contour: Contour, mask=None) -> RadialSignal:
    """Centroid-to-boundary distances divided by their mean.

    The centroid is the mask's pixel centroid when a mask is supplied and the
    mean of the contour points otherwise.
    """
    if mask is not None:
        cx, cy = mask_centroid(mask)
    else:
        cx, cy = (float(v) for v in contour.points.mean(axis=0))
    r = np.hypot(contour.points[:, 0] - cx, contour.points[:, 1] - cy)
    rbar = float(r.mean())
    if rbar == 0.0:
        raise DegenerateContourError("mean radius is zero")
    if np.any(r == 0.0):
        raise DegenerateContourError("centroid lies on the boundary")
    return RadialSignal(values=r / rbar, centroid=(cx, cy), mean_radius=rbar)


def irregularity(values) -> float:
    """Population standard deviation of a normalized signal."""
    return float(np.std(np.asarray(values, dtype=float)))


def roughness(values) -> float:
    """Closed-loop sum of absolute consecutive differences."""
    s = np.asarray(values, dtype=float)
    return float(np.abs(np.roll(s, -1) - s).sum())


def geometric_features(signal: RadialSignal, mask) -> GeometricFeatures:
    return GeometricFeatures(
        irregularity=irregularity(signal.values),
        roughness=roughness(signal.values),
        area=int(np.count_nonzero(np.asarray(mask, dtype=bool))),
        mean_radius=signal.mean_radius,
    )
