"""Radiological biomarkers from a tumor mask and its intensity image."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

REI_EPSILON = 1e-6
CORE_FRACTION = 0.3
CONTACT_PX = 2.0

_EIGHT = np.ones((3, 3), dtype=bool)
_CROSS = ndimage.generate_binary_structure(2, 1)


class BiomarkerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BrainRegion:
    mask: np.ndarray
    bbox: tuple  # (xmin, ymin, xmax, ymax), inclusive
    midline_x: float

    @property
    def width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1


@dataclass(frozen=True)
class ClinicalFeatures:
    rei: float
    d_skull: float
    contact_ratio: float
    mls: float | None
    rei_degenerate: bool = False


def otsu_threshold(pixels) -> int:
    """Otsu's threshold on 8-bit intensities; foreground is ``value > threshold``."""
    hist = np.bincount(np.asarray(pixels, dtype=np.uint8).ravel(), minlength=256).astype(float)
    total = hist.sum()
    levels = np.arange(256)
    w0 = np.cumsum(hist)
    w1 = total - w0
    s0 = np.cumsum(hist * levels)
    mu_t = s0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * w0 - s0 * total) ** 2 / (w0 * w1)
    between[(w0 == 0) | (w1 == 0)] = -1.0
    return int(np.argmax(between))


def _boundary(mask):
    """Region pixels with at least one 4-neighbor outside (image edge counts as outside)."""
    m = np.asarray(mask, dtype=bool)
    return m & ~ndimage.binary_erosion(m, structure=_CROSS, border_value=0)


def estimate_brain_region(image, tumor) -> BrainRegion:
    """Otsu foreground, largest 8-connected component, union with tumor, holes filled."""
    img = np.asarray(image)
    t = np.asarray(tumor, dtype=bool)
    if img.shape != t.shape:
        raise BiomarkerError(f"image shape {img.shape} != tumor mask shape {t.shape}")
    thr = otsu_threshold(img)
    fg = img > thr
    if not fg.any():
        raise BiomarkerError("no foreground above the Otsu threshold")
    labels, n = ndimage.label(fg, structure=_EIGHT)
    sizes = np.bincount(labels.ravel())[1:]
    brain = labels == (int(np.argmax(sizes)) + 1)
    brain = ndimage.binary_fill_holes(brain | t)
    ys, xs = np.nonzero(brain)
    bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return BrainRegion(brain, bbox, (bbox[0] + bbox[2]) / 2.0)


def core_and_ring(tumor):
    """Split the tumor into core (eroded ``k`` times) and the surrounding ring.

    ``k = max(1, round(0.3 * sqrt(area / pi)))``, reduced while erosion would
    empty the core. Returns ``(core, ring)`` or ``None`` when even one
    erosion leaves nothing.
    """
    t = np.asarray(tumor, dtype=bool)
    area = int(t.sum())
    if area == 0:
        raise BiomarkerError("empty tumor mask")
    k = max(1, round(CORE_FRACTION * math.sqrt(area / math.pi)))
    while k >= 1:
        core = ndimage.binary_erosion(t, structure=_EIGHT, iterations=k, border_value=0)
        if core.any():
            return core, t & ~core
        k -= 1
    return None


def ring_enhancement_index(image, tumor, eps: float = REI_EPSILON):
    """``(mu_ring - mu_core) / (mu_core + eps)``.

    Returns ``(rei, degenerate)``; tumors too thin to have a core give
    ``(0.0, True)``.
    """
    img = np.asarray(image, dtype=float)
    parts = core_and_ring(tumor)
    if parts is None:
        return 0.0, True
    core, ring = parts
    mu_core = float(img[core].mean())
    mu_ring = float(img[ring].mean())
    return (mu_ring - mu_core) / (mu_core + eps), False


def skull_distance(tumor, brain: BrainRegion, contact_px: float = CONTACT_PX):
    """Minimum tumor-boundary to brain-boundary distance, and the contact ratio.

    The contact ratio is the fraction of tumor boundary pixels within
    ``contact_px`` of the brain boundary.
    """
    t = np.asarray(tumor, dtype=bool)
    if not t.any():
        raise BiomarkerError("empty tumor mask")
    tb = _boundary(t)
    sb = _boundary(brain.mask)
    if not sb.any():
        raise BiomarkerError("brain mask has no boundary")
    dist = ndimage.distance_transform_edt(~sb)
    d = dist[tb]
    return float(d.min()), float(np.mean(d <= contact_px))


def midline_shift(tumor, brain: BrainRegion, orientation: str):
    """Midline shift in percent of brain width; ``None`` unless axial.

    The falx position is approximated by the column centroid of brain
    parenchyma (brain minus tumor).
    """
    if orientation != "axial":
        return None
    t = np.asarray(tumor, dtype=bool)
    tissue = brain.mask & ~t
    if not tissue.any():
        raise BiomarkerError("brain minus tumor is empty")
    x_falx = float(np.nonzero(tissue)[1].mean())
    return abs(brain.midline_x - x_falx) / brain.width * 100.0


def clinical_features(image, tumor, orientation: str, eps: float = REI_EPSILON, contact_px: float = CONTACT_PX):
    brain = estimate_brain_region(image, tumor)
    rei, degenerate = ring_enhancement_index(image, tumor, eps)
    d, contact = skull_distance(tumor, brain, contact_px)
    mls = midline_shift(tumor, brain, orientation)
    return ClinicalFeatures(rei, d, contact, mls, degenerate)
