"""Seeded phantoms with controlled boundary complexity.

Tumors are star-shaped regions ``r(theta) = R * (1 + perturbation(theta))``
drawn inside a uniform disk standing in for the brain:

* ``ellipse``: no perturbation, elliptic radius with the given axis ratio
* ``lobulated``: ``a * sin(k * theta + phase)``
* ``chaotic_star``: ``sum_{h=2..H} c_h sin(h * theta + phi_h)`` with seeded
  coefficients scaled so their RMS equals ``amplitude / sqrt(2)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .io import BinaryMask, GrayImage, SampleManifest, save_pgm, write_manifest

KINDS = ("ellipse", "lobulated", "chaotic_star")
PROFILES = ("uniform", "ring_enhanced", "shifted_brain")
KIND_LABEL = {"ellipse": "pituitary", "lobulated": "meningioma", "chaotic_star": "glioma"}

BACKGROUND = 0
BRAIN = 70
TUMOR = 120


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Parameters of one phantom. ``None`` entries are drawn from ``seed``."""

    kind: str = "ellipse"
    size: float = 30.0  # mean tumor radius R, pixels
    seed: int = 0
    axis_ratio: float | None = None
    angle: float | None = None
    lobe_amplitude: float | None = None
    lobe_count: int | None = None
    fourier_order: int = 16
    fourier_amplitude: float | None = None
    profile: str = "uniform"
    core_val: int = 100
    rim_val: int = 147
    offset: float = 0.0  # tumor center relative to the brain center, x pixels
    offset_y: float = 0.0
    canvas: int = 256
    brain_radius: float | None = None


def _radius_fn(spec: ShapeSpec, rng: np.random.Generator):
    R = float(spec.size)
    if spec.kind == "ellipse":
        q = spec.axis_ratio if spec.axis_ratio is not None else rng.uniform(1.0, 1.25)
        phi = spec.angle if spec.angle is not None else rng.uniform(0, math.pi)
        if q < 1:
            raise PhantomError(f"axis_ratio must be >= 1, got {q}")
        a, b = R * math.sqrt(q), R / math.sqrt(q)

        def radius(theta):
            t = theta - phi
            return a * b / np.sqrt((b * np.cos(t)) ** 2 + (a * np.sin(t)) ** 2)

    elif spec.kind == "lobulated":
        amp = spec.lobe_amplitude if spec.lobe_amplitude is not None else rng.uniform(0.08, 0.2)
        k = spec.lobe_count if spec.lobe_count is not None else int(rng.integers(3, 7))
        phase = spec.angle if spec.angle is not None else rng.uniform(0, 2 * math.pi)

        def radius(theta):
            return R * (1.0 + amp * np.sin(k * theta + phase))

    elif spec.kind == "chaotic_star":
        H = int(spec.fourier_order)
        if H < 2:
            raise PhantomError("fourier_order must be >= 2")
        amp = spec.fourier_amplitude if spec.fourier_amplitude is not None else rng.uniform(0.22, 0.32)
        z = rng.normal(size=H - 1)
        c = amp * z / np.sqrt(np.sum(z**2))
        ph = rng.uniform(0, 2 * math.pi, size=H - 1)
        harmonics = np.arange(2, H + 1)

        def radius(theta):
            theta = np.asarray(theta, dtype=float)
            pert = np.sin(np.multiply.outer(theta, harmonics) + ph) @ c
            return R * (1.0 + pert)

    else:
        raise PhantomError(f"unknown shape kind {spec.kind!r}")
    return radius


def _max_radius(spec: ShapeSpec) -> float:
    radius = _radius_fn(spec, np.random.default_rng(spec.seed))
    return float(radius(np.linspace(0, 2 * math.pi, 4096, endpoint=False)).max())


def generate(spec: ShapeSpec):
    """Render a phantom; returns ``(image, tumor_mask, brain_mask)``."""
    if spec.profile not in PROFILES:
        raise PhantomError(f"unknown intensity profile {spec.profile!r}")
    rng = np.random.default_rng(spec.seed)
    radius = _radius_fn(spec, rng)

    theta = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    r = radius(theta)
    if r.min() <= 0:
        raise PhantomError("perturbation drives the radius through zero: boundary self-intersects")

    n = spec.canvas
    c = (n - 1) / 2.0
    brain_r = spec.brain_radius if spec.brain_radius is not None else 0.43 * n
    tx, ty = c + spec.offset, c + spec.offset_y
    if math.hypot(spec.offset, spec.offset_y) + r.max() > brain_r - 2:
        raise PhantomError("tumor does not fit inside the brain phantom")

    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    brain = np.hypot(xx - c, yy - c) <= brain_r
    dx, dy = xx - tx, yy - ty
    tumor = np.hypot(dx, dy) <= radius(np.arctan2(dy, dx))
    labels, count = ndimage.label(tumor, structure=np.ones((3, 3), bool))
    if count == 0:
        raise PhantomError("empty tumor")
    if count > 1:
        sizes = np.bincount(labels.ravel())[1:]
        tumor = labels == (int(np.argmax(sizes)) + 1)

    img = np.full((n, n), BACKGROUND, dtype=np.uint8)
    img[brain] = BRAIN
    if spec.profile == "ring_enhanced":
        area = tumor.sum()
        k = max(1, round(0.3 * math.sqrt(area / math.pi)))
        depth = ndimage.distance_transform_cdt(tumor, metric="chessboard")
        img[tumor] = spec.core_val
        img[tumor & (depth <= k)] = spec.rim_val
    else:
        img[tumor] = TUMOR
    return GrayImage(img), BinaryMask(tumor), BinaryMask(brain)


def dataset_specs(n_per_class: int, seed: int):
    """Sample ids, labels, orientations and shape specs for a synthetic cohort.

    Sample ``i`` (in class-interleaved order) draws everything from
    ``seed + i``, so samples can be generated independently.
    """
    if n_per_class < 5:
        raise ValueError("need at least 5 samples per class")
    out = []
    for i in range(3 * n_per_class):
        kind = KINDS[i % 3]
        s = seed + i
        rng = np.random.default_rng([s, 1])
        orient = rng.choice(["axial", "axial", "axial", "axial", "sagittal", "coronal"])
        if kind == "ellipse":
            size = rng.uniform(20, 30)
            spec = ShapeSpec(kind, size, s, profile="uniform")
        elif kind == "lobulated":
            size = rng.uniform(26, 38)
            rim = int(rng.integers(112, 128))
            spec = ShapeSpec(kind, size, s, profile="ring_enhanced", core_val=100, rim_val=rim)
        else:
            size = rng.uniform(30, 42)
            rim = int(rng.integers(135, 160))
            spec = ShapeSpec(kind, size, s, profile="ring_enhanced", core_val=100, rim_val=rim)
        # place the tumor somewhere that keeps it inside the brain
        rmax = _max_radius(spec)
        limit = 0.43 * spec.canvas - 3 - rmax
        ang = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(0, max(limit, 0.0))
        spec = replace(spec, offset=dist * math.cos(ang), offset_y=dist * math.sin(ang))
        out.append((f"s{i:04d}", KIND_LABEL[kind], str(orient), spec))
    return out


def pseudo_deep_features(labels, seed: int, width: int = 16, separation: float = 1.5) -> np.ndarray:
    """Class-conditioned Gaussian rows standing in for CNN embeddings."""
    rng = np.random.default_rng([seed, 2])
    classes = sorted(set(labels))
    centers = {c: rng.normal(scale=separation, size=width) for c in classes}
    noise = rng.normal(size=(len(labels), width))
    return np.array([centers[c] for c in labels]) + noise


def generate_dataset(n_per_class: int, seed: int, out_dir, deep_width: int = 16):
    """Write PGM images/masks, ``manifest.csv`` and optionally ``deep.csv``.

    Returns the list of manifest rows.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    specs = dataset_specs(n_per_class, seed)
    for sid, label, orient, spec in specs:
        image, mask, _ = generate(spec)
        ip = out / "images" / f"{sid}.pgm"
        mp = out / "masks" / f"{sid}.pgm"
        save_pgm(image, ip)
        save_pgm(mask.data.astype(np.uint8) * 255, mp)
        rows.append(SampleManifest(sid, str(ip), str(mp), orient, label, sid if deep_width else None))
    write_manifest(rows, out / "manifest.csv")
    if deep_width:
        deep = pseudo_deep_features([r[1] for r in specs], seed, deep_width)
        with open(out / "deep.csv", "w") as fh:
            fh.write("key," + ",".join(f"f{j}" for j in range(deep_width)) + "\n")
            for (sid, *_), row in zip(specs, deep):
                fh.write(sid + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return rows
