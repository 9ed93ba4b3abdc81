"""Per-sample Tumor Specific feature extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clinical, contour, iwbn, nonlinear
from .io import FeatureRecord, check_pair, load_mask, load_pgm


@dataclass
class ExtractionParams:
    n_points: int = contour.DEFAULT_POINTS
    iwbn_lambda: float = iwbn.DEFAULT_LAMBDA
    entropy_window: int = iwbn.DEFAULT_WINDOW
    entropy_bins: int = iwbn.DEFAULT_BINS
    entropy_m: int = 2
    entropy_r: float = 0.2
    perm_order: int = 3
    perm_delay: int = 1
    entropy_signal: str = "std"  # "std" or "iw": which signal feeds the chaotic descriptors
    lyap_dim: int = 3
    lyap_tau: int = 1
    lyap_theiler: int = 8
    lyap_steps: int = 12
    lyap_fit: tuple = field(default=(1, 8))
    rei_epsilon: float = clinical.REI_EPSILON
    contact_px: float = clinical.CONTACT_PX


def extract_features(sample_id, image, mask, orientation="unknown", params: ExtractionParams | None = None):
    """Compute the 18 Tumor Specific features for one image/mask pair."""
    p = params or ExtractionParams()
    if p.entropy_signal not in ("std", "iw"):
        raise ValueError(f"entropy_signal must be 'std' or 'iw', got {p.entropy_signal!r}")
    comp = contour.largest_component(mask)
    traced = contour.Contour(contour.trace_boundary(comp).astype(float))
    resampled = contour.resample_closed(traced, p.n_points)
    signal = contour.to_radial_signal(resampled, comp)
    geo = contour.geometric_features(signal, comp)
    prof = iwbn.iwbn_profile(signal, p.iwbn_lambda, p.entropy_window, p.entropy_bins)
    series = signal.values if p.entropy_signal == "std" else prof.weighted_signal
    chaos = nonlinear.ChaoticFeatures(
        fractal_dimension=nonlinear.box_counting_fd(traced),
        approx_entropy=nonlinear.approximate_entropy(series, p.entropy_m, p.entropy_r),
        sample_entropy=nonlinear.sample_entropy(series, p.entropy_m, p.entropy_r),
        perm_entropy=nonlinear.permutation_entropy(series, p.perm_order, p.perm_delay),
        lyapunov=nonlinear.largest_lyapunov(
            series, p.lyap_dim, p.lyap_tau, p.lyap_theiler, p.lyap_steps, tuple(p.lyap_fit)
        ),
    )
    clin = clinical.clinical_features(image, comp, orientation, p.rei_epsilon, p.contact_px)
    values = {
        "irregularity": geo.irregularity,
        "roughness": geo.roughness,
        "area": float(geo.area),
        "mean_radius": geo.mean_radius,
        "mean_local_entropy": prof.mean_local_entropy,
        "weight_range": prof.weight_range,
        "enhancement_factor": prof.enhancement_factor,
        "fractal_dimension": chaos.fractal_dimension,
        "approx_entropy": chaos.approx_entropy,
        "sample_entropy": chaos.sample_entropy,
        "perm_entropy": chaos.perm_entropy,
        "lyapunov": chaos.lyapunov,
        "rei": clin.rei,
        "d_skull": clin.d_skull,
        "contact_ratio": clin.contact_ratio,
        "mls": clin.mls,
        "iw_irregularity": contour.irregularity(prof.weighted_signal),
        "iw_roughness": contour.roughness(prof.weighted_signal),
    }
    bad = [k for k, v in values.items() if v is not None and not np.isfinite(v)]
    if bad:
        raise ValueError(f"{sample_id}: non-finite features {bad}")
    return FeatureRecord(sample_id, values)


def extract_sample(manifest_row, params: ExtractionParams | None = None) -> FeatureRecord:
    image = load_pgm(manifest_row.image_path)
    mask = load_mask(manifest_row.mask_path)
    check_pair(image, mask)
    return extract_features(manifest_row.sample_id, image, mask, manifest_row.orientation, params)
