"""Information-weighted boundary normalization.

Each boundary point gets a local entropy; entropies are min-max rescaled into
weights with mean one, and the radial signal is reweighted and renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_LAMBDA = 0.5
DEFAULT_WINDOW = 15
DEFAULT_BINS = 8
WEIGHT_FLOOR = 0.1


@dataclass(frozen=True, eq=False)
class IwbnProfile:
    local_entropy: np.ndarray
    weights: np.ndarray
    weighted_signal: np.ndarray
    mean_local_entropy: float
    weight_range: float
    enhancement_factor: float
    lam: float


def _values(signal):
    return np.asarray(getattr(signal, "values", signal), dtype=float)


def local_entropy(signal, window: int = DEFAULT_WINDOW, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Shannon entropy (nats) of the values in a circular window around each point.

    Each window is histogrammed into ``bins`` equal-width bins spanning that
    window's own min..max; a window with zero range has entropy 0.
    """
    s = _values(signal)
    n = len(s)
    if window % 2 == 0 or window < 3 or window > n // 2:
        raise ValueError(f"window must be odd with 3 <= window <= {n // 2}, got {window}")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    half = window // 2
    idx = (np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :]) % n
    win = s[idx]  # (n, window)
    lo = win.min(axis=1, keepdims=True)
    span = win.max(axis=1, keepdims=True) - lo
    flat = span[:, 0] == 0
    span[flat] = 1.0
    # same bin rule as np.histogram: right edge belongs to the last bin
    b = np.minimum(np.floor((win - lo) / span * bins).astype(np.int64), bins - 1)
    counts = np.zeros((n, bins))
    np.add.at(counts, (np.repeat(np.arange(n), window), b.ravel()), 1.0)
    p = counts / window
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    ent = terms.sum(axis=1)
    ent[flat] = 0.0
    return ent


def information_weights(entropy, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Weights ``(0.1 + lam*E_hat) / mean(0.1 + lam*E_hat)`` with E_hat min-max scaled."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    e = np.asarray(entropy, dtype=float)
    emin, emax = e.min(), e.max()
    if emax == emin or lam == 0:
        return np.ones_like(e)
    e_hat = (e - emin) / (emax - emin)
    num = WEIGHT_FLOOR + lam * e_hat
    return num / num.mean()


def weighted_signal(signal, weights) -> np.ndarray:
    s = _values(signal)
    w = np.asarray(weights, dtype=float)
    if s.shape != w.shape:
        raise ValueError(f"signal and weights differ in length: {s.shape} vs {w.shape}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if np.all(w == w[0]):
        # the reweighting is the identity on an already mean-normalized signal
        return s.copy()
    prod = s * w
    m = prod.mean()
    if m == 0:
        raise ValueError("signal-weight products are all zero")
    return prod / m


def enhancement_factor(std_signal, iw_signal) -> float:
    """Ratio of spreads sigma(S_iw)/sigma(S_std); 1 for a constant signal."""
    s0 = float(np.std(std_signal))
    if s0 == 0.0:
        return 1.0
    return float(np.std(iw_signal)) / s0


def iwbn_indices(entropy, weights, std_signal, iw_signal):
    """Mean local entropy, weight range and enhancement factor."""
    e = np.asarray(entropy, dtype=float)
    w = np.asarray(weights, dtype=float)
    return float(e.mean()), float(w.max() - w.min()), enhancement_factor(_values(std_signal), iw_signal)


def iwbn_profile(
    signal, lam: float = DEFAULT_LAMBDA, window: int = DEFAULT_WINDOW, bins: int = DEFAULT_BINS
) -> IwbnProfile:
    s = _values(signal)
    ent = local_entropy(s, window, bins)
    w = information_weights(ent, lam)
    iw = weighted_signal(s, w)
    mle, dw, ef = iwbn_indices(ent, w, s, iw)
    return IwbnProfile(ent, w, iw, mle, dw, ef, lam)
