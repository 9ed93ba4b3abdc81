"""Fold-scoped normalization, PCA of deep features, and fused feature vectors.

Everything with a ``fit`` learns from training rows only; ``apply`` /
``transform`` are pure functions of the fitted state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import TSF_COLUMNS

PCA_VARIANCE = 0.95


class NotFittedError(RuntimeError):
    pass


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "zero_variance": self.zero_variance.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], float), np.array(d["std"], float), np.array(d["zero_variance"], bool))


def zscore_fit(rows) -> StandardizationStats:
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("z-score fit needs at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return StandardizationStats(mean, std, std == 0)


def zscore_apply(stats: StandardizationStats, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=float)
    safe = np.where(stats.zero_variance, 1.0, stats.std)
    Z = (X - stats.mean) / safe
    return np.where(stats.zero_variance, 0.0, Z)


@dataclass
class PcaModel:
    components: np.ndarray  # (k, d), orthonormal rows
    explained_ratio: np.ndarray  # (k,)
    mean: np.ndarray  # (d,)
    all_ratios: np.ndarray  # every component's ratio, descending

    @property
    def k(self) -> int:
        return len(self.components)

    def to_dict(self):
        return {
            "components": self.components.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
            "mean": self.mean.tolist(),
            "all_ratios": self.all_ratios.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        comps = np.array(d["components"], float).reshape(len(d["explained_ratio"]), len(d["mean"]))
        return cls(comps, np.array(d["explained_ratio"], float), np.array(d["mean"], float), np.array(d["all_ratios"], float))


def pca_fit(rows, variance_target: float = PCA_VARIANCE) -> PcaModel:
    """Principal axes of the mean-centered rows.

    Keeps the smallest number of components whose cumulative explained
    variance reaches ``variance_target``. Each component is signed so its
    largest-magnitude loading is positive.
    """
    if not 0 < variance_target <= 1:
        raise ValueError(f"variance_target must be in (0, 1], got {variance_target}")
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("PCA fit needs at least 2 rows")
    mean = X.mean(axis=0)
    Xc = X - mean
    # right singular vectors of the centered data are the covariance eigenvectors
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    eig = s**2 / len(X)
    total = eig.sum()
    if total <= 0 or not np.isfinite(total):
        raise ValueError("rank-0 data: all rows identical")
    ratios = eig / total
    cum = np.cumsum(ratios)
    k = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    k = min(k, int(np.count_nonzero(eig > eig[0] * 1e-12)))
    comps = vt[:k].copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), lead])
    comps *= signs[:, None]
    return PcaModel(comps, ratios[:k].copy(), mean, ratios)


def pca_apply(model: PcaModel, rows) -> np.ndarray:
    return (np.asarray(rows, dtype=float) - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, reduced) -> np.ndarray:
    return np.asarray(reduced, dtype=float) @ model.components + model.mean


def column_names(n_pca: int, use_tsf: bool = True):
    return [f"pca_{j}" for j in range(n_pca)] + (list(TSF_COLUMNS) if use_tsf else [])


@dataclass
class FusedVector:
    values: np.ndarray
    columns: list


class FusionPipeline:
    """Imputation, standardization and PCA fitted on one training fold.

    ``mode`` selects the feature configuration: ``"tsf"`` (Tumor Specific
    only), ``"deep"`` (PCA-reduced deep features only) or ``"fused"``
    (``[deep_pca || tsf]``).
    """

    MODES = ("tsf", "deep", "fused")

    def __init__(self, mode: str = "tsf", variance_target: float = PCA_VARIANCE):
        if mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}, got {mode!r}")
        self.mode = mode
        self.variance_target = variance_target
        self.medians = None
        self.tsf_stats = None
        self.deep_stats = None
        self.pca = None

    @property
    def uses_deep(self):
        return self.mode in ("deep", "fused")

    @property
    def uses_tsf(self):
        return self.mode in ("tsf", "fused")

    @property
    def columns(self):
        if self.medians is None and self.pca is None:
            raise NotFittedError("pipeline is not fitted")
        return column_names(self.pca.k if self.pca is not None else 0, self.uses_tsf)

    def fit(self, tsf, deep=None):
        """Learn imputation medians, z-score stats and PCA from training rows.

        ``tsf`` is (n, 18) with NaN for missing gated values; ``deep`` is
        (n, d) and required unless ``mode == "tsf"``.
        """
        tsf = np.asarray(tsf, dtype=float)
        if tsf.ndim != 2 or tsf.shape[1] != len(TSF_COLUMNS):
            raise ValueError(f"expected {len(TSF_COLUMNS)} Tumor Specific columns, got shape {tsf.shape}")
        if self.uses_tsf:
            med = np.zeros(tsf.shape[1])
            for j in range(tsf.shape[1]):
                col = tsf[:, j]
                col = col[~np.isnan(col)]
                med[j] = np.median(col) if len(col) else 0.0
            self.medians = med
            self.tsf_stats = zscore_fit(self._impute(tsf))
        else:
            self.medians = np.zeros(tsf.shape[1])
        if self.uses_deep:
            if deep is None:
                raise ValueError(f"mode {self.mode!r} needs deep features")
            deep = np.asarray(deep, dtype=float)
            self.deep_stats = zscore_fit(deep)
            self.pca = pca_fit(zscore_apply(self.deep_stats, deep), self.variance_target)
        return self

    def _impute(self, tsf):
        return np.where(np.isnan(tsf), self.medians[None, :], tsf)

    def raw_values(self, tsf, deep=None) -> np.ndarray:
        """Human-readable values aligned with :attr:`columns`: PCA scores and imputed raw TSF."""
        parts = []
        tsf = np.atleast_2d(np.asarray(tsf, dtype=float))
        if self.uses_deep:
            parts.append(pca_apply(self.pca, zscore_apply(self.deep_stats, np.atleast_2d(deep))))
        if self.uses_tsf:
            parts.append(self._impute(tsf))
        return np.hstack(parts)

    def transform(self, tsf, deep=None) -> np.ndarray:
        if self.medians is None:
            raise NotFittedError("pipeline is not fitted")
        tsf = np.atleast_2d(np.asarray(tsf, dtype=float))
        if tsf.shape[1] != len(TSF_COLUMNS):
            raise ValueError(f"expected {len(TSF_COLUMNS)} Tumor Specific columns, got {tsf.shape[1]}")
        parts = []
        if self.uses_deep:
            if deep is None:
                raise ValueError(f"mode {self.mode!r} needs deep features")
            deep = np.atleast_2d(np.asarray(deep, dtype=float))
            if deep.shape[1] != len(self.deep_stats.mean):
                raise ValueError(f"deep width {deep.shape[1]} != fitted width {len(self.deep_stats.mean)}")
            parts.append(pca_apply(self.pca, zscore_apply(self.deep_stats, deep)))
        if self.uses_tsf:
            parts.append(zscore_apply(self.tsf_stats, self._impute(tsf)))
        return np.hstack(parts)

    def reference_values(self) -> dict:
        """Typical raw value per output column: training medians for TSF, 0 for PCA scores."""
        refs = {}
        if self.pca is not None:
            refs.update({f"pca_{j}": 0.0 for j in range(self.pca.k)})
        if self.uses_tsf:
            refs.update({c: float(m) for c, m in zip(TSF_COLUMNS, self.medians)})
        return refs

    def fuse(self, record, deep=None) -> FusedVector:
        """Fused vector for a single :class:`~tumormorph.io.FeatureRecord`."""
        if deep is None:
            deep = record.deep
        row = self.transform(record.vector()[None, :], None if deep is None else np.asarray(deep)[None, :])
        return FusedVector(row[0], self.columns)

    def to_dict(self):
        return {
            "mode": self.mode,
            "variance_target": self.variance_target,
            "medians": None if self.medians is None else self.medians.tolist(),
            "tsf_stats": None if self.tsf_stats is None else self.tsf_stats.to_dict(),
            "deep_stats": None if self.deep_stats is None else self.deep_stats.to_dict(),
            "pca": None if self.pca is None else self.pca.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        p = cls(d["mode"], d["variance_target"])
        p.medians = None if d["medians"] is None else np.array(d["medians"], float)
        p.tsf_stats = None if d["tsf_stats"] is None else StandardizationStats.from_dict(d["tsf_stats"])
        p.deep_stats = None if d["deep_stats"] is None else StandardizationStats.from_dict(d["deep_stats"])
        p.pca = None if d["pca"] is None else PcaModel.from_dict(d["pca"])
        return p
