"""Exact additive attributions for boosted tree ensembles.

Attributions decompose the pre-softmax margin of each class,

    margin_c(x) = phi0_c + sum_j phi[j, c],

using path-dependent TreeSHAP: absent features are marginalized by the
training-sample cover proportions stored in each tree. A brute-force
coalition enumeration with the same value function is provided as an oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .gbt import BoostedEnsemble, RegTree

MAX_BRUTE_FORCE_FEATURES = 12
DEFAULT_TOP_K = 5


@dataclass
class Attribution:
    phi0: np.ndarray  # (K,)
    phi: np.ndarray  # (d, K)
    predicted: int
    confidence: float
    classes: list
    feature_names: list
    values: np.ndarray | None = None  # human-readable feature values for reporting
    sample_id: str | None = None

    @property
    def predicted_class(self):
        return self.classes[self.predicted]

    def margins(self) -> np.ndarray:
        return self.phi0 + self.phi.sum(axis=0)

    def to_dict(self, k: int | None = None) -> dict:
        idx = top_k_features(self, k if k is not None else len(self.feature_names))
        vals = self.values if self.values is not None else np.full(len(self.feature_names), np.nan)
        return {
            "sample_id": self.sample_id,
            "predicted_class": self.predicted_class,
            "confidence": float(self.confidence),
            "phi0": float(self.phi0[self.predicted]),
            "entries": [
                {"feature": self.feature_names[j], "value": float(vals[j]), "phi": float(self.phi[j, self.predicted])}
                for j in idx
            ],
        }


def top_k_features(attr: Attribution, k: int = DEFAULT_TOP_K) -> list:
    """Feature indices by descending ``|phi|`` for the predicted class; ties by index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    mag = np.abs(attr.phi[:, attr.predicted])
    order = sorted(range(len(mag)), key=lambda j: (-mag[j], j))
    return order[:k]


# ---------------------------------------------------------------------------
# single-tree algorithms


def expected_value(tree: RegTree) -> float:
    """Cover-weighted mean leaf value."""
    leaves = tree.feature < 0
    return float(np.sum(tree.value[leaves] * tree.cover[leaves]) / tree.cover[0])


def _extend(path, zero_frac, one_frac, feat):
    # path entries are [feature, zero_fraction, one_fraction, weight]
    depth = len(path)
    path.append([feat, zero_frac, one_frac, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one_frac * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = zero_frac * path[i][3] * (depth - i) / (depth + 1)


def _unwind(path, i):
    last = len(path) - 1
    one, zero = path[i][2], path[i][1]
    n = path[last][3]
    for j in range(last - 1, -1, -1):
        if one != 0:
            t = path[j][3]
            path[j][3] = n * (last + 1) / ((j + 1) * one)
            n = t - path[j][3] * zero * (last - j) / (last + 1)
        else:
            path[j][3] = path[j][3] * (last + 1) / (zero * (last - j))
    for j in range(i, last):
        path[j][0], path[j][1], path[j][2] = path[j + 1][0], path[j + 1][1], path[j + 1][2]
    path.pop()


def _unwound_sum(path, i):
    last = len(path) - 1
    one, zero = path[i][2], path[i][1]
    n = path[last][3]
    total = 0.0
    for j in range(last - 1, -1, -1):
        if one != 0:
            t = n * (last + 1) / ((j + 1) * one)
            total += t
            n = path[j][3] - t * zero * (last - j) / (last + 1)
        else:
            total += path[j][3] / (zero * (last - j) / (last + 1))
    return total


def tree_shap_single(tree: RegTree, x) -> np.ndarray:
    """Path-dependent TreeSHAP values of one regression tree at ``x``."""
    x = np.asarray(x, dtype=float)
    phi = np.zeros(len(x))

    def recurse(node, path, zero_frac, one_frac, feat):
        path = [list(p) for p in path]
        _extend(path, zero_frac, one_frac, feat)
        f = tree.feature[node]
        if f < 0:
            for i in range(1, len(path)):
                w = _unwound_sum(path, i)
                phi[path[i][0]] += w * (path[i][2] - path[i][1]) * tree.value[node]
            return
        left, right = tree.left[node], tree.right[node]
        hot, cold = (left, right) if x[f] < tree.threshold[node] else (right, left)
        inc_zero = inc_one = 1.0
        for k in range(1, len(path)):
            if path[k][0] == f:
                inc_zero, inc_one = path[k][1], path[k][2]
                _unwind(path, k)
                break
        cover = tree.cover[node]
        recurse(hot, path, inc_zero * tree.cover[hot] / cover, inc_one, f)
        recurse(cold, path, inc_zero * tree.cover[cold] / cover, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)
    return phi


def conditional_expectation(tree: RegTree, x, present) -> float:
    """Tree output with features outside ``present`` marginalized by cover."""

    def walk(node):
        f = tree.feature[node]
        if f < 0:
            return tree.value[node]
        left, right = tree.left[node], tree.right[node]
        if f in present:
            return walk(left if x[f] < tree.threshold[node] else right)
        c = tree.cover[node]
        return (tree.cover[left] * walk(left) + tree.cover[right] * walk(right)) / c

    return float(walk(0))


# ---------------------------------------------------------------------------
# ensembles


def _prepare(model: BoostedEnsemble, x):
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("attribution input must be finite")
    return x


def _finish(model, x, phi0, phi, values, sample_id):
    margins = model.predict_margin(x[None, :])[0]
    probs = np.exp(margins - margins.max())
    probs /= probs.sum()
    pred = int(np.argmax(margins))
    vals = None if values is None else np.asarray(values, dtype=float)
    return Attribution(
        phi0, phi, pred, float(probs[pred]), list(model.classes), list(model.feature_names), vals, sample_id
    )


def tree_shap(model: BoostedEnsemble, x, values=None, sample_id=None) -> Attribution:
    """Attribution of every class margin at ``x`` (a model-space feature vector)."""
    x = _prepare(model, x)
    K, d = len(model.classes), model.n_features
    eta = model.params.learning_rate
    phi0 = np.array(model.base_score, dtype=float)
    phi = np.zeros((d, K))
    for round_trees in model.trees:
        for c, tree in enumerate(round_trees):
            phi0[c] += eta * expected_value(tree)
            if tree.n_nodes > 1:
                phi[:, c] += eta * tree_shap_single(tree, x)
    return _finish(model, x, phi0, phi, values, sample_id)


def brute_force_shapley(model: BoostedEnsemble, x, values=None, sample_id=None) -> Attribution:
    """Exact Shapley values by enumerating all ``2^d`` coalitions (``d <= 12``)."""
    x = _prepare(model, x)
    d, K = model.n_features, len(model.classes)
    if d > MAX_BRUTE_FORCE_FEATURES:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_FEATURES} features, model has {d}")
    eta = model.params.learning_rate

    def v(present):
        out = np.array(model.base_score, dtype=float)
        for round_trees in model.trees:
            for c, tree in enumerate(round_trees):
                out[c] += eta * conditional_expectation(tree, x, present)
        return out

    cache = {}
    for size in range(d + 1):
        for S in combinations(range(d), size):
            cache[S] = v(frozenset(S))
    phi = np.zeros((d, K))
    for j in range(d):
        others = [i for i in range(d) if i != j]
        for size in range(d):
            w = math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
            for S in combinations(others, size):
                with_j = tuple(sorted(S + (j,)))
                phi[j] += w * (cache[with_j] - cache[S])
    return _finish(model, x, cache[()], phi, values, sample_id)


def explain_record(model: BoostedEnsemble, tsf_row, deep_row=None, sample_id=None) -> Attribution:
    """Attribute a raw feature row through the model's embedded preprocessor.

    Reported ``values`` are human-readable: imputed raw Tumor Specific values
    and PCA scores, aligned with the model's feature names.
    """
    pipe = model.preprocessor
    if pipe is None:
        return tree_shap(model, tsf_row, values=tsf_row, sample_id=sample_id)
    tsf = np.asarray(tsf_row, dtype=float)[None, :]
    deep = None if deep_row is None else np.asarray(deep_row, dtype=float)[None, :]
    x = pipe.transform(tsf, deep)[0]
    raw = pipe.raw_values(tsf, deep)[0]
    return tree_shap(model, x, values=raw, sample_id=sample_id)


def write_attribution(attr: Attribution, path, k: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(attr.to_dict(k), fh, indent=2)
        fh.write("\n")
