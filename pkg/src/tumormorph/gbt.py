"""Second-order gradient-boosted trees for multiclass softmax classification.

Each round fits one regression tree per class to the softmax gradients
``g = p - y`` and hessians ``h = p (1 - p)``. Leaves take the Newton weight
``-G / (H + reg_lambda)`` and a split is kept only when its gain

    0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma

is positive. Splits are exact greedy over sorted feature values with
thresholds at midpoints; ties go to the lowest feature index, then the lowest
threshold. Samples with ``x < threshold`` go left.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = "1"
HESS_FLOOR = 1e-16
TIE_RTOL = 1e-10


class ModelFormatError(ValueError):
    pass


@dataclass
class BoostParams:
    n_estimators: int = 300
    max_depth: int = 8
    learning_rate: float = 0.05
    reg_lambda: float = 1.0
    gamma: float = 0.0


@dataclass
class RegTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # Newton weight of every node; only leaves are used for prediction
    cover: np.ndarray  # training samples reaching each node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.maximum(f, 0)] < self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["cover"], dtype=float),
        )


def _midpoint(a, b):
    t = a + (b - a) * 0.5
    return np.where(a < t, t, b)


def build_tree(X, g, h, params: BoostParams, orders=None) -> RegTree:
    """Grow one tree level by level on gradients ``g`` and hessians ``h``.

    ``orders`` is the (n_features, n_samples) stable argsort of ``X`` by
    column; pass it in to avoid re-sorting every round.
    """
    X = np.asarray(X, dtype=float)
    n, F = X.shape
    lam, gamma = params.reg_lambda, params.gamma
    if orders is None:
        orders = np.argsort(X, axis=0, kind="stable").T
    fidx = np.arange(F)[:, None]

    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    G0, H0 = float(g.sum()), float(h.sum())
    value, cover = [-G0 / (H0 + lam)], [float(n)]

    pos = np.zeros(n, dtype=np.int64)  # index into the current frontier, -1 once in a final leaf
    frontier = [0]
    for _depth in range(params.max_depth):
        if not frontier:
            break
        active = pos >= 0
        m = int(active.sum())
        O = orders[active[orders]].reshape(F, m)
        S = np.take_along_axis(O, np.argsort(pos[O], axis=1, kind="stable"), axis=1)
        seg = pos[S[0]]
        counts = np.bincount(seg, minlength=len(frontier))
        ends = np.cumsum(counts)
        starts = ends - counts
        cols = np.arange(m)

        V = X[S, fidx]
        GC = np.cumsum(g[S], axis=1)
        HC = np.cumsum(h[S], axis=1)
        zero = np.zeros((F, 1))
        GB = np.hstack([zero, GC])[:, starts]  # prefix sum before each segment
        HB = np.hstack([zero, HC])[:, starts]
        Gt = GC[:, ends - 1] - GB
        Ht = HC[:, ends - 1] - HB
        GL = GC - GB[:, seg]
        HL = HC - HB[:, seg]
        GR = Gt[:, seg] - GL
        HR = Ht[:, seg] - HL

        nxt = np.full((F, m), -np.inf)
        nxt[:, :-1] = V[:, 1:]
        valid = (cols < ends[seg] - 1) & (nxt > V)
        parent = Gt**2 / (Ht + lam)
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent[:, seg]) - gamma
        gain = np.where(valid, gain, -np.inf)

        # gains equal up to rounding (e.g. identical partitions reached through
        # different features) count as ties: lowest feature, then lowest position
        row_best = np.maximum.reduceat(gain, starts, axis=1)
        top = row_best.max(axis=0)
        tol = TIE_RTOL * np.abs(np.where(np.isfinite(top), top, 0.0))
        best_f = np.argmax(row_best >= top - tol, axis=0)
        best_gain = row_best[best_f, np.arange(len(frontier))]
        chosen = gain[best_f[seg], cols]
        first = np.minimum.reduceat(np.where(chosen >= (top - tol)[seg], cols, m), starts)
        splits = best_gain > 0

        new_pos = np.full(n, -1, dtype=np.int64)
        new_frontier = []
        child_slot = np.full(len(frontier), -1, dtype=np.int64)
        for s in np.flatnonzero(splits):
            f, j = int(best_f[s]), int(first[s])
            node = frontier[s]
            feature[node] = f
            threshold[node] = float(_midpoint(V[f, j], V[f, j + 1]))
            gl, hl = float(GL[f, j]), float(HL[f, j])
            gr, hr = float(GR[f, j]), float(HR[f, j])
            nl = j + 1 - int(starts[s])
            for gg, hh, cnt in ((gl, hl, nl), (gr, hr, int(counts[s]) - nl)):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(-gg / (hh + lam))
                cover.append(float(cnt))
            left[node], right[node] = len(feature) - 2, len(feature) - 1
            child_slot[s] = len(new_frontier)
            new_frontier.extend([len(feature) - 2, len(feature) - 1])

        if new_frontier:
            samp = S[best_f[seg], cols]
            is_split = splits[seg]
            goes_right = cols > first[seg]
            new_pos[samp[is_split]] = (child_slot[seg] + goes_right)[is_split]
        pos = new_pos
        frontier = new_frontier

    return RegTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(cover, dtype=float),
    )


def softmax(margins):
    z = np.asarray(margins, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_loss(margins, y) -> float:
    z = np.asarray(margins, dtype=float)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(y)), y]))


@dataclass
class BoostedEnsemble:
    classes: list
    feature_names: list
    params: BoostParams
    base_score: np.ndarray
    trees: list = field(default_factory=list)  # trees[round][class]
    train_loss: list = field(default_factory=list)
    preprocessor: object = None  # fitted FusionPipeline, if any

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_margin(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.tile(self.base_score, (len(X), 1))
        eta = self.params.learning_rate
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                out[:, c] += eta * tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.predict_margin(X))

    def predict(self, X) -> list:
        idx = np.argmax(self.predict_margin(X), axis=1)
        return [self.classes[i] for i in idx]


def encode_labels(labels, classes=None):
    # numpy scalars become plain Python values so classes serialize cleanly
    labels = [v.item() if isinstance(v, np.generic) else v for v in labels]
    if classes is None:
        classes = sorted(set(labels))
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[v] for v in labels], dtype=np.int64), list(classes)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not among classes {classes}") from None


def train(X, labels, params: BoostParams | None = None, feature_names=None, classes=None) -> BoostedEnsemble:
    """Fit a boosted ensemble; ``labels`` may be any hashable class tokens."""
    params = params or BoostParams()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise ValueError(f"non-finite feature at row {bad[0]}, column {bad[1]}")
    y, classes = encode_labels(labels, classes)
    if len(y) != len(X):
        raise ValueError("X and labels differ in length")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least two classes")
    if params.n_estimators < 0 or params.max_depth < 1:
        raise ValueError("n_estimators must be >= 0 and max_depth >= 1")
    K = len(classes)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    model = BoostedEnsemble(classes, names, params, np.zeros(K))
    Y = np.eye(K)[y]
    margins = np.zeros((len(X), K))
    orders = np.argsort(X, axis=0, kind="stable").T
    model.train_loss.append(log_loss(margins, y))
    for _ in range(params.n_estimators):
        P = softmax(margins)
        round_trees = []
        for c in range(K):
            g = P[:, c] - Y[:, c]
            h = np.maximum(P[:, c] * (1.0 - P[:, c]), HESS_FLOOR)
            round_trees.append(build_tree(X, g, h, params, orders))
        for c, tree in enumerate(round_trees):
            margins[:, c] += params.learning_rate * tree.predict(X)
        model.trees.append(round_trees)
        model.train_loss.append(log_loss(margins, y))
    return model


# ---------------------------------------------------------------------------
# metrics and cross-validation


def confusion_matrix(y_true, y_pred, n_classes) -> np.ndarray:
    C = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(C, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return C


def _ratio(a, b):
    return float(a) / float(b) if b else float("nan")


def classification_metrics(C) -> dict:
    """Accuracy plus macro one-vs-rest sensitivity and specificity from a confusion matrix."""
    C = np.asarray(C)
    total = C.sum()
    tp = np.diag(C)
    fn = C.sum(axis=1) - tp
    fp = C.sum(axis=0) - tp
    tn = total - tp - fn - fp
    sens = [_ratio(tp[i], tp[i] + fn[i]) for i in range(len(C))]
    spec = [_ratio(tn[i], tn[i] + fp[i]) for i in range(len(C))]
    return {
        "accuracy": _ratio(tp.sum(), total),
        "sensitivity": float(np.nanmean(sens)),
        "specificity": float(np.nanmean(spec)),
        "per_class_sensitivity": sens,
        "per_class_specificity": spec,
    }


def stratified_folds(y, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per sample: each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        small = classes[counts < k].tolist()
        raise ValueError(f"classes {small} have fewer than k={k} samples")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


@dataclass
class CvReport:
    mode: str
    folds: list  # per-fold dicts
    classes: list

    def summary(self) -> dict:
        out = {}
        for key in ("accuracy", "sensitivity", "specificity"):
            vals = np.array([f[key] for f in self.folds])
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return out

    def to_dict(self):
        return {"mode": self.mode, "classes": self.classes, "summary": self.summary(), "folds": self.folds}


def cross_validate(tsf, labels, deep=None, mode="tsf", k=5, seed=42, params=None, variance_target=0.95, classes=None):
    """Stratified k-fold CV; preprocessing and model are fitted on each training fold only."""
    from .fusion import FusionPipeline

    params = params or BoostParams()
    tsf = np.asarray(tsf, dtype=float)
    y, classes = encode_labels(labels, classes)
    fold = stratified_folds(y, k, seed)
    results = []
    for f in range(k):
        tr, te = np.flatnonzero(fold != f), np.flatnonzero(fold == f)
        pipe = FusionPipeline(mode, variance_target)
        pipe.fit(tsf[tr], None if deep is None else np.asarray(deep)[tr])
        Xtr = pipe.transform(tsf[tr], None if deep is None else np.asarray(deep)[tr])
        Xte = pipe.transform(tsf[te], None if deep is None else np.asarray(deep)[te])
        model = train(Xtr, [classes[i] for i in y[tr]], params, pipe.columns, classes)
        pred = np.argmax(model.predict_margin(Xte), axis=1)
        C = confusion_matrix(y[te], pred, len(classes))
        m = classification_metrics(C)
        m.update(
            fold=f,
            n_train=int(len(tr)),
            n_test=int(len(te)),
            n_features=int(Xtr.shape[1]),
            confusion=C.tolist(),
            test_index=te.tolist(),
        )
        results.append(m)
    return CvReport(mode, results, list(classes))


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: BoostedEnsemble) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "params": asdict(model.params),
        "classes": list(model.classes),
        "feature_names": list(model.feature_names),
        "base_score": model.base_score.tolist(),
        "trees": [[t.to_dict() for t in rt] for rt in model.trees],
        "train_loss": list(model.train_loss),
        "preprocessor": None if model.preprocessor is None else model.preprocessor.to_dict(),
    }


def model_from_dict(d) -> BoostedEnsemble:
    from .fusion import FusionPipeline

    version = str(d.get("schema_version"))
    if version != SCHEMA_VERSION:
        raise ModelFormatError(f"model schema version {version!r} is not supported (reader is {SCHEMA_VERSION!r})")
    try:
        model = BoostedEnsemble(
            classes=list(d["classes"]),
            feature_names=list(d["feature_names"]),
            params=BoostParams(**d["params"]),
            base_score=np.array(d["base_score"], dtype=float),
            trees=[[RegTree.from_dict(t) for t in rt] for rt in d["trees"]],
            train_loss=list(d.get("train_loss", [])),
            preprocessor=None if d.get("preprocessor") is None else FusionPipeline.from_dict(d["preprocessor"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from None
    return model


def save_model(model: BoostedEnsemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> BoostedEnsemble:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a valid model document: {exc}") from None
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: not a valid model document")
    return model_from_dict(d)
