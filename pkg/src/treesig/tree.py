"""Weighted binary decision trees.

Two split-search strategies share one recursive learner: an exhaustive
scan over all midpoints between consecutive distinct feature values, and
a randomized search that draws one uniform threshold per sampled feature
and keeps the best of K candidates.  Split quality is the weighted Gini
impurity decrease, and sample weights drive impurity and leaf totals
while row counts drive the minimum-split-size stopping rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXHAUSTIVE = "exhaustive"
RANDOM_K = "random_k"


@dataclass(frozen=True)
class TreeConfig:
    """Learning parameters for a single tree.

    ``k_features`` limits the candidate features considered at each node:
    in exhaustive mode None means all features, in random mode None means
    floor(sqrt(F)).  ``min_quality`` is the impurity-decrease floor below
    which a node becomes a leaf.
    """

    max_depth: int = 8
    min_samples_split: int = 2
    min_quality: float = 0.0
    split_mode: str = EXHAUSTIVE
    k_features: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_quality < 0:
            raise ValueError(f"min_quality must be >= 0, got {self.min_quality}")
        if self.split_mode not in (EXHAUSTIVE, RANDOM_K):
            raise ValueError(f"unknown split_mode {self.split_mode!r}")
        if self.k_features is not None and self.k_features < 1:
            raise ValueError(f"k_features must be >= 1, got {self.k_features}")


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    quality: float


class TreeNode:
    """Internal node (feature >= 0) or leaf (feature == -1).

    Every node records the weighted class totals it received during
    fitting, so weight conservation down the tree can be audited.
    """

    __slots__ = ("feature", "threshold", "left", "right", "w_signal", "w_background")

    def __init__(self, w_signal, w_background, feature=-1, threshold=math.nan,
                 left=None, right=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.w_signal = w_signal
        self.w_background = w_background

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @property
    def score(self) -> float:
        return self.w_signal / (self.w_signal + self.w_background)


class DecisionTree:
    """Fitted tree: recursive nodes plus a flattened view for fast prediction."""

    def __init__(self, root: TreeNode, n_features: int, config: TreeConfig):
        self.root = root
        self.n_features = n_features
        self.config = config
        self._flat = None

    def _arrays(self):
        if self._flat is None:
            feat, thr, left, right, score = [], [], [], [], []

            def visit(node):
                i = len(feat)
                feat.append(node.feature)
                thr.append(node.threshold)
                left.append(-1)
                right.append(-1)
                score.append(node.score)
                if not node.is_leaf:
                    left[i] = visit(node.left)
                    right[i] = visit(node.right)
                return i

            visit(self.root)
            self._flat = (
                np.asarray(feat, dtype=np.int32),
                np.asarray(thr, dtype=np.float64),
                np.asarray(left, dtype=np.int32),
                np.asarray(right, dtype=np.int32),
                np.asarray(score, dtype=np.float64),
            )
        return self._flat

    def predict_score(self, x) -> float:
        """Leaf signal proportion for one feature vector, in [0, 1]."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} features, got shape {x.shape}")
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.score

    def predict_scores(self, X) -> np.ndarray:
        """Leaf signal proportions for a matrix of feature vectors."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (n, {self.n_features}) features, got shape {X.shape}")
        feat, thr, left, right, score = self._arrays()
        node = np.zeros(X.shape[0], dtype=np.int32)
        pending = np.nonzero(feat[node] >= 0)[0]
        while pending.size:
            nd = node[pending]
            go_left = X[pending, feat[nd]] <= thr[nd]
            node[pending] = np.where(go_left, left[nd], right[nd])
            pending = pending[feat[node[pending]] >= 0]
        return score[node]

    def predict_label(self, x) -> int:
        """1 for signal when the score exceeds one half, else 0 (ties go to background)."""
        return 1 if self.predict_score(x) > 0.5 else 0

    def node_count(self) -> int:
        stack, n = [self.root], 0
        while stack:
            node = stack.pop()
            n += 1
            if not node.is_leaf:
                stack.extend((node.left, node.right))
        return n

    def to_dict(self) -> dict:
        """Nested-object form: {feature, threshold, left, right} or {w_s, w_b}."""

        def conv(node):
            if node.is_leaf:
                return {"w_s": node.w_signal, "w_b": node.w_background}
            return {
                "feature": node.feature,
                "threshold": node.threshold,
                "left": conv(node.left),
                "right": conv(node.right),
            }

        return conv(self.root)

    @classmethod
    def from_dict(cls, doc: dict, n_features: int, config: TreeConfig | None = None) -> "DecisionTree":
        def conv(obj):
            if "feature" in obj:
                left = conv(obj["left"])
                right = conv(obj["right"])
                return TreeNode(
                    left.w_signal + right.w_signal,
                    left.w_background + right.w_background,
                    feature=int(obj["feature"]),
                    threshold=float(obj["threshold"]),
                    left=left,
                    right=right,
                )
            return TreeNode(float(obj["w_s"]), float(obj["w_b"]))

        return cls(conv(doc), n_features, config or TreeConfig())


def gini_impurity(weight_signal: float, weight_background: float) -> float:
    """Two-class Gini impurity 2 p (1 - p) of a weighted node, in [0, 0.5]."""
    if weight_signal < 0 or weight_background < 0:
        raise ValueError("class weights must be non-negative")
    total = weight_signal + weight_background
    if total <= 0:
        raise ValueError("node has zero total weight")
    p = weight_signal / total
    return 2.0 * p * (1.0 - p)


def _scan_feature(x_col, ws_col, wb_col, total_s, total_b):
    """Best midpoint split of one feature column; (quality, threshold) or None.

    Candidates with a zero-weight child are inadmissible.  Among equal
    qualities the lowest threshold wins.
    """
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    cut = np.nonzero(xs[1:] > xs[:-1])[0]
    if cut.size == 0:
        return None
    cs = np.cumsum(ws_col[order])
    cb = np.cumsum(wb_col[order])
    sl, bl = cs[cut], cb[cut]
    sr, br = total_s - sl, total_b - bl
    wl, wr = sl + bl, sr + br
    valid = (wl > 0) & (wr > 0)
    if not valid.any():
        return None
    total = total_s + total_b
    parent = 2.0 * total_s * total_b / (total * total)
    child = np.zeros(cut.size, dtype=np.float64)
    np.divide(sl * bl, wl, out=child, where=valid)
    rterm = np.zeros(cut.size, dtype=np.float64)
    np.divide(sr * br, wr, out=rterm, where=valid)
    quality = parent - 2.0 * (child + rterm) / total
    quality[~valid] = -np.inf
    i = int(np.argmax(quality))
    if not np.isfinite(quality[i]):
        return None
    threshold = 0.5 * (xs[cut[i]] + xs[cut[i] + 1])
    return float(quality[i]), threshold


def _class_weights(y, w):
    ws = np.where(y == 1, w, 0.0)
    return ws, w - ws


def best_split_exhaustive(X, y, w, candidate_features, min_quality: float = 0.0):
    """Highest-gain (feature, threshold) over all midpoints of the candidates.

    Ties break toward the lowest feature index, then the lowest
    threshold.  Returns None when no admissible split improves on
    ``min_quality``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    w = np.asarray(w, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("no rows to split")
    candidate_features = sorted(candidate_features)
    if not candidate_features:
        raise ValueError("no candidate features")
    ws, wb = _class_weights(y, w)
    total_s, total_b = float(ws.sum()), float(wb.sum())
    best = None
    for f in candidate_features:
        found = _scan_feature(X[:, f], ws, wb, total_s, total_b)
        if found is None:
            continue
        quality, threshold = found
        if best is None or quality > best.quality:
            best = SplitCandidate(int(f), threshold, quality)
    if best is None or best.quality <= min_quality:
        return None
    return best


def _draw_open(rng, lo: float, hi: float) -> float:
    # uniform on the open interval; endpoint hits have probability ~0 but
    # would break the both-children-nonempty guarantee
    while True:
        t = rng.uniform(lo, hi)
        if lo < t < hi:
            return t


def _random_scan(X, idx, ws_sub, wb_sub, node_s, node_b, k, n_feat, rng):
    """Core of the random candidate search over the rows selected by ``idx``."""
    total = node_s + node_b
    parent = 2.0 * node_s * node_b / (total * total)
    features = np.sort(rng.choice(n_feat, size=k, replace=False))
    best = None
    for f in features:
        col = X[idx, f]
        lo, hi = float(col.min()), float(col.max())
        if not hi > lo:
            continue
        threshold = _draw_open(rng, lo, hi)
        go_left = col <= threshold
        sl, bl = float(ws_sub[go_left].sum()), float(wb_sub[go_left].sum())
        wl = sl + bl
        wr = total - wl
        if wl <= 0 or wr <= 0:
            continue
        sr, br = node_s - sl, node_b - bl
        quality = parent - 2.0 * (sl * bl / wl + sr * br / wr) / total
        if best is None or quality > best.quality:
            best = SplitCandidate(int(f), threshold, quality)
    return best


def random_split(X, y, w, k: int, rng):
    """Best of K random (feature, threshold) candidates by Gini gain.

    K distinct features are sampled uniformly; each contributes one
    threshold drawn uniformly from the open range of its values.
    Constant features contribute no candidate; returns None when every
    candidate is inadmissible.  Deterministic for a fixed generator state.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    w = np.asarray(w, dtype=np.float64)
    n, n_feat = X.shape
    if n == 0:
        raise ValueError("no rows to split")
    if not 1 <= k <= n_feat:
        raise ValueError(f"k must be in [1, {n_feat}], got {k}")
    ws, wb = _class_weights(y, w)
    return _random_scan(
        X, np.arange(n), ws, wb, float(ws.sum()), float(wb.sum()), k, n_feat, rng
    )


def fit_tree(X, y, w, config: TreeConfig, counts=None, rng=None) -> DecisionTree:
    """Recursively partition a weighted sample into a decision tree.

    A node becomes a leaf when it is pure in weight, the depth limit is
    reached, it holds fewer rows than ``min_samples_split``, or its best
    split does not beat ``min_quality``.  ``counts`` gives per-row
    multiplicities (bootstrap copies) that feed the row-count rule; the
    weights ``w`` are assumed to already include any multiplicity factor.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    w = np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("features must be a nonempty 2-d array")
    n, n_feat = X.shape
    if y.shape != (n,) or w.shape != (n,):
        raise ValueError("labels and weights must match the number of rows")
    if w.min() < 0:
        raise ValueError("weights must be non-negative")
    if w.sum() <= 0:
        raise ValueError("total weight must be positive")
    if counts is None:
        counts = np.ones(n, dtype=np.int64)
    else:
        counts = np.asarray(counts, dtype=np.int64)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)

    ws, wb = _class_weights(y, w)
    if config.split_mode == RANDOM_K:
        k = config.k_features if config.k_features is not None else max(1, math.isqrt(n_feat))
        if k > n_feat:
            raise ValueError(f"k_features {k} exceeds feature count {n_feat}")
    else:
        k = config.k_features
        if k is not None and k > n_feat:
            raise ValueError(f"k_features {k} exceeds feature count {n_feat}")
    all_features = np.arange(n_feat)

    def build(idx, depth):
        ws_sub = ws[idx]
        wb_sub = wb[idx]
        node_s = float(ws_sub.sum())
        node_b = float(wb_sub.sum())
        if (
            node_s == 0.0
            or node_b == 0.0
            or depth >= config.max_depth
            or counts[idx].sum() < config.min_samples_split
        ):
            return TreeNode(node_s, node_b)

        if config.split_mode == EXHAUSTIVE:
            feats = all_features if k is None else np.sort(rng.choice(n_feat, size=k, replace=False))
            best = None
            for f in feats:
                found = _scan_feature(X[idx, f], ws_sub, wb_sub, node_s, node_b)
                if found is None:
                    continue
                quality, threshold = found
                if best is None or quality > best.quality:
                    best = SplitCandidate(int(f), threshold, quality)
        else:
            best = _random_scan(X, idx, ws_sub, wb_sub, node_s, node_b, k, n_feat, rng)

        if best is None or best.quality <= config.min_quality:
            return TreeNode(node_s, node_b)
        go_left = X[idx, best.feature_index] <= best.threshold
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        return TreeNode(
            node_s,
            node_b,
            feature=best.feature_index,
            threshold=best.threshold,
            left=left,
            right=right,
        )

    root = build(np.arange(n), 0)
    return DecisionTree(root, n_feat, config)


def predict_score(tree: DecisionTree, x) -> float:
    """Leaf signal proportion for one feature vector."""
    return tree.predict_score(x)
