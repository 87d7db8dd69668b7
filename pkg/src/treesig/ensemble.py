"""Bagged tree ensembles: random forests and extremely randomized trees.

Both flavors fit trees on bootstrap resamples and average the per-tree
leaf scores.  A forest searches exhaustively over a fresh random subset
of floor(sqrt(F)) features at every node; the extremely randomized
flavor instead keeps the best of K random (feature, threshold) draws.
Bootstrap multiplicity is folded into the sample weights (with the
multiplicities retained as row counts), which is the same arithmetic as
duplicating rows.

Each tree derives its own random stream from (ensemble seed, tree
index), so training is reproducible and may run across worker processes
with results bit-identical to a sequential run.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .tree import EXHAUSTIVE, RANDOM_K, DecisionTree, TreeConfig, fit_tree

RANDOM_FOREST = "rf"
EXTRA_TREES = "et"


@dataclass(frozen=True)
class EnsembleConfig:
    n_trees: int = 100
    flavor: str = RANDOM_FOREST
    tree: TreeConfig = field(default_factory=TreeConfig)
    bootstrap: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.flavor not in (RANDOM_FOREST, EXTRA_TREES):
            raise ValueError(f"unknown flavor {self.flavor!r}")


class EnsembleModel:
    """Fitted bag of trees plus per-tree inbag multiplicities."""

    def __init__(self, trees, per_tree_inbag, flavor, n_features, config=None):
        self.trees = list(trees)
        self.per_tree_inbag = per_tree_inbag
        self.flavor = flavor
        self.n_features = n_features
        self.config = config

    def __len__(self) -> int:
        return len(self.trees)

    def score(self, x) -> float:
        return float(np.mean([t.predict_score(x) for t in self.trees]))

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for t in self.trees:
            acc += t.predict_scores(X)
        return acc / len(self.trees)

    def tree_score_matrix(self, X, tree_indices=None) -> np.ndarray:
        idx = range(len(self.trees)) if tree_indices is None else tree_indices
        X = np.asarray(X, dtype=np.float64)
        return np.vstack([self.trees[i].predict_scores(X) for i in idx])


def bootstrap_sample(n: int, rng) -> np.ndarray:
    """n indices drawn uniformly with replacement from [0, n)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return rng.integers(0, n, size=n)


def _effective_tree_config(cfg: EnsembleConfig, n_features: int) -> TreeConfig:
    k = cfg.tree.k_features
    if k is None:
        k = max(1, math.isqrt(n_features))
    mode = EXHAUSTIVE if cfg.flavor == RANDOM_FOREST else RANDOM_K
    return replace(cfg.tree, split_mode=mode, k_features=k)


def _fit_one_tree(X, y, sample_weights, tree_cfg, bootstrap, seed, tree_index):
    # stream depends only on (ensemble seed, tree index), never on scheduling
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))
    n = X.shape[0]
    if bootstrap:
        idx = bootstrap_sample(n, rng)
        counts = np.bincount(idx, minlength=n)
        weights = sample_weights * counts
        tree = fit_tree(X, y, weights, tree_cfg, counts=counts, rng=rng)
        return tree, counts.astype(np.int32)
    tree = fit_tree(X, y, sample_weights, tree_cfg, rng=rng)
    return tree, None


_WORK = {}


def _init_worker(X, y, sample_weights, tree_cfg, bootstrap):
    _WORK["args"] = (X, y, sample_weights, tree_cfg, bootstrap)


def _fit_task(seed_and_index):
    seed, tree_index = seed_and_index
    return _fit_one_tree(*_WORK["args"], seed, tree_index)


def fit_ensemble(data, sample_weights, cfg: EnsembleConfig, workers: int = 1) -> EnsembleModel:
    """Fit a bagged ensemble on a dataset with the given sample weights.

    ``workers`` > 1 trains trees in separate processes; because every
    tree is a pure function of its derived seed, the result is identical
    to the sequential run.
    """
    X = data.features
    y = np.asarray(data.labels)
    sample_weights = np.asarray(sample_weights, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    if sample_weights.shape != (n,):
        raise ValueError("sample_weights length must match the dataset")
    if sample_weights.min() < 0 or sample_weights.sum() <= 0:
        raise ValueError("sample weights must be non-negative with positive sum")
    tree_cfg = _effective_tree_config(cfg, X.shape[1])
    tasks = [(cfg.rng_seed, b) for b in range(cfg.n_trees)]

    if workers == 1 or cfg.n_trees == 1:
        fitted = [
            _fit_one_tree(X, y, sample_weights, tree_cfg, cfg.bootstrap, seed, b)
            for seed, b in tasks
        ]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_init_worker,
            initargs=(X, y, sample_weights, tree_cfg, cfg.bootstrap),
        ) as pool:
            fitted = list(pool.map(_fit_task, tasks, chunksize=1))

    trees = [t for t, _ in fitted]
    inbag = [c for _, c in fitted] if cfg.bootstrap else None
    return EnsembleModel(trees, inbag, cfg.flavor, X.shape[1], cfg)


def ensemble_score(m: EnsembleModel, x) -> float:
    """Arithmetic mean of the per-tree leaf scores, in [0, 1]."""
    return m.score(x)


def oob_error(m: EnsembleModel, data, balanced) -> float:
    """Balanced-weight misclassification using only out-of-bag trees.

    Each event is scored by the trees whose bootstrap omitted it; events
    in every bag are excluded, and the error is normalized by the
    balanced weight of the covered events.
    """
    if m.per_tree_inbag is None:
        raise ValueError("out-of-bag error requires an ensemble fitted with bootstrap")
    X = data.features
    n = X.shape[0]
    acc = np.zeros(n, dtype=np.float64)
    hits = np.zeros(n, dtype=np.int64)
    for tree, counts in zip(m.trees, m.per_tree_inbag):
        oob = counts == 0
        if not oob.any():
            continue
        acc[oob] += tree.predict_scores(X[oob])
        hits[oob] += 1
    covered = hits > 0
    if not covered.any():
        raise ValueError("no event is out of bag for any tree; grow more trees")
    score = acc[covered] / hits[covered]
    predicted_signal = score > 0.5
    truth_signal = np.asarray(data.labels)[covered] == 1
    w = balanced.weights[covered]
    total = float(w.sum())
    return float(w[predicted_signal != truth_signal].sum()) / total


def tree_correlation_matrix(m: EnsembleModel, data, tree_indices=None) -> np.ndarray:
    """Pearson correlation between per-tree score vectors over a dataset.

    The diagonal is one; a tree with constant scores correlates zero
    with everything else.
    """
    if len(m.trees) < 2:
        raise ValueError("correlation needs at least two trees")
    if tree_indices is None:
        tree_indices = range(min(100, len(m.trees)))
    scores = m.tree_score_matrix(data.features, tree_indices)
    return score_correlation_matrix(scores)


def score_correlation_matrix(scores: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlations with constant rows treated as uncorrelated."""
    centered = scores - scores.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    corr = unit @ unit.T
    degenerate = norms == 0
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def write_correlation_csv(matrix: np.ndarray, tree_indices, path) -> None:
    """Square correlation export with the tree indices as the header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([str(i) for i in tree_indices])
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])
