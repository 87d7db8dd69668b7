"""Adaptive boosting over tree or tree-ensemble base learners.

Stages are fitted sequentially: each base learner trains with the
current boosting weights as sample weights, votes +1/-1 per event via
its score against one half, and earns a coefficient

    alpha = 0.5 ln((1 - eps) / eps)

from its weighted error eps.  Misclassified events are then inflated so
that the stage just fitted scores exactly chance level under the new
weights, which is what forces later stages onto the hard events.  The
combined decision function is the alpha-weighted vote, normalized by the
alpha total so staged score distributions are directly comparable.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ensemble import EnsembleConfig, EnsembleModel, fit_ensemble
from .metrics import threshold_at_percentile
from .tree import DecisionTree, TreeConfig, fit_tree

INIT_BALANCED = "balanced"
INIT_UNIFORM = "uniform"

# error floor substituted when a stage classifies everything correctly,
# capping alpha instead of letting it diverge
PERFECT_STAGE_ERROR = 1e-6


@dataclass(frozen=True)
class BoostConfig:
    n_stages: int = 20
    base: EnsembleConfig | TreeConfig = field(default_factory=EnsembleConfig)
    init_weights: str = INIT_BALANCED
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_stages < 1:
            raise ValueError(f"n_stages must be >= 1, got {self.n_stages}")
        if self.init_weights not in (INIT_BALANCED, INIT_UNIFORM):
            raise ValueError(f"unknown init_weights {self.init_weights!r}")


class BoostedModel:
    """Ordered (base model, alpha) stages with their training errors."""

    def __init__(self, stages, config, n_features, stage_errors=None, stage_seconds=None):
        self.stages = list(stages)
        self.config = config
        self.n_features = n_features
        self.stage_errors = list(stage_errors or [])
        self.stage_seconds = list(stage_seconds or [])

    def __len__(self) -> int:
        return len(self.stages)

    def alphas(self) -> np.ndarray:
        return np.asarray([a for _, a in self.stages], dtype=np.float64)

    def score(self, x, upto_stage=None) -> float:
        return float(self.scores(np.asarray(x, dtype=np.float64)[None, :], upto_stage)[0])

    def scores(self, X, upto_stage=None) -> np.ndarray:
        """Normalized vote sum in [-1, 1] using the first ``upto_stage`` stages."""
        k = self._resolve_stage(upto_stage)
        X = np.asarray(X, dtype=np.float64)
        num = np.zeros(X.shape[0], dtype=np.float64)
        den = 0.0
        for base, alpha in self.stages[:k]:
            num += alpha * _votes(base, X)
            den += alpha
        return num / den

    def staged_scores(self, X) -> np.ndarray:
        """Matrix of scores after 1..M stages, one row per stage."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.vstack([_votes(base, X) for base, _ in self.stages])
        alphas = self.alphas()
        num = np.cumsum(alphas[:, None] * votes, axis=0)
        den = np.cumsum(alphas)
        return num / den[:, None]

    def predict_label(self, x, upto_stage=None) -> int:
        """1 for signal when the vote sum is positive, else 0."""
        return 1 if self.score(x, upto_stage) > 0 else 0

    def _resolve_stage(self, upto_stage) -> int:
        if upto_stage is None:
            return len(self.stages)
        if not 1 <= upto_stage <= len(self.stages):
            raise ValueError(
                f"upto_stage must be in [1, {len(self.stages)}], got {upto_stage}"
            )
        return upto_stage


def _votes(base, X) -> np.ndarray:
    """Per-event votes in {-1, +1}; a score of exactly one half votes background."""
    if isinstance(base, EnsembleModel):
        score = base.scores(X)
    else:
        score = base.predict_scores(X)
    return np.where(score > 0.5, 1.0, -1.0)


def stage_error(predictions, labels, boost_weights) -> float:
    """Weighted error sum(w_i [pred_i != y_i]) for a weight distribution."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    w = np.asarray(boost_weights, dtype=np.float64)
    if not (predictions.shape == labels.shape == w.shape):
        raise ValueError("predictions, labels, and weights must have equal lengths")
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"boost weights must sum to 1, got {total!r}")
    return float(w[predictions != labels].sum())


def alpha_from_error(eps: float) -> float:
    """Stage coefficient 0.5 ln((1 - eps) / eps).

    A perfect stage (eps <= 0) is capped at the value for the error
    floor; a stage no better than chance (eps >= 0.5) is rejected.
    """
    if eps >= 0.5:
        raise ValueError(f"stage error {eps!r} is no better than chance")
    if eps <= 0.0:
        eps = PERFECT_STAGE_ERROR
    return 0.5 * math.log((1.0 - eps) / eps)


def update_weights(boost_weights, predictions, labels, alpha: float) -> np.ndarray:
    """Inflate misclassified weights by e^alpha and renormalize to sum 1."""
    if not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha!r}")
    w = np.asarray(boost_weights, dtype=np.float64)
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if not (predictions.shape == labels.shape == w.shape):
        raise ValueError("predictions, labels, and weights must have equal lengths")
    out = np.where(predictions != labels, w * math.exp(alpha), w)
    return out / out.sum()


def _fit_base(base_cfg, data, sample_weights, seed, stage_index, workers):
    if isinstance(base_cfg, EnsembleConfig):
        cfg = replace(base_cfg, rng_seed=_stage_seed(seed, stage_index))
        return fit_ensemble(data, sample_weights, cfg, workers=workers)
    if isinstance(base_cfg, TreeConfig):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage_index,)))
        return fit_tree(data.features, data.labels, sample_weights, base_cfg, rng=rng)
    raise TypeError(f"unsupported base learner config {type(base_cfg).__name__}")


def _stage_seed(seed: int, stage_index: int) -> int:
    # fold the stage index into a fresh 63-bit seed for the stage ensemble
    return int(
        np.random.SeedSequence(seed, spawn_key=(stage_index,)).generate_state(1, np.uint64)[0]
        >> 1
    )


def fit_boosted(data, balanced, cfg: BoostConfig, workers: int = 1) -> BoostedModel:
    """Fit a staged boosted model over the configured base learner.

    Boost weights start from the balanced per-event weights (or uniform
    1/n), and each stage trains the base learner with the current
    weights, earns its alpha, and hands inflated weights to the next.
    Boosting stops early on a perfect stage or one no better than chance.
    """
    n = len(data)
    if n == 0:
        raise ValueError("dataset is empty")
    y_signed = np.where(np.asarray(data.labels) == 1, 1.0, -1.0)
    if cfg.init_weights == INIT_BALANCED:
        if balanced is None:
            raise ValueError("balanced weights are required for balanced initialization")
        w = balanced.weights / balanced.weights.sum()
    else:
        w = np.full(n, 1.0 / n)

    stages, errors, seconds = [], [], []
    for m in range(cfg.n_stages):
        t0 = time.perf_counter()
        base = _fit_base(cfg.base, data, w, cfg.rng_seed, m, workers)
        pred = _votes(base, data.features)
        eps = stage_error(pred, y_signed, w)
        if eps >= 0.5:
            break
        alpha = alpha_from_error(eps)
        stages.append((base, alpha))
        errors.append(eps)
        seconds.append(time.perf_counter() - t0)
        if eps <= 0.0:
            break
        # the miss factor e^{2 alpha} = (1 - eps)/eps drives the stage just
        # fitted to exactly chance level under the renormalized weights
        w = update_weights(w, pred, y_signed, 2.0 * alpha)

    if not stages:
        raise RuntimeError("first stage was no better than chance; nothing boosted")
    return BoostedModel(stages, cfg, data.n_features, errors, seconds)


def boosted_score(m: BoostedModel, x, upto_stage=None) -> float:
    """Normalized alpha-weighted vote in [-1, 1]."""
    return m.score(x, upto_stage)


@dataclass(frozen=True)
class StageDiagnostics:
    stage: int
    bin_edges: np.ndarray
    count_signal: np.ndarray
    count_background: np.ndarray
    wsum_signal: np.ndarray
    wsum_background: np.ndarray
    fp_count: int
    fp_wsum: float


def staged_diagnostics(m: BoostedModel, data, percentile: float, n_bins: int = 40):
    """Score histograms and selection-region false positives per stage.

    For every stage prefix: per-class count and raw-weight histograms of
    the staged score, and the count and weight of background events
    inside the top (100 - percentile) percent selection.
    """
    if not 0.0 < percentile < 100.0:
        raise ValueError(f"percentile must be in (0, 100), got {percentile!r}")
    staged = m.staged_scores(data.features)
    sig = np.asarray(data.labels) == 1
    w = data.weights
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    records = []
    for k, scores in enumerate(staged, start=1):
        threshold = threshold_at_percentile(scores, percentile)
        selected = scores > threshold
        fp = selected & ~sig
        records.append(
            StageDiagnostics(
                stage=k,
                bin_edges=edges,
                count_signal=np.histogram(scores[sig], bins=edges)[0],
                count_background=np.histogram(scores[~sig], bins=edges)[0],
                wsum_signal=np.histogram(scores[sig], bins=edges, weights=w[sig])[0],
                wsum_background=np.histogram(scores[~sig], bins=edges, weights=w[~sig])[0],
                fp_count=int(fp.sum()),
                fp_wsum=float(w[fp].sum()),
            )
        )
    return records


def write_staged_histogram_csv(records, path) -> None:
    """Per-stage histogram export: stage, bin_lo, bin_hi, count_s, count_b, wsum_s, wsum_b."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "bin_lo", "bin_hi", "count_s", "count_b", "wsum_s", "wsum_b"])
        for r in records:
            for i in range(len(r.count_signal)):
                writer.writerow(
                    [
                        r.stage,
                        repr(float(r.bin_edges[i])),
                        repr(float(r.bin_edges[i + 1])),
                        int(r.count_signal[i]),
                        int(r.count_background[i]),
                        repr(float(r.wsum_signal[i])),
                        repr(float(r.wsum_background[i])),
                    ]
                )


def write_staged_fp_csv(records, path) -> None:
    """Selection-region false-positive export: stage, fp_count, fp_wsum."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "fp_count", "fp_wsum"])
        for r in records:
            writer.writerow([r.stage, r.fp_count, repr(r.fp_wsum)])
