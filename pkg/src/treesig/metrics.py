"""Evaluation mathematics for weighted event selection.

The selection region of a scored sample is the set of events whose
score strictly exceeds a threshold.  The weighted true and false
positives inside it feed the median-significance figure of merit

    sqrt(2 ((s + b) ln(1 + s/b) - s))

and its large-background simplification s / sqrt(b).  Everything here is
a pure function of arrays, safe to call concurrently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightedConfusion:
    """Confusion quantities as raw-weight sums alongside plain counts."""

    tp_w: float
    fp_w: float
    fn_w: float
    tn_w: float
    tp_n: int
    fp_n: int
    fn_n: int
    tn_n: int

    @property
    def shat(self) -> float:
        return self.tp_w

    @property
    def bhat(self) -> float:
        return self.fp_w


@dataclass(frozen=True)
class CurvePoint:
    percentile: float
    threshold: float
    shat: float
    bhat: float
    ams: float
    ams_simple: float


def _as_signal_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return labels == 1


def confusion_weighted(scores, labels, raw_weights, threshold: float) -> WeightedConfusion:
    """Weighted confusion table for the selection {score > threshold}."""
    scores = np.asarray(scores, dtype=np.float64)
    w = np.asarray(raw_weights, dtype=np.float64)
    sig = _as_signal_mask(labels)
    if not (scores.shape == w.shape == sig.shape):
        raise ValueError("scores, labels, and weights must have equal lengths")
    selected = scores > threshold
    tp = selected & sig
    fp = selected & ~sig
    fn = ~selected & sig
    tn = ~selected & ~sig
    return WeightedConfusion(
        tp_w=float(w[tp].sum()),
        fp_w=float(w[fp].sum()),
        fn_w=float(w[fn].sum()),
        tn_w=float(w[tn].sum()),
        tp_n=int(tp.sum()),
        fp_n=int(fp.sum()),
        fn_n=int(fn.sum()),
        tn_n=int(tn.sum()),
    )


def ams_full(shat: float, bhat: float) -> float:
    """Median discovery significance sqrt(2 ((s + b) ln(1 + s/b) - s)), in sigmas."""
    if bhat <= 0:
        raise ValueError(f"selected background weight must be positive, got {bhat!r}")
    if shat < 0:
        raise ValueError(f"selected signal weight must be non-negative, got {shat!r}")
    return math.sqrt(2.0 * ((shat + bhat) * math.log1p(shat / bhat) - shat))


def ams_simple(shat: float, bhat: float) -> float:
    """Large-background simplification s / sqrt(b)."""
    if bhat <= 0:
        raise ValueError(f"selected background weight must be positive, got {bhat!r}")
    return shat / math.sqrt(bhat)


def balanced_error(predictions, truth, balanced) -> float:
    """Misclassified balanced weight; 0 for perfect, 0.5 for one class all wrong."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    w = balanced.weights if hasattr(balanced, "weights") else np.asarray(balanced)
    if not (predictions.shape == truth.shape == w.shape):
        raise ValueError("predictions, truth, and weights must have equal lengths")
    return float(w[predictions != truth].sum())


def threshold_at_percentile(scores, percentile: float) -> float:
    """Nearest-rank empirical percentile of the scores.

    Returns the value at 1-based rank ceil(percentile / 100 * n) of the
    sorted scores; the induced selection is the strictly greater scores,
    so equal scores never straddle the cut.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    if not 0.0 < percentile < 100.0:
        raise ValueError(f"percentile must be in (0, 100), got {percentile!r}")
    n = scores.size
    # multiply before dividing and shave float noise so integer ranks stay exact
    rank = math.ceil(round(percentile * n / 100.0, 9))
    rank = min(max(rank, 1), n)
    return float(np.sort(scores, kind="stable")[rank - 1])


def significance_curve(scores, labels, raw_weights, percentile_grid):
    """One curve point per percentile, plus the best point.

    Each point evaluates the weighted confusion at the nearest-rank
    threshold.  An empty-background selection has infinite significance
    when it holds signal weight and zero otherwise; ties on significance
    break toward the larger selected signal weight.
    """
    points = []
    for percentile in percentile_grid:
        thr = threshold_at_percentile(scores, percentile)
        c = confusion_weighted(scores, labels, raw_weights, thr)
        if c.bhat > 0:
            full = ams_full(c.shat, c.bhat)
            simple = ams_simple(c.shat, c.bhat)
        else:
            full = math.inf if c.shat > 0 else 0.0
            simple = full
        points.append(
            CurvePoint(
                percentile=float(percentile),
                threshold=thr,
                shat=c.shat,
                bhat=c.bhat,
                ams=full,
                ams_simple=simple,
            )
        )
    best = max(points, key=lambda p: (p.ams, p.shat))
    return points, best


def roc_curve(scores, labels, raw_weights):
    """Weighted ROC points (fpr, tpr) from (0, 0) to (1, 1).

    The threshold sweeps the distinct scores in descending order, so
    events with equal scores enter the selection together and each
    produces one step of the curve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    w = np.asarray(raw_weights, dtype=np.float64)
    sig = _as_signal_mask(labels)
    if not (scores.shape == w.shape == sig.shape):
        raise ValueError("scores, labels, and weights must have equal lengths")
    pos = float(w[sig].sum())
    neg = float(w[~sig].sum())
    if pos <= 0 or neg <= 0:
        raise ValueError("roc requires positive weight in both classes")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    tp = np.cumsum(np.where(sig[order], w[order], 0.0))
    fp = np.cumsum(np.where(sig[order], 0.0, w[order]))
    # keep only the last index of each tied block of scores
    last = np.nonzero(np.diff(s_sorted) != 0)[0]
    steps = np.append(last, len(s_sorted) - 1)
    curve = np.empty((steps.size + 1, 2), dtype=np.float64)
    curve[0] = (0.0, 0.0)
    curve[1:, 0] = fp[steps] / neg
    curve[1:, 1] = tp[steps] / pos
    curve[-1] = (1.0, 1.0)
    return curve


def auc(scores, labels, raw_weights) -> float:
    """Trapezoid area under the weighted ROC curve, in [0, 1]."""
    curve = roc_curve(scores, labels, raw_weights)
    return float(np.trapz(curve[:, 1], curve[:, 0]))


def lr_plus(c: WeightedConfusion) -> float:
    """Positive likelihood ratio TPR / FPR of a confusion table."""
    pos = c.tp_w + c.fn_w
    neg = c.fp_w + c.tn_w
    if pos <= 0 or neg <= 0:
        raise ValueError("both classes need positive total weight")
    if c.fp_w <= 0:
        raise ValueError("LR+ is infinite: the selection holds no background weight")
    return (c.tp_w / pos) / (c.fp_w / neg)


_SQRT2 = math.sqrt(2.0)


def sigma_to_pvalue(z: float) -> float:
    """One-sided Gaussian tail probability p = 1 - Phi(z)."""
    return 0.5 * math.erfc(z / _SQRT2)


def pvalue_to_sigma(p: float) -> float:
    """Inverse of :func:`sigma_to_pvalue` by bisection plus Newton polish."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p!r}")
    lo, hi = -40.0, 40.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if sigma_to_pvalue(mid) > p:
            lo = mid
        else:
            hi = mid
    z = 0.5 * (lo + hi)
    for _ in range(4):
        density = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        if density == 0.0:
            break
        z -= (p - sigma_to_pvalue(z)) / density
    return z


def write_curve_csv(points, path) -> None:
    """Significance-curve export: percentile, threshold, shat, bhat, ams, ams_simple."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["percentile", "threshold", "shat", "bhat", "ams", "ams_simple"])
        for p in points:
            writer.writerow(
                [repr(p.percentile), repr(p.threshold), repr(p.shat), repr(p.bhat),
                 repr(p.ams), repr(p.ams_simple)]
            )


def write_roc_csv(curve, path) -> None:
    """ROC export: fpr, tpr rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in curve:
            writer.writerow([repr(float(fpr)), repr(float(tpr))])
