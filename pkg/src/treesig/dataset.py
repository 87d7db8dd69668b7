"""Event data handling: CSV loading, splits, sentinel masking, imputation, weights.

A :class:`Dataset` is an immutable column store of events.  Every event
carries an importance weight: the per-class weight sums estimate the
expected numbers of signal and background events, so all downstream
metrics consume weights rather than counts.  Raw cells equal to the
sentinel value are recorded in ``undefined_mask`` and are expected to be
imputed (from training-split statistics only) before model fitting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

SENTINEL = -999.0

SIGNAL = 1
BACKGROUND = 0


class Provenance(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Event:
    """One event: identifier, feature vector, importance weight, class label."""

    event_id: int
    features: np.ndarray
    weight: float
    label: int


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns to roles.

    ``features`` lists the feature columns explicitly; when None, every
    column not otherwise mapped or ignored is a feature.  Label tokens
    are configurable so files with alternate class spellings still load.
    When ``split`` names a column, its tokens are translated through
    ``split_mapping`` and retained on the dataset for partitioning.
    """

    id: str = "EventId"
    weight: str = "Weight"
    label: str = "Label"
    split: str | None = None
    features: tuple[str, ...] | None = None
    ignore: tuple[str, ...] = ()
    signal_tokens: tuple[str, ...] = ("s",)
    background_tokens: tuple[str, ...] = ("b",)
    split_mapping: Mapping[str, Provenance] = field(
        default_factory=lambda: {
            "t": Provenance.TRAIN,
            "b": Provenance.VALIDATION,
            "v": Provenance.TEST,
        }
    )


def higgs_challenge_schema() -> ColumnSchema:
    """Schema for the public CERN Open Data challenge CSV.

    Uses the per-subset weight column, whose class sums are kept fixed
    across the training, validation, and test subsets, and the subset
    column for provenance.  The original full-sample weight column is
    ignored.
    """
    return ColumnSchema(
        id="EventId",
        weight="KaggleWeight",
        label="Label",
        split="KaggleSet",
        ignore=("Weight",),
    )


@dataclass(frozen=True)
class Dataset:
    """Immutable weighted event sample.

    Arrays are marked read-only after construction, so a Dataset can be
    shared freely across worker processes and threads.
    """

    event_ids: np.ndarray
    features: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    undefined_mask: np.ndarray
    feature_names: tuple[str, ...]
    provenance: Provenance = Provenance.CUSTOM
    split_labels: np.ndarray | None = None

    def __post_init__(self):
        n, f = self.features.shape
        if len(self.feature_names) != f:
            raise ValueError(
                f"{len(self.feature_names)} feature names for {f} feature columns"
            )
        for name, arr, shape in (
            ("event_ids", self.event_ids, (n,)),
            ("weights", self.weights, (n,)),
            ("labels", self.labels, (n,)),
            ("undefined_mask", self.undefined_mask, (n, f)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if n and self.weights.min() < 0:
            i = int(np.argmin(self.weights))
            raise ValueError(f"negative weight {self.weights[i]!r} at event index {i}")
        for arr in (
            self.event_ids,
            self.features,
            self.weights,
            self.labels,
            self.undefined_mask,
        ):
            arr.setflags(write=False)
        if self.split_labels is not None:
            self.split_labels.setflags(write=False)

    @classmethod
    def from_arrays(
        cls,
        features,
        labels,
        weights=None,
        event_ids=None,
        feature_names=None,
        provenance: Provenance = Provenance.CUSTOM,
    ) -> "Dataset":
        """Build a dataset from plain arrays; cells equal to the sentinel are masked."""
        x = np.ascontiguousarray(features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d array")
        n, f = x.shape
        y = np.asarray(labels, dtype=np.int8)
        w = (
            np.ones(n, dtype=np.float64)
            if weights is None
            else np.asarray(weights, dtype=np.float64).copy()
        )
        ids = (
            np.arange(n, dtype=np.int64)
            if event_ids is None
            else np.asarray(event_ids, dtype=np.int64).copy()
        )
        names = (
            tuple(f"f{j}" for j in range(f))
            if feature_names is None
            else tuple(feature_names)
        )
        return cls(ids, x, w, y.copy(), x == SENTINEL, names, provenance)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def event(self, i: int) -> Event:
        return Event(
            int(self.event_ids[i]),
            self.features[i],
            float(self.weights[i]),
            int(self.labels[i]),
        )

    @property
    def signal_mask(self) -> np.ndarray:
        return self.labels == SIGNAL

    @property
    def weight_signal_total(self) -> float:
        return float(self.weights[self.signal_mask].sum())

    @property
    def weight_background_total(self) -> float:
        return float(self.weights[~self.signal_mask].sum())


@dataclass(frozen=True)
class BalancedWeights:
    """Per-event weights rescaled so each class sums to one half."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)


def _parse_header(header: Sequence[str], schema: ColumnSchema) -> tuple[dict, list[str]]:
    seen: dict[str, int] = {}
    for j, name in enumerate(header):
        if name in seen:
            raise ValueError(f"duplicate header column {name!r} at columns {seen[name]} and {j}")
        seen[name] = j
    required = [schema.id, schema.weight, schema.label]
    if schema.split is not None:
        required.append(schema.split)
    for name in required:
        if name not in seen:
            raise ValueError(f"missing required header column {name!r}")
    reserved = set(required) | set(schema.ignore)
    if schema.features is None:
        feature_names = [name for name in header if name not in reserved]
    else:
        feature_names = list(schema.features)
        for name in feature_names:
            if name not in seen:
                raise ValueError(f"missing feature column {name!r}")
            if name in reserved:
                raise ValueError(f"column {name!r} is mapped to both a role and a feature")
    if not feature_names:
        raise ValueError("schema leaves no feature columns")
    return seen, feature_names


def load_csv(path, schema: ColumnSchema | None = None) -> Dataset:
    """Load a headered CSV of weighted labelled events.

    Cell values equal to the sentinel are flagged in ``undefined_mask``
    and left in place for :func:`impute_median` to replace.  Weight and
    label columns are never exposed as features.  Malformed cells are
    reported with their row number (1-based, header excluded) and column
    name.
    """
    if schema is None:
        schema = ColumnSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        col_index, feature_names = _parse_header(header, schema)
        feat_cols = [col_index[name] for name in feature_names]
        id_col = col_index[schema.id]
        w_col = col_index[schema.weight]
        y_col = col_index[schema.label]
        s_col = col_index[schema.split] if schema.split is not None else None
        sig = set(schema.signal_tokens)
        bkg = set(schema.background_tokens)

        ids: list[int] = []
        feats: list[list[float]] = []
        weights: list[float] = []
        labels: list[int] = []
        splits: list[str] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValueError(
                    f"row {row_no}: {len(row)} cells, header has {len(header)}"
                )
            try:
                feats.append([float(row[c]) for c in feat_cols])
            except ValueError:
                for c in feat_cols:
                    try:
                        float(row[c])
                    except ValueError:
                        raise ValueError(
                            f"row {row_no}, column {header[c]!r}: "
                            f"non-numeric feature cell {row[c]!r}"
                        ) from None
                raise
            try:
                w = float(row[w_col])
            except ValueError:
                raise ValueError(
                    f"row {row_no}, column {schema.weight!r}: "
                    f"non-numeric weight {row[w_col]!r}"
                ) from None
            if w < 0:
                raise ValueError(
                    f"row {row_no}, column {schema.weight!r}: negative weight {w!r}"
                )
            token = row[y_col]
            if token in sig:
                labels.append(SIGNAL)
            elif token in bkg:
                labels.append(BACKGROUND)
            else:
                raise ValueError(
                    f"row {row_no}, column {schema.label!r}: unknown label token {token!r}"
                )
            try:
                ids.append(int(float(row[id_col])))
            except ValueError:
                raise ValueError(
                    f"row {row_no}, column {schema.id!r}: bad event id {row[id_col]!r}"
                ) from None
            weights.append(w)
            if s_col is not None:
                prov = schema.split_mapping.get(row[s_col])
                splits.append(prov.value if prov is not None else "")

    x = np.asarray(feats, dtype=np.float64)
    if x.size == 0:
        x = x.reshape(0, len(feature_names))
    return Dataset(
        event_ids=np.asarray(ids, dtype=np.int64),
        features=x,
        weights=np.asarray(weights, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int8),
        undefined_mask=x == SENTINEL,
        feature_names=tuple(feature_names),
        provenance=Provenance.CUSTOM,
        split_labels=np.asarray(splits, dtype=object) if s_col is not None else None,
    )


def select_rows(d: Dataset, rows, provenance: Provenance = Provenance.CUSTOM) -> Dataset:
    """Row subset as a new Dataset, preserving event order of ``rows``."""
    rows = np.asarray(rows)
    return Dataset(
        event_ids=d.event_ids[rows].copy(),
        features=d.features[rows].copy(),
        weights=d.weights[rows].copy(),
        labels=d.labels[rows].copy(),
        undefined_mask=d.undefined_mask[rows].copy(),
        feature_names=d.feature_names,
        provenance=provenance,
        split_labels=d.split_labels[rows].copy() if d.split_labels is not None else None,
    )


def partition_by_split(d: Dataset) -> dict[Provenance, Dataset]:
    """Partition on the split column recorded at load time.

    Rows whose split token was not mapped (for example unused events in
    the public file) appear in no part.  Event order is preserved within
    each part.
    """
    if d.split_labels is None:
        raise ValueError("dataset carries no split column; use select_rows instead")
    out: dict[Provenance, Dataset] = {}
    for prov in (Provenance.TRAIN, Provenance.VALIDATION, Provenance.TEST):
        rows = np.nonzero(d.split_labels == prov.value)[0]
        if rows.size:
            out[prov] = select_rows(d, rows, provenance=prov)
    return out


def feature_medians(train: Dataset) -> np.ndarray:
    """Per-feature median over the defined cells of the training sample.

    Raises if a feature has no defined cell at all, naming the feature.
    """
    if len(train) == 0:
        raise ValueError("cannot compute medians of an empty dataset")
    medians = np.empty(train.n_features, dtype=np.float64)
    for j, name in enumerate(train.feature_names):
        defined = ~train.undefined_mask[:, j]
        if not defined.any():
            raise ValueError(f"feature {name!r} is undefined in every training row")
        medians[j] = np.median(train.features[defined, j])
    return medians


def apply_imputation(d: Dataset, medians: np.ndarray) -> Dataset:
    """Replace undefined cells with the given per-feature values.

    The undefined mask is preserved for audit; defined cells are
    bit-identical to the input.
    """
    if medians.shape != (d.n_features,):
        raise ValueError("medians length does not match feature count")
    if not d.undefined_mask.any():
        return d
    x = d.features.copy()
    rows, cols = np.nonzero(d.undefined_mask)
    x[rows, cols] = medians[cols]
    return replace(d, features=x, undefined_mask=d.undefined_mask.copy())


def impute_median(train: Dataset, targets: Sequence[Dataset]) -> list[Dataset]:
    """Impute undefined cells in ``targets`` with medians fitted on ``train`` only.

    Statistics never come from validation or test data: include ``train``
    itself in ``targets`` to obtain its imputed version.
    """
    for t in targets:
        if t.feature_names != train.feature_names:
            raise ValueError("imputation targets must share the training feature names")
    medians = feature_medians(train)
    return [apply_imputation(t, medians) for t in targets]


def rebalance_weights(d: Dataset) -> BalancedWeights:
    """Rescale weights so signal and background each sum to exactly 0.5.

    Signal weights are divided by twice the signal total, background
    weights by twice the background total, which penalises misclassified
    signals as severely as misclassified background.
    """
    ns = d.weight_signal_total
    nb = d.weight_background_total
    if ns <= 0:
        raise ValueError("signal class has zero total weight")
    if nb <= 0:
        raise ValueError("background class has zero total weight")
    w = np.where(d.signal_mask, d.weights / (2.0 * ns), d.weights / (2.0 * nb))
    return BalancedWeights(weights=w)


def summary(d: Dataset) -> dict:
    """Counts, class weight totals, and per-feature statistics as a JSON-able record."""
    sig = d.signal_mask
    record = {
        "n": len(d),
        "n_signal": int(sig.sum()),
        "n_background": int((~sig).sum()),
        "weight_signal_total": d.weight_signal_total,
        "weight_background_total": d.weight_background_total,
        "features": {},
    }
    for j, name in enumerate(d.feature_names):
        defined = ~d.undefined_mask[:, j]
        col = d.features[defined, j]
        record["features"][name] = {
            "undefined_fraction": float(d.undefined_mask[:, j].mean()) if len(d) else 0.0,
            "min": float(col.min()) if col.size else None,
            "max": float(col.max()) if col.size else None,
            "median": float(np.median(col)) if col.size else None,
        }
    return record
