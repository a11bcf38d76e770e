"""Quantile binning of numeric features and one-hot encoding.

A fitted BinningScheme maps every raw feature to a block of one-hot
columns: one column per bin for numeric features (equal-frequency edges
with duplicates collapsed) and one column per training category plus a
reserved UNKNOWN column for categoricals. Encoder scores are numeric
features named "score:<encoder>".
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from erd.features import GROUP1_NUMERIC, GROUP2_CATEGORICAL, GROUP2_NUMERIC

UNKNOWN = "__UNKNOWN__"
ALL_GROUPS = frozenset({"g1", "g2", "g3"})
SCORE_PREFIX = "score:"


def _select_features(groups, score_names) -> tuple[list[str], list[str]]:
    """(numeric feature names, categorical feature names) for a group
    selection, in canonical order."""
    groups = frozenset(groups)
    unknown = groups - ALL_GROUPS
    if unknown:
        raise ValueError(f"unknown feature groups: {sorted(unknown)}")
    if not groups:
        raise ValueError("empty feature-group selection")
    numeric: list[str] = []
    categorical: list[str] = []
    if "g1" in groups:
        numeric.extend(GROUP1_NUMERIC)
    if "g2" in groups:
        numeric.extend(GROUP2_NUMERIC)
        categorical.extend(GROUP2_CATEGORICAL)
    if "g3" in groups:
        numeric.extend(SCORE_PREFIX + name for name in sorted(score_names))
    return numeric, categorical


def _raw_value(fv, feature: str):
    try:
        if feature.startswith(SCORE_PREFIX):
            return fv.scores[feature[len(SCORE_PREFIX):]]
        if feature in fv.numeric:
            return fv.numeric[feature]
        return fv.categorical[feature]
    except KeyError:
        raise KeyError(
            f"feature {feature!r} missing from vector {fv.resource_id!r}"
        ) from None


@dataclass
class BinningScheme:
    numeric_features: list[str]
    categorical_features: list[str]
    edges: dict[str, list[float]]          # interior edges, strictly increasing
    vocab: dict[str, list[str]]            # sorted training categories
    column_vocab: list[tuple[str, str]] = field(default_factory=list)
    _offsets: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.column_vocab:
            self._build_columns()
        else:
            self._index_columns()

    def _build_columns(self):
        self.column_vocab = []
        for f in self.numeric_features:
            self._offsets[f] = len(self.column_vocab)
            for i in range(len(self.edges[f]) + 1):
                self.column_vocab.append((f, f"bin{i}"))
        for f in self.categorical_features:
            self._offsets[f] = len(self.column_vocab)
            for cat in self.vocab[f]:
                self.column_vocab.append((f, cat))
            self.column_vocab.append((f, UNKNOWN))

    def _index_columns(self):
        self._offsets = {}
        for i, (f, _) in enumerate(self.column_vocab):
            self._offsets.setdefault(f, i)

    @property
    def n_columns(self) -> int:
        return len(self.column_vocab)

    @property
    def features(self) -> list[str]:
        return self.numeric_features + self.categorical_features

    def column_name(self, index: int) -> str:
        f, b = self.column_vocab[index]
        return f"{f}::{b}"

    def to_dict(self) -> dict:
        return {
            "numeric": [
                {"feature": f, "edges": self.edges[f]} for f in self.numeric_features
            ],
            "categorical": [
                {"feature": f, "vocab": self.vocab[f]}
                for f in self.categorical_features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinningScheme":
        return cls(
            numeric_features=[e["feature"] for e in d["numeric"]],
            categorical_features=[e["feature"] for e in d["categorical"]],
            edges={e["feature"]: list(e["edges"]) for e in d["numeric"]},
            vocab={e["feature"]: list(e["vocab"]) for e in d["categorical"]},
        )


def fit_binning(train_features, n_bins: int = 10, groups=ALL_GROUPS) -> BinningScheme:
    """Fit equal-frequency bin edges and category vocabularies.

    Interior edges sit at the i/n_bins quantiles (lower interpolation)
    of the training values; duplicate edges collapse and edges equal to
    the feature maximum are dropped, so a constant feature yields a
    single bin. Values at or below an edge fall in the lower bin.
    """
    train_features = list(train_features)
    if not train_features:
        raise ValueError("train_features is empty")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")

    score_names: set[str] = set(train_features[0].scores)
    for fv in train_features:
        if set(fv.scores) != score_names:
            raise ValueError(
                f"inconsistent score features on {fv.resource_id!r}: "
                f"{sorted(fv.scores)} vs {sorted(score_names)}"
            )
    numeric, categorical = _select_features(groups, score_names)

    edges: dict[str, list[float]] = {}
    for f in numeric:
        values = np.sort(
            np.asarray([float(_raw_value(fv, f)) for fv in train_features])
        )
        vmax = values[-1]
        qs = [
            float(values[int(np.floor(i / n_bins * (len(values) - 1)))])
            for i in range(1, n_bins)
        ]
        uniq: list[float] = []
        for q in qs:
            if q < vmax and (not uniq or q > uniq[-1]):
                uniq.append(q)
        edges[f] = uniq

    vocab = {
        f: sorted({str(_raw_value(fv, f)) for fv in train_features})
        for f in categorical
    }
    return BinningScheme(numeric, categorical, edges, vocab)


def encode(fv, scheme: BinningScheme) -> np.ndarray:
    """Active column index per raw feature, ascending. Out-of-range
    numerics clamp into the boundary bins; unseen categories hit the
    UNKNOWN column. A feature missing from fv is a hard error."""
    row = np.empty(len(scheme.features), dtype=np.int64)
    k = 0
    for f in scheme.numeric_features:
        value = float(_raw_value(fv, f))
        row[k] = scheme._offsets[f] + bisect_left(scheme.edges[f], value)
        k += 1
    for f in scheme.categorical_features:
        value = str(_raw_value(fv, f))
        cats = scheme.vocab[f]
        pos = bisect_left(cats, value)
        if pos < len(cats) and cats[pos] == value:
            row[k] = scheme._offsets[f] + pos
        else:
            row[k] = scheme._offsets[f] + len(cats)  # UNKNOWN
        k += 1
    return row


@dataclass
class DesignMatrix:
    rows: np.ndarray           # (n, raw features) active column indices
    n_columns: int
    labels: np.ndarray | None = None  # uint8 when present

    @classmethod
    def from_vectors(cls, vectors, scheme: BinningScheme, labels=None) -> "DesignMatrix":
        rows = np.stack([encode(fv, scheme) for fv in vectors]) if vectors else (
            np.empty((0, len(scheme.features)), dtype=np.int64)
        )
        lab = None
        if labels is not None:
            lab = np.asarray(labels, dtype=np.uint8)
            if lab.shape[0] != rows.shape[0]:
                raise ValueError("labels length does not match rows")
        return cls(rows=rows, n_columns=scheme.n_columns, labels=lab)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows.shape[0], self.n_columns), dtype=np.uint8)
        if self.rows.size:
            dense[np.arange(self.rows.shape[0])[:, None], self.rows] = 1
        return dense
