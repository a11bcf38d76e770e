"""Random forests of CART trees with Gini feature importance.

Each tree draws its own RNG stream from (seed, tree index), so training
is schedule-independent: the same seed gives the same forest no matter
how trees are ordered or parallelized. Importances accumulate the
size-weighted impurity decrease per column over all trees, normalized
to sum 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from erd.classifier.binning import BinningScheme, DesignMatrix, encode
from erd.ioutil import atomic_write_text
from erd.classifier.tree import (
    DecisionTree,
    TreeNode,
    TreeParams,
    ensure_recursion_room,
    grow_tree,
)

MODEL_FORMAT = "erd-forest"
MODEL_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None = ceil(sqrt(columns))
    bootstrap: bool = True
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**d)


@dataclass
class RandomForestModel:
    params: ForestParams
    binning: BinningScheme
    trees: list[TreeNode]
    importances: np.ndarray  # aligned with binning.column_vocab

    def importance_by_column(self) -> dict[str, float]:
        return {
            self.binning.column_name(i): float(v)
            for i, v in enumerate(self.importances)
        }

    def top_columns(self, k: int = 20) -> list[tuple[str, float]]:
        order = np.argsort(-self.importances, kind="stable")
        return [
            (self.binning.column_name(int(i)), float(self.importances[int(i)]))
            for i in order[:k]
        ]


def train_forest(matrix: DesignMatrix, params: ForestParams,
                 binning: BinningScheme | None = None) -> RandomForestModel:
    """Fit a forest on a labeled DesignMatrix.

    binning rides along for serialization and prediction-time encoding;
    pass the scheme that produced the matrix.
    """
    if matrix.labels is None:
        raise ValueError("design matrix has no labels")
    n = matrix.rows.shape[0]
    if n < 1:
        raise ValueError("design matrix has no rows")
    if params.seed is None:
        raise ValueError("forest training requires a seed")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")

    n_cols = matrix.n_columns
    m = params.features_per_split
    if m is None:
        m = math.ceil(math.sqrt(n_cols))
    m = min(m, n_cols)

    dense = matrix.to_dense()
    y = np.ascontiguousarray(matrix.labels, dtype=np.uint8)
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        features_per_split=m if m < n_cols else None,
    )
    ensure_recursion_room(n)

    importances = np.zeros(n_cols, dtype=np.float64)
    trees: list[TreeNode] = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        if params.bootstrap:
            idx = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        else:
            idx = np.arange(n, dtype=np.int64)
        trees.append(
            grow_tree(dense, y, idx, tree_params, rng, importances, n_root=n)
        )

    total = importances.sum()
    if total > 0.0:
        importances /= total
    return RandomForestModel(
        params=params, binning=binning, trees=trees, importances=importances
    )


def _predict_active(model: RandomForestModel, active: np.ndarray) -> tuple[int, float]:
    votes = 0
    for root in model.trees:
        node = root
        while not node.is_leaf:
            node = node.right if active[node.split_column] else node.left
        votes += node.leaf_class
    fraction = votes / len(model.trees)
    return (1 if fraction >= 0.5 else 0), fraction


def _row_to_active(model: RandomForestModel, row: np.ndarray) -> np.ndarray:
    n_cols = len(model.binning.column_vocab)
    if row.ndim != 1 or np.any(row < 0) or np.any(row >= n_cols):
        raise ValueError("row does not match the model's column vocabulary")
    active = np.zeros(n_cols, dtype=bool)
    active[row] = True
    return active


def predict(model: RandomForestModel, row: np.ndarray) -> tuple[int, float]:
    """(label, positive vote fraction) for one encoded row. Ties at
    exactly 0.5 go positive."""
    return _predict_active(model, _row_to_active(model, row))


def predict_many(model: RandomForestModel, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = np.empty(rows.shape[0], dtype=np.uint8)
    fractions = np.empty(rows.shape[0], dtype=np.float64)
    for i in range(rows.shape[0]):
        labels[i], fractions[i] = predict(model, rows[i])
    return labels, fractions


def predict_vectors(model: RandomForestModel, vectors) -> tuple[np.ndarray, np.ndarray]:
    """Predict raw FeatureVectors by encoding them with the model's own
    binning scheme first."""
    rows = np.stack([encode(fv, model.binning) for fv in vectors])
    return predict_many(model, rows)


# ---------------------------------------------------------------------------
# Serialization: self-describing versioned JSON

def model_to_dict(model: RandomForestModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "params": model.params.to_dict(),
        "binning": model.binning.to_dict(),
        "column_vocab": [list(c) for c in model.binning.column_vocab],
        "trees": [t.to_dict() for t in model.trees],
        "importances": model.importance_by_column(),
    }


def model_from_dict(d: dict) -> RandomForestModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a forest model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    binning = BinningScheme.from_dict(d["binning"])
    stored = [tuple(c) for c in d["column_vocab"]]
    if stored != binning.column_vocab:
        raise ValueError("column vocabulary does not match binning scheme")
    by_name = d["importances"]
    importances = np.array(
        [by_name[binning.column_name(i)] for i in range(binning.n_columns)],
        dtype=np.float64,
    )
    return RandomForestModel(
        params=ForestParams.from_dict(d["params"]),
        binning=binning,
        trees=[TreeNode.from_dict(t) for t in d["trees"]],
        importances=importances,
    )


def save_model(model: RandomForestModel, path) -> None:
    payload = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    atomic_write_text(path, payload)


def load_model(path) -> RandomForestModel:
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))
