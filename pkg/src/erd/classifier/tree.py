"""CART decision trees over one-hot columns with Gini impurity.

Splits are single binary columns: rows with the column active go right.
At each node the candidate column with the greatest impurity decrease
wins, ties to the lowest column index. An impure node splits whenever
some candidate leaves both children non-empty, so zero-gain splits are
taken; recursion still terminates because children strictly shrink.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from erd._kernels import best_split


def gini(counts) -> float:
    """Gini impurity 1 - sum(p_i^2) of non-negative class counts."""
    counts = list(counts)
    total = sum(counts)
    if total <= 0 or any(c < 0 for c in counts):
        raise ValueError(f"invalid class counts {counts}")
    return 1.0 - sum((c / total) ** 2 for c in counts)


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None = all columns


@dataclass
class TreeNode:
    split_column: int | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    leaf_class: int | None = None
    leaf_class_counts: tuple[int, int] | None = None  # (negatives, positives)

    @property
    def is_leaf(self) -> bool:
        return self.split_column is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"class": self.leaf_class, "counts": list(self.leaf_class_counts)}
        return {
            "split": self.split_column,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "split" in d:
            return cls(
                split_column=d["split"],
                left=cls.from_dict(d["left"]),
                right=cls.from_dict(d["right"]),
            )
        return cls(leaf_class=d["class"], leaf_class_counts=tuple(d["counts"]))


@dataclass
class DecisionTree:
    root: TreeNode
    n_columns: int

    def predict_row(self, active: np.ndarray) -> int:
        """active is a boolean mask over columns."""
        node = self.root
        while not node.is_leaf:
            node = node.right if active[node.split_column] else node.left
        return node.leaf_class


def _leaf(n_pos: int, n_total: int) -> TreeNode:
    n_neg = n_total - n_pos
    # ties vote positive, matching the >= 0.5 forest threshold
    cls = 1 if n_pos >= n_neg else 0
    return TreeNode(leaf_class=cls, leaf_class_counts=(n_neg, n_pos))


def grow_tree(
    dense: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator | None = None,
    importances: np.ndarray | None = None,
    n_root: int | None = None,
) -> TreeNode:
    """Recursive CART growth over the rows in idx.

    When importances is given, each accepted split adds
    (node size / n_root) * gain to its column, the per-tree share of
    the forest's Gini importance.
    """
    n = idx.shape[0]
    n_cols = dense.shape[1]
    if n_root is None:
        n_root = n
    pos = int(y[idx].sum())
    if pos == 0 or pos == n:
        return _leaf(pos, n)
    if params.max_depth is not None and params.max_depth <= 0:
        return _leaf(pos, n)

    m = params.features_per_split
    if m is None or m >= n_cols:
        cols = np.arange(n_cols, dtype=np.int64)
    else:
        if rng is None:
            raise ValueError("features_per_split sampling needs an rng")
        cols = np.sort(rng.choice(n_cols, size=m, replace=False)).astype(np.int64)

    pick, gain = best_split(dense, y, idx, cols, params.min_samples_leaf)
    if pick < 0:
        return _leaf(pos, n)
    col = int(cols[pick])

    if importances is not None:
        importances[col] += (n / n_root) * gain

    mask = dense[idx, col].astype(bool)
    right_idx = idx[mask]
    left_idx = idx[~mask]
    child_params = params
    if params.max_depth is not None:
        child_params = TreeParams(
            max_depth=params.max_depth - 1,
            min_samples_leaf=params.min_samples_leaf,
            features_per_split=params.features_per_split,
        )
    return TreeNode(
        split_column=col,
        left=grow_tree(dense, y, left_idx, child_params, rng, importances, n_root),
        right=grow_tree(dense, y, right_idx, child_params, rng, importances, n_root),
    )


def train_tree(matrix, params: TreeParams | None = None,
               rng: np.random.Generator | None = None) -> DecisionTree:
    """Fit a single CART tree on a labeled DesignMatrix."""
    if matrix.labels is None:
        raise ValueError("design matrix has no labels")
    if matrix.rows.shape[0] < 1:
        raise ValueError("design matrix has no rows")
    params = params or TreeParams()
    dense = matrix.to_dense()
    y = np.ascontiguousarray(matrix.labels, dtype=np.uint8)
    idx = np.arange(dense.shape[0], dtype=np.int64)
    ensure_recursion_room(dense.shape[0])
    root = grow_tree(dense, y, idx, params, rng)
    return DecisionTree(root=root, n_columns=matrix.n_columns)


def ensure_recursion_room(n_rows: int) -> None:
    # worst-case tree depth is n_rows - 1; leave margin for the caller
    needed = n_rows + 64
    if sys.getrecursionlimit() < needed:
        sys.setrecursionlimit(needed)


def tree_depth(node: TreeNode) -> int:
    if node.is_leaf:
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))
