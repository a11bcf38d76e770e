"""Quantile binning, one-hot encoding, CART trees and random forests."""

from erd.classifier.binning import (
    SCORE_PREFIX,
    UNKNOWN,
    BinningScheme,
    DesignMatrix,
    encode,
    fit_binning,
)
from erd.classifier.tree import DecisionTree, TreeNode, TreeParams, gini, train_tree
from erd.classifier.forest import (
    ForestParams,
    RandomForestModel,
    load_model,
    predict,
    predict_many,
    save_model,
    train_forest,
)

__all__ = [
    "SCORE_PREFIX",
    "UNKNOWN",
    "BinningScheme",
    "DesignMatrix",
    "DecisionTree",
    "ForestParams",
    "RandomForestModel",
    "TreeNode",
    "TreeParams",
    "encode",
    "fit_binning",
    "gini",
    "load_model",
    "predict",
    "predict_many",
    "save_model",
    "train_forest",
    "train_tree",
]
