"""Weighted classifiers that turn per-subject weights into treatment rules."""

from .forest import (
    ConditionalForestClassifier,
    conditional_importance,
    default_mtry_candidates,
    select_mtry_cv,
)
from .rules import FittedRule, RegressionRule, predict_rule
from .tree import TreeArrays, WeightedTreeClassifier, pruning_path, prune_at, weighted_risk

__all__ = [
    "ConditionalForestClassifier",
    "FittedRule",
    "RegressionRule",
    "TreeArrays",
    "WeightedTreeClassifier",
    "conditional_importance",
    "default_mtry_candidates",
    "predict_rule",
    "prune_at",
    "pruning_path",
    "select_mtry_cv",
    "weighted_risk",
]
