"""Weighted classification tree with cost-complexity pruning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ..core import InvalidArgumentError
from ..validation import check_classification_data, check_features
from . import _kernels


@dataclass
class TreeArrays:
    """Node arrays of one fitted tree; node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    w0: np.ndarray
    w1: np.ndarray

    @classmethod
    def from_kernel(cls, out) -> "TreeArrays":
        return cls(*[np.ascontiguousarray(a) for a in out])

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply(self, X) -> np.ndarray:
        return _kernels.apply_tree(np.ascontiguousarray(X, dtype=np.float64), self.feature,
                                   self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.label[self.apply(X)]

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                d[self.left[node]] = d[self.right[node]] = d[node] + 1
        return int(d.max())

    def split_points(self):
        """(feature, threshold) of every internal node."""
        inner = np.flatnonzero(self.feature >= 0)
        return list(zip(self.feature[inner].tolist(), self.threshold[inner].tolist()))

    def prune_to(self, collapse: np.ndarray) -> "TreeArrays":
        """Turn the nodes flagged in ``collapse`` into leaves and drop orphans."""
        keep = np.zeros(self.n_nodes, dtype=bool)
        feature = self.feature.copy()
        feature[collapse] = -1
        stack = [0]
        while stack:
            node = stack.pop()
            keep[node] = True
            if feature[node] >= 0:
                stack.extend((self.left[node], self.right[node]))
        new_id = -np.ones(self.n_nodes, dtype=np.int64)
        new_id[keep] = np.arange(keep.sum())
        left = np.where(feature >= 0, new_id[self.left], -1)[keep]
        right = np.where(feature >= 0, new_id[self.right], -1)[keep]
        return TreeArrays(feature[keep], np.where(feature >= 0, self.threshold, 0.0)[keep],
                          left, right, self.label[keep].copy(), self.w0[keep].copy(),
                          self.w1[keep].copy())

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "label": self.label.tolist(), "w0": self.w0.tolist(), "w1": self.w1.tolist()}

    @classmethod
    def from_dict(cls, d) -> "TreeArrays":
        return cls(np.asarray(d["feature"], dtype=np.int64),
                   np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["label"], dtype=np.int64), np.asarray(d["w0"], dtype=np.float64),
                   np.asarray(d["w1"], dtype=np.float64))


def weighted_risk(pred, z, w) -> float:
    """Weighted misclassification sum(w * [pred != z])."""
    return float(np.sum(w * (np.asarray(pred) != np.asarray(z))))


# ----------------------------------------------------------------------------
# cost-complexity pruning on misclassification risk
# ----------------------------------------------------------------------------

def _postorder(tree: TreeArrays):
    order, stack = [], [0]
    while stack:
        node = stack.pop()
        order.append(node)
        if tree.feature[node] >= 0:
            stack.extend((tree.left[node], tree.right[node]))
    return order[::-1]


def _node_risk(tree: TreeArrays) -> np.ndarray:
    return np.minimum(tree.w0, tree.w1)


def pruning_path(tree: TreeArrays):
    """Weakest-link complexity values at which subtrees collapse.

    Returns an increasing array of alphas (in risk units), starting at 0.
    """
    risk = _node_risk(tree)
    feature = tree.feature.copy()
    alphas = [0.0]
    post = _postorder(tree)
    while feature[0] >= 0:
        sub_risk = np.zeros(tree.n_nodes)
        leaves = np.zeros(tree.n_nodes)
        g = np.full(tree.n_nodes, np.inf)
        for node in post:
            if feature[node] < 0:
                sub_risk[node] = risk[node]
                leaves[node] = 1
            else:
                lc, rc = tree.left[node], tree.right[node]
                sub_risk[node] = sub_risk[lc] + sub_risk[rc]
                leaves[node] = leaves[lc] + leaves[rc]
                g[node] = (risk[node] - sub_risk[node]) / (leaves[node] - 1)
        alpha = max(g.min(), 0.0)
        tol = 1e-12 * max(risk[0], 1e-300)
        feature[g <= alpha + tol] = -1
        if alpha > alphas[-1]:
            alphas.append(alpha)
    return np.array(alphas)


def prune_at(tree: TreeArrays, alpha: float) -> TreeArrays:
    """Smallest subtree minimising risk + alpha * leaves."""
    risk = _node_risk(tree)
    cost = np.zeros(tree.n_nodes)
    collapse = np.zeros(tree.n_nodes, dtype=bool)
    tol = 1e-12 * max(risk[0], 1e-300)
    for node in _postorder(tree):
        as_leaf = risk[node] + alpha
        if tree.feature[node] < 0:
            cost[node] = as_leaf
            continue
        kids = cost[tree.left[node]] + cost[tree.right[node]]
        if as_leaf <= kids + tol:
            cost[node] = as_leaf
            collapse[node] = True
        else:
            cost[node] = kids
    return tree.prune_to(collapse)


def cp_candidates(alphas: np.ndarray, root_risk: float) -> np.ndarray:
    """Geometric midpoints of the pruning path, as fractions of the root risk."""
    if root_risk <= 0:
        return np.array([0.0])
    cp = alphas / root_risk
    mids = np.sqrt(cp[:-1] * cp[1:]) if cp.size > 1 else np.array([])
    cands = np.concatenate([[0.0], mids[mids > 0], [cp[-1] * 1.01 + 1e-12]])
    return np.unique(cands)[::-1]


class WeightedTreeClassifier(ClassifierMixin, BaseEstimator):
    """Binary tree minimising weighted misclassification.

    The tree is grown greedily on weighted Gini impurity (all features,
    midpoint thresholds), then pruned by cost-complexity on weighted
    misclassification risk.  The complexity parameter ``cp`` is relative to
    the root risk; when ``cp`` is None it is chosen by ``cv_folds``-fold
    cross-validation (ties favour the simpler tree).
    """

    def __init__(self, max_depth=10, min_samples_split=2, min_samples_leaf=1,
                 min_weight_fraction_leaf=0.005, cp=None, cv_folds=10, random_state=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.min_weight_fraction_leaf = min_weight_fraction_leaf
        self.cp = cp
        self.cv_folds = cv_folds
        self.random_state = random_state

    def _grow(self, X, z, w, rows):
        if self.max_depth < 1:
            raise InvalidArgumentError("max_depth must be at least 1")
        out = _kernels.grow_tree(X, z, w, rows.astype(np.int64), _kernels.GINI,
                                 int(self.max_depth), int(self.min_samples_split),
                                 int(self.min_samples_leaf),
                                 float(self.min_weight_fraction_leaf * w[rows].sum()),
                                 X.shape[1], 0.0, 0)
        return TreeArrays.from_kernel(out)

    def fit(self, X, y, sample_weight=None):
        X, z, w = check_classification_data(X, y, sample_weight)
        X = np.ascontiguousarray(X)
        if self.cv_folds < 2:
            raise InvalidArgumentError("cv_folds must be at least 2")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        full = self._grow(X, z, w, np.arange(X.shape[0]))
        root_risk = float(min(full.w0[0], full.w1[0]))
        self.full_tree_ = full
        alphas = pruning_path(full)
        if self.cp is not None:
            cp = float(self.cp)
            self.cv_errors_ = None
        else:
            cands = cp_candidates(alphas, root_risk)
            errors = self._cv_errors(X, z, w, cands)
            self.cp_candidates_ = cands
            self.cv_errors_ = errors
            # candidates run from simplest to most complex; argmin keeps the first minimum
            cp = float(cands[int(np.argmin(errors))])
        self.cp_ = cp
        self.tree_ = prune_at(full, cp * root_risk)
        return self

    def _cv_errors(self, X, z, w, cands):
        rng = check_random_state(self.random_state)
        n = X.shape[0]
        folds = rng.permutation(n) % self.cv_folds
        errors = np.zeros(cands.size)
        for k in range(self.cv_folds):
            train = np.flatnonzero(folds != k)
            test = np.flatnonzero(folds == k)
            if train.size == 0 or test.size == 0:
                continue
            tree = self._grow(X, z, w, train)
            rr = float(min(tree.w0[0], tree.w1[0]))
            for c, cp in enumerate(cands):
                pruned = prune_at(tree, cp * rr)
                errors[c] += weighted_risk(pruned.predict(X[test]), z[test], w[test])
        return errors / w.sum()

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_features(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.tree_.predict(X)

    @property
    def trees_(self):
        return [self.tree_]
