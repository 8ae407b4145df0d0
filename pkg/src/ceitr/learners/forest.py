"""Conditional-inference random forest for weighted classification."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..core import InvalidArgumentError
from ..validation import check_classification_data, check_features
from . import _kernels
from .tree import TreeArrays, weighted_risk

logger = logging.getLogger(__name__)


def default_mtry_candidates(p: int):
    """{1, round(sqrt p), ceil(p / 2), p}, deduplicated and sorted."""
    return sorted({1, max(1, int(round(math.sqrt(p)))), int(math.ceil(p / 2)), p})


def _tree_seeds(random_state, n):
    ss = random_state if isinstance(random_state, np.random.SeedSequence) \
        else np.random.SeedSequence(random_state)
    children = ss.spawn(n)
    return [(np.random.default_rng(c), int(c.generate_state(1)[0] & 0x7FFFFFFF)) for c in children]


class ConditionalForestClassifier(ClassifierMixin, BaseEstimator):
    """Forest of conditional-inference trees grown on subsamples.

    At each node ``mtry`` candidate features are tested for association
    with the weighted label through a permutation statistic; the most
    significant one is split at the threshold maximising the weighted
    two-sample discrepancy of the daughter nodes.  Predictions are an
    unweighted majority vote, ties going to class 0.

    Parameters
    ----------
    n_estimators : int
    mtry : int or None
        Candidate features per node.  None selects it by cross-validation
        over ``mtry_candidates``.
    max_depth : int
    subsample : float
        Fraction of rows drawn without replacement for each tree.
    mincriterion : float
        A node splits only if 1 - (Bonferroni-adjusted p-value) reaches this.
    weighted_selection : bool
        Whether the classification weights enter the selection statistic
        (they always enter the split-point search).
    """

    def __init__(self, n_estimators=50, mtry=None, max_depth=5, subsample=0.632,
                 mincriterion=0.0, min_samples_split=20, min_samples_leaf=7,
                 weighted_selection=True, mtry_candidates=None, cv_folds=10,
                 random_state=None):
        self.n_estimators = n_estimators
        self.mtry = mtry
        self.max_depth = max_depth
        self.subsample = subsample
        self.mincriterion = mincriterion
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.weighted_selection = weighted_selection
        self.mtry_candidates = mtry_candidates
        self.cv_folds = cv_folds
        self.random_state = random_state

    def _check_params(self, p):
        if self.n_estimators < 1:
            raise InvalidArgumentError("n_estimators must be at least 1")
        if self.max_depth < 1:
            raise InvalidArgumentError("max_depth must be at least 1")
        if not 0 < self.subsample <= 1:
            raise InvalidArgumentError("subsample must lie in (0, 1]")
        if not 0 <= self.mincriterion < 1:
            raise InvalidArgumentError("mincriterion must lie in [0, 1)")
        if self.mtry is not None and not 1 <= self.mtry <= p:
            raise InvalidArgumentError(f"mtry must lie in [1, {p}]")

    def _grow_forest(self, X, z, w, rows, mtry, random_state):
        n = rows.size
        size = max(1, int(round(self.subsample * n)))
        trees, inbag = [], []
        for rng, kseed in _tree_seeds(random_state, self.n_estimators):
            sub = np.sort(rows[rng.choice(n, size, replace=False)]) if size < n else rows.copy()
            out = _kernels.grow_tree(X, z, w, sub.astype(np.int64), _kernels.CONDITIONAL,
                                     int(self.max_depth), int(self.min_samples_split),
                                     int(self.min_samples_leaf), 0.0, int(mtry),
                                     float(self.mincriterion), kseed,
                                     bool(self.weighted_selection))
            trees.append(TreeArrays.from_kernel(out))
            inbag.append(sub)
        return trees, inbag

    def fit(self, X, y, sample_weight=None):
        X, z, w = check_classification_data(X, y, sample_weight)
        X = np.ascontiguousarray(X)
        n, p = X.shape
        self._check_params(p)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = p
        if self.mtry is None:
            cands = self.mtry_candidates or default_mtry_candidates(p)
            self.mtry_, self.mtry_cv_errors_ = select_mtry_cv(
                X, z, w, cands, folds=self.cv_folds, estimator=self, return_errors=True)
        else:
            self.mtry_ = int(self.mtry)
        trees, inbag = self._grow_forest(X, z, w, np.arange(n), self.mtry_, self.random_state)
        self.trees_ = trees
        self.oob_masks_ = []
        for sub in inbag:
            mask = np.ones(n, dtype=bool)
            mask[sub] = False
            self.oob_masks_.append(mask)
        return self

    def votes(self, X):
        check_is_fitted(self, "trees_")
        X = check_features(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forest_votes(self.trees_, X)

    def predict(self, X):
        return majority(self.votes(X), len(self.trees_))


def forest_votes(trees, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    votes = np.zeros(X.shape[0], dtype=np.int64)
    for t in trees:
        votes += t.predict(X)
    return votes


def majority(votes, n_trees) -> np.ndarray:
    return (2 * np.asarray(votes) > n_trees).astype(np.int64)


def select_mtry_cv(X, z, w, candidates, folds=10, estimator=None, random_state=None,
                   return_errors=False):
    """Cross-validated choice of mtry; ties go to the smallest candidate.

    The same fold split and tree seeds are used for every candidate.
    """
    X, z, w = check_classification_data(X, z, w)
    X = np.ascontiguousarray(X)
    cands = sorted({int(c) for c in candidates})
    p = X.shape[1]
    if not cands or cands[0] < 1 or cands[-1] > p:
        raise InvalidArgumentError(f"mtry candidates must lie in [1, {p}]")
    if len(cands) == 1:
        return (cands[0], np.zeros(1)) if return_errors else cands[0]
    est = estimator if estimator is not None else ConditionalForestClassifier()
    seed = est.random_state if random_state is None else random_state
    ss = np.random.SeedSequence(seed).spawn(2)
    fold_rng = np.random.default_rng(ss[0])
    n = X.shape[0]
    fold_of = fold_rng.permutation(n) % folds
    errors = np.zeros(len(cands))
    for k in range(folds):
        train = np.flatnonzero(fold_of != k)
        test = np.flatnonzero(fold_of == k)
        if train.size == 0 or test.size == 0:
            continue
        fold_seed = np.random.SeedSequence(int(ss[1].generate_state(1)[0]) + k)
        for c, m in enumerate(cands):
            trees, _ = est._grow_forest(X, z, w, train, m, fold_seed)
            pred = majority(forest_votes(trees, X[test]), len(trees))
            errors[c] += weighted_risk(pred, z[test], w[test])
    errors /= w.sum()
    best = cands[int(np.argmin(errors))]
    return (best, errors) if return_errors else best


# ----------------------------------------------------------------------------
# conditional permutation importance
# ----------------------------------------------------------------------------

def _weighted_accuracy(pred, z, w):
    return float(np.sum(w * (pred == z)) / np.sum(w))


def _cells(X, splits):
    """Integer cell id per row from a list of (feature, threshold) cut-offs."""
    if not splits:
        return np.zeros(X.shape[0], dtype=np.int64)
    bits = np.column_stack([X[:, f] > t for f, t in splits])
    _, cell = np.unique(bits, axis=0, return_inverse=True)
    return cell.ravel()


def _permute_within(values, cells, rng):
    out = values.copy()
    for c in np.unique(cells):
        idx = np.flatnonzero(cells == c)
        if idx.size > 1:
            out[idx] = values[idx[rng.permutation(idx.size)]]
    return out


def conditional_importance(forest, X, z, w, cor_threshold=0.2, n_repeats=1,
                           conditional=True, random_state=None):
    """Drop in weighted out-of-subsample accuracy after permuting each feature.

    With ``conditional=True`` a feature is permuted within the cells formed by
    the tree's own cut-offs on covariates correlated with it
    (|r| > ``cor_threshold``); otherwise it is permuted marginally.  Scores are
    averaged over trees and repeats.
    """
    check_is_fitted(forest, "trees_")
    X, z, w = check_classification_data(X, z, w)
    if X.shape[1] != forest.n_features_in_:
        raise InvalidArgumentError("feature dimension does not match the fitted forest")
    masks = getattr(forest, "oob_masks_", None)
    if masks is None or len(masks[0]) != X.shape[0]:
        raise InvalidArgumentError("importance needs the training data of the fitted forest")
    p = X.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.corrcoef(X, rowvar=False).reshape(p, p)
    r = np.nan_to_num(r)
    rng = np.random.default_rng(random_state)
    scores = np.zeros(p)
    counts = np.zeros(p)
    for k in range(p):
        related = [j for j in range(p) if j != k and abs(r[k, j]) > cor_threshold]
        if conditional and not related:
            logger.info("feature %d has no correlated covariates; permuting marginally", k)
        for tree, mask in zip(forest.trees_, masks):
            oob = np.flatnonzero(mask)
            if oob.size == 0 or w[oob].sum() <= 0:
                continue
            Xo = X[oob]
            base = _weighted_accuracy(tree.predict(Xo), z[oob], w[oob])
            used = k in set(tree.feature[tree.feature >= 0].tolist())
            if not used:
                # permuting an unused feature leaves predictions unchanged
                counts[k] += n_repeats
                continue
            splits = [(f, t) for f, t in tree.split_points() if f in related] if conditional else []
            cells = _cells(Xo, splits)
            for _ in range(n_repeats):
                Xp = Xo.copy()
                Xp[:, k] = _permute_within(Xo[:, k], cells, rng)
                scores[k] += base - _weighted_accuracy(tree.predict(Xp), z[oob], w[oob])
                counts[k] += 1
    return np.divide(scores, counts, out=np.zeros(p), where=counts > 0)
