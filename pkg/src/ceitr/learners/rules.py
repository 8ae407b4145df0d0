"""Fitted treatment rules, their prediction and text serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..core import InvalidArgumentError
from ..nuisance import outcome_design, restricted_mean_exponential
from ..validation import check_features
from .forest import forest_votes, majority
from .tree import TreeArrays

RULE_FORMAT = "ceitr-rule"
RULE_VERSION = 1
KINDS = ("tree", "forest", "naive")


@dataclass
class RegressionRule:
    """Plug-in rule I{lam * (h_1 - h_0) - (m_1 - m_0) > 0} from outcome models."""

    survival_coef: np.ndarray
    cost_coef: np.ndarray
    interactions: tuple
    tau: float
    lam: float

    @classmethod
    def from_nuisance(cls, nuisance, lam):
        return cls(np.asarray(nuisance.survival_model.coef_, dtype=float),
                   np.asarray(nuisance.cost_model.coef_, dtype=float),
                   tuple(nuisance.survival_model.interactions),
                   float(nuisance.survival_model.tau), float(lam))

    def net_benefit(self, X):
        out = []
        for arm in (0, 1):
            Z = outcome_design(X, arm, self.interactions)
            h = restricted_mean_exponential(np.exp(Z @ self.survival_coef), self.tau)
            out.append(self.lam * h - np.exp(Z @ self.cost_coef))
        return out[1] - out[0]

    def predict(self, X):
        return (self.net_benefit(X) > 0).astype(np.int64)

    def to_dict(self):
        return {"survival_coef": self.survival_coef.tolist(), "cost_coef": self.cost_coef.tolist(),
                "interactions": list(self.interactions), "tau": self.tau, "lam": self.lam}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["survival_coef"], dtype=float), np.asarray(d["cost_coef"], dtype=float),
                   tuple(int(k) for k in d["interactions"]), float(d["tau"]), float(d["lam"]))


@dataclass
class FittedRule:
    """A learned rule: a single tree, a forest, or the regression plug-in."""

    kind: str
    n_features: int
    trees: list = field(default_factory=list)
    regression: RegressionRule = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"rule kind must be one of {KINDS}")
        if self.kind == "naive" and self.regression is None:
            raise InvalidArgumentError("a naive rule needs its regression coefficients")
        if self.kind != "naive" and not self.trees:
            raise InvalidArgumentError("a tree or forest rule needs at least one tree")
        for t in self.trees:
            inner = t.feature >= 0
            if np.any(t.left[inner] < 0) or np.any(t.right[inner] < 0):
                raise InvalidArgumentError("internal node without two children")
            if not np.all(np.isin(t.label, (0, 1))):
                raise InvalidArgumentError("leaf votes must be 0 or 1")

    @classmethod
    def from_estimator(cls, est, **metadata):
        kind = "forest" if hasattr(est, "oob_masks_") else "tree"
        meta = {"params": {k: v for k, v in est.get_params().items()
                           if isinstance(v, (int, float, str, bool, type(None)))}}
        if kind == "forest":
            meta["mtry"] = int(est.mtry_)
        else:
            meta["cp"] = float(est.cp_)
        meta.update(metadata)
        return cls(kind, int(est.n_features_in_), list(est.trees_), None, meta)

    def predict(self, X):
        return predict_rule(self, X)

    def to_json(self) -> str:
        d = {"format": RULE_FORMAT, "version": RULE_VERSION, "kind": self.kind,
             "n_features": self.n_features, "metadata": self.metadata,
             "trees": [t.to_dict() for t in self.trees],
             "regression": None if self.regression is None else self.regression.to_dict()}
        return json.dumps(d, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FittedRule":
        d = json.loads(text)
        if d.get("format") != RULE_FORMAT:
            raise InvalidArgumentError("not a serialized rule")
        if d.get("version") != RULE_VERSION:
            raise InvalidArgumentError(f"unsupported rule version {d.get('version')}")
        reg = d.get("regression")
        return cls(d["kind"], int(d["n_features"]), [TreeArrays.from_dict(t) for t in d["trees"]],
                   None if reg is None else RegressionRule.from_dict(reg), d.get("metadata", {}))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def predict_rule(rule: FittedRule, X) -> np.ndarray:
    """Treatment labels in {0, 1}; forests use a majority vote with ties to 0."""
    X = check_features(X)
    if X.shape[1] != rule.n_features:
        raise InvalidArgumentError(f"expected {rule.n_features} features, got {X.shape[1]}")
    if rule.kind == "naive":
        return rule.regression.predict(X)
    if rule.kind == "tree":
        return rule.trees[0].predict(X)
    return majority(forest_votes(rule.trees, X), len(rule.trees))
