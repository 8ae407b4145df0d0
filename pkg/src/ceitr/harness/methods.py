"""The seven rule-estimation methods: a classifier paired with a weight estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import CEConfig, Cohort, InvalidArgumentError
from ..learners import ConditionalForestClassifier, FittedRule, RegressionRule, WeightedTreeClassifier
from ..weights import WeightMethod, compute_weights

LEARNER_TAGS = {"DT": "tree", "CRF": "forest"}


@dataclass(frozen=True)
class MethodSpec:
    learner: Optional[str]  # "tree", "forest" or None for the regression plug-in
    weight: WeightMethod

    @property
    def name(self) -> str:
        if self.learner is None:
            return "Reg-naive"
        tag = {v: k for k, v in LEARNER_TAGS.items()}[self.learner]
        return f"{tag}-{self.weight.value.upper()}"

    @classmethod
    def parse(cls, name: str) -> "MethodSpec":
        key = str(name).strip()
        if key.lower() in ("reg-naive", "reg_naive", "naive"):
            return cls(None, WeightMethod.REG_BASED)
        head, _, tail = key.partition("-")
        learner = LEARNER_TAGS.get(head.upper())
        if learner is None or not tail:
            raise InvalidArgumentError(f"unknown method {name!r}")
        weight = WeightMethod.parse(tail)
        if weight is WeightMethod.REG_BASED:
            raise InvalidArgumentError(f"unknown method {name!r}")
        return cls(learner, weight)

    def __str__(self):
        return self.name


ALL_METHODS = tuple(MethodSpec.parse(m) for m in (
    "Reg-naive", "DT-AIPW-NP", "DT-IPW-P", "DT-AIPW-P", "CRF-AIPW-NP", "CRF-IPW-P", "CRF-AIPW-P"))


def parse_methods(names) -> tuple:
    if names is None or names == "all":
        return ALL_METHODS
    if isinstance(names, str):
        names = [s for s in names.split(",") if s.strip()]
    return tuple(m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in names)


def make_learner(kind: str, params: Optional[dict], seed):
    params = dict(params or {})
    params.setdefault("random_state", seed)
    if kind == "tree":
        return WeightedTreeClassifier(**params)
    if kind == "forest":
        return ConditionalForestClassifier(**params)
    raise InvalidArgumentError(f"unknown learner {kind!r}")


def fit_rule(method: MethodSpec, cohort: Cohort, nuisance, ce: CEConfig, grid=None,
             tree_params=None, forest_params=None, seed=None, weights=None) -> FittedRule:
    """Estimate weights (unless given) and train the method's classifier."""
    if method.learner is None:
        return FittedRule("naive", cohort.p, regression=RegressionRule.from_nuisance(nuisance, ce.lam),
                          metadata={"method": method.name})
    if weights is None:
        weights = compute_weights(method.weight, cohort, nuisance, ce, grid)
    params = tree_params if method.learner == "tree" else forest_params
    est = make_learner(method.learner, params, seed).fit(cohort.x, weights.z, weights.abs_w)
    return FittedRule.from_estimator(est, method=method.name)


def method_seed(base_seed: int, method: MethodSpec) -> int:
    """Learner seed derived from a base seed and the method name."""
    ss = np.random.SeedSequence([int(base_seed), *method.name.encode()])
    return int(ss.generate_state(1)[0])
