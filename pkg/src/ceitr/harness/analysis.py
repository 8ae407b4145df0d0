"""Rule estimation and evaluation on an observed cohort.

Rules are learned out of fold, and each rule is valued by an augmented
inverse-weighted estimator of the mean net benefit it would achieve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import CEConfig, Cohort, InvalidArgumentError
from ..learners import ConditionalForestClassifier, conditional_importance
from ..nuisance import NuisanceSpec, fit_nuisance, inverse_censoring
from ..weights import WeightMethod, compute_weights
from .io import write_table
from .methods import MethodSpec, fit_rule, method_seed
from .runner import REPLICATION_ERRORS

logger = logging.getLogger(__name__)


def observed_nmb(cohort: Cohort, ce: CEConfig) -> np.ndarray:
    """lam * U - M; only meaningful where delta = 1."""
    return ce.lam * cohort.u - cohort.total_cost


def rule_value_terms(cohort: Cohort, nuisance, g, ce: CEConfig) -> np.ndarray:
    """Per-subject contributions whose mean estimates E[Y(g)].

    term = delta / K * (I{A=g} Y / e_g - (I{A=g} - e_g) Q_g / e_g), with e_g the
    propensity of the recommended arm and Q_g the regression prediction of
    the net benefit under it.
    """
    g = np.asarray(g, dtype=np.int64)
    X, a = cohort.x, cohort.a
    done = cohort.delta == 1
    e1 = nuisance.propensity(X)
    e_g = np.where(g == 1, e1, 1 - e1)
    inv_k = inverse_censoring(nuisance, cohort.u, a, X, done)
    q = {arm: ce.lam * nuisance.restricted_mean(X, arm) - nuisance.cost_mean(X, arm)
         for arm in (0, 1)}
    q_g = np.where(g == 1, q[1], q[0])
    match = (a == g).astype(float)
    y = np.where(done, observed_nmb(cohort, ce), 0.0)
    return inv_k * (match * y - (match - e_g) * q_g) / e_g


def rule_value(cohort, nuisance, g, ce) -> float:
    return float(np.mean(rule_value_terms(cohort, nuisance, g, ce)))


def _fold_ids(n, folds, rng):
    if not 2 <= folds <= n:
        raise InvalidArgumentError(f"folds must lie in [2, {n}]")
    return rng.permutation(n) % folds


def out_of_fold_rule(cohort: Cohort, method: MethodSpec, ce: CEConfig, spec: NuisanceSpec,
                     folds: int = 10, seed: int = 0, tree_params=None,
                     forest_params=None) -> np.ndarray:
    """Labels for every subject from a rule trained on the other folds."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    fold_of = _fold_ids(cohort.n, folds, rng)
    labels = np.zeros(cohort.n, dtype=np.int64)
    for k in range(folds):
        test = fold_of == k
        train = cohort.subset(np.flatnonzero(~test))
        nuisance = fit_nuisance(train, spec, partitioned=method.weight.partitioned)
        rule = fit_rule(method, train, nuisance, ce, tree_params=tree_params,
                        forest_params=forest_params, seed=method_seed(int(seed) + k, method))
        labels[test] = rule.predict(cohort.x[test])
    return labels


def _check_inputs(cohort, method):
    if method.weight.partitioned and method.learner is not None and cohort.cost_history is None:
        raise InvalidArgumentError(
            f"{method.name} needs per-interval cost columns m_1..m_J in the cohort file; "
            "add them or choose a non-partitioned method such as CRF-AIPW-NP")


def percentile_interval(samples, level=0.95):
    """Order-statistic percentile interval."""
    s = np.asarray(samples, dtype=float)
    s = s[np.isfinite(s)]
    if s.size == 0:
        return float("nan"), float("nan")
    # rounding keeps 0.025 from landing one order statistic too high
    q = np.round([(1 - level) / 2, (1 + level) / 2], 12)
    lo, hi = np.quantile(s, q, method="inverted_cdf")
    return float(lo), float(hi)


@dataclass
class AnalysisReport:
    method: str
    ids: np.ndarray
    labels: np.ndarray
    estimates: dict
    intervals: dict = field(default_factory=dict)
    importance: np.ndarray = None
    feature_names: tuple = ()
    bootstrap: int = 0
    bootstrap_failed: int = 0
    bootstrap_mode: str = "full"

    def to_csv(self) -> str:
        keys = list(self.estimates)
        nan = (float("nan"), float("nan"))
        lo = [self.intervals.get(k, nan)[0] for k in keys]
        hi = [self.intervals.get(k, nan)[1] for k in keys]
        return write_table(("metric", "estimate", "lower", "upper"),
                           (keys, [self.estimates[k] for k in keys], lo, hi))

    def importance_csv(self) -> str:
        if self.importance is None:
            return ""
        return write_table(("feature", "importance"), (list(self.feature_names), self.importance))

    def summary(self) -> str:
        lines = [f"method: {self.method}", f"subjects: {self.ids.size}"]
        for k, v in self.estimates.items():
            ci = self.intervals.get(k)
            tail = f"  [{ci[0]:.6g}, {ci[1]:.6g}]" if ci else ""
            lines.append(f"{k}: {v:.6g}{tail}")
        if self.bootstrap:
            lines.append(f"bootstrap: {self.bootstrap} resamples ({self.bootstrap_mode}), "
                         f"{self.bootstrap_failed} failed")
        if self.importance is not None:
            lines.append("importance:")
            order = np.argsort(-self.importance, kind="stable")
            lines += [f"  {self.feature_names[k]}: {self.importance[k]:.6g}" for k in order]
        return "\n".join(lines) + "\n"


def _estimates(cohort, labels, method, ce, spec):
    nuisance = fit_nuisance(cohort, spec, partitioned=False)
    n = cohort.n
    terms = {"value_rule": rule_value_terms(cohort, nuisance, labels, ce),
             "value_treat_all": rule_value_terms(cohort, nuisance, np.ones(n, dtype=int), ce),
             "value_treat_none": rule_value_terms(cohort, nuisance, np.zeros(n, dtype=int), ce)}
    est = {"proportion_treated": float(np.mean(labels))}
    est.update({k: float(np.mean(v)) for k, v in terms.items()})
    return est, terms


def rule_importance(cohort, method, ce, spec, forest_params=None, seed=0,
                    cor_threshold=0.2, n_repeats=1):
    """Conditional importance from a forest trained on the method's weights."""
    weight = method.weight if method.learner is not None else WeightMethod.REG_BASED
    nuisance = fit_nuisance(cohort, spec, partitioned=weight.partitioned)
    wv = compute_weights(weight, cohort, nuisance, ce)
    params = dict(forest_params or {})
    params.setdefault("random_state", method_seed(seed, method))
    forest = ConditionalForestClassifier(**params).fit(cohort.x, wv.z, wv.abs_w)
    return conditional_importance(forest, cohort.x, wv.z, wv.abs_w, cor_threshold=cor_threshold,
                                  n_repeats=n_repeats, random_state=seed)


def analyze_external(cohort: Cohort, method, ce: CEConfig, spec: NuisanceSpec = NuisanceSpec(),
                     folds: int = 10, bootstrap: int = 1000, seed: int = 0,
                     bootstrap_mode: str = "full", tree_params=None, forest_params=None,
                     importance: bool = True, cor_threshold: float = 0.2) -> AnalysisReport:
    """Out-of-fold rule, its estimated value against both uniform rules, and bootstrap CIs.

    ``bootstrap_mode="full"`` refits the whole cross-validated pipeline on each
    resample; ``"fast"`` keeps the rule fixed and resamples the value terms.
    """
    method = method if isinstance(method, MethodSpec) else MethodSpec.parse(method)
    _check_inputs(cohort, method)
    if bootstrap_mode not in ("full", "fast"):
        raise InvalidArgumentError("bootstrap_mode must be 'full' or 'fast'")
    kw = dict(folds=folds, tree_params=tree_params, forest_params=forest_params)
    labels = out_of_fold_rule(cohort, method, ce, spec, seed=seed, **kw)
    est, terms = _estimates(cohort, labels, method, ce, spec)
    report = AnalysisReport(method.name, cohort.ids, labels, est, feature_names=cohort.feature_names,
                            bootstrap=bootstrap, bootstrap_mode=bootstrap_mode)
    if bootstrap > 0:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
        draws = {k: [] for k in est}
        for b in range(bootstrap):
            idx = rng.integers(0, cohort.n, cohort.n)
            if bootstrap_mode == "fast":
                draws["proportion_treated"].append(float(np.mean(labels[idx])))
                for k, v in terms.items():
                    draws[k].append(float(np.mean(v[idx])))
                continue
            try:
                sub = cohort.subset(idx)
                lab = out_of_fold_rule(sub, method, ce, spec, seed=int(seed) + 1000 + b, **kw)
                e_b, _ = _estimates(sub, lab, method, ce, spec)
            except REPLICATION_ERRORS as exc:
                logger.warning("bootstrap resample %d failed: %s", b, exc)
                report.bootstrap_failed += 1
                continue
            for k, v in e_b.items():
                draws[k].append(v)
        report.intervals = {k: percentile_interval(v) for k, v in draws.items()}
    if importance:
        report.importance = rule_importance(cohort, method, ce, spec, forest_params, seed,
                                            cor_threshold)
    return report
