"""Nuisance models feeding the weight estimators.

Each model follows the scikit-learn estimator conventions (``fit`` returns
``self``, learned attributes end in an underscore).  :func:`fit_nuisance`
assembles them into a :class:`FittedNuisance`, which is the object the
weight estimators query.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    Cohort,
    DegenerateWeightError,
    FitFailureError,
    InvalidArgumentError,
    PartitionGrid,
    SeparationWarning,
    cohort_interval_quantities,
)
from .validation import check_binary, check_features

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NuisanceSpec:
    """Model specification shared by the outcome regressions.

    ``interactions`` lists the covariate columns interacted with treatment;
    ``misspecified`` drops the first of them (A*X1 in the simulation design).
    """

    interactions: tuple = (0, 1)
    misspecified: bool = False
    epsilon: float = 0.01
    censoring: str = "km"
    newton_tol: float = 1e-8
    newton_max_iter: int = 100
    irls_tol: float = 1e-8
    irls_max_iter: int = 50
    min_interval_subjects: int = 10

    def __post_init__(self):
        if self.censoring not in ("km", "exponential"):
            raise InvalidArgumentError("censoring must be 'km' or 'exponential'")
        if not 0 < self.epsilon < 0.5:
            raise InvalidArgumentError("epsilon must lie in (0, 0.5)")

    @property
    def active_interactions(self) -> tuple:
        return tuple(self.interactions[1:]) if self.misspecified else tuple(self.interactions)


def outcome_design(X: np.ndarray, a, interactions=(0, 1)) -> np.ndarray:
    """Columns: intercept, covariates, treatment, treatment x selected covariates."""
    X = np.asarray(X, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
    cols = [np.ones(X.shape[0]), *X.T, a]
    cols.extend(a * X[:, k] for k in interactions)
    return np.column_stack(cols)


def _intercept_design(X):
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.ones(X.shape[0]), X])


# ----------------------------------------------------------------------------
# propensity
# ----------------------------------------------------------------------------

def _logistic_loglik(Z, y, beta):
    eta = Z @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


class PropensityModel(BaseEstimator):
    """Logistic regression of treatment on covariates by damped Newton steps.

    Predictions are clipped to ``[epsilon, 1 - epsilon]``.
    """

    def __init__(self, epsilon=0.01, tol=1e-8, max_iter=100, separation_norm=30.0):
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.separation_norm = separation_norm

    def fit(self, X, a):
        X = check_features(X)
        a = check_binary(a, "a").astype(float)
        if a.min() == a.max():
            raise InvalidArgumentError("propensity model needs both treatment arms")
        Z = _intercept_design(X)
        beta = np.zeros(Z.shape[1])
        beta[0] = np.log(a.mean() / (1 - a.mean()))
        ll = _logistic_loglik(Z, a, beta)
        self.loglik_path_ = [ll]
        self.separated_ = False
        for it in range(self.max_iter):
            mu = expit(Z @ beta)
            grad = Z.T @ (a - mu)
            hess = (Z * (mu * (1 - mu))[:, None]).T @ Z
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            t = 1.0
            while True:
                cand = beta + t * step
                ll_new = _logistic_loglik(Z, a, cand)
                if ll_new >= ll or t < 1e-10:
                    break
                t *= 0.5
            if ll_new < ll:
                break
            beta, ll = cand, ll_new
            self.loglik_path_.append(ll)
            if np.linalg.norm(beta) > self.separation_norm:
                self.separated_ = True
                warnings.warn("propensity model shows perfect separation; "
                              "predictions are clipped", SeparationWarning, stacklevel=2)
                break
            if np.max(np.abs(t * step)) < self.tol:
                break
        self.coef_ = beta
        self.n_iter_ = it + 1
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        e = expit(_intercept_design(check_features(X)) @ self.coef_)
        return np.clip(e, self.epsilon, 1 - self.epsilon)


# ----------------------------------------------------------------------------
# censoring
# ----------------------------------------------------------------------------

class CensoringKaplanMeier(BaseEstimator):
    """Arm-stratified product-limit estimate of the censoring survivor.

    Censorings are the events; deaths and horizon completions are treated as
    censored.  :meth:`survival` returns the left limit K(t-), so a subject's
    own censoring time does not shrink its weight.
    """

    def fit(self, u, delta, a):
        u = np.asarray(u, dtype=float)
        delta = check_binary(delta, "delta")
        a = check_binary(a, "a")
        self.times_, self.surv_ = {}, {}
        for arm in (0, 1):
            ua, ca = u[a == arm], 1 - delta[a == arm]
            times, events = np.unique(ua[ca == 1], return_counts=True)
            at_risk = ua.size - np.searchsorted(np.sort(ua), times, side="left")
            self.times_[arm] = times
            self.surv_[arm] = np.cumprod(1.0 - events / at_risk) if times.size else np.ones(0)
        return self

    def survival(self, t, a, X=None):
        check_is_fitted(self, "times_")
        t = np.asarray(t, dtype=float)
        a = np.broadcast_to(np.asarray(a), t.shape[:1]) if t.ndim else np.asarray(a)
        out = np.ones(t.shape)
        for arm in (0, 1):
            times, surv = self.times_[arm], self.surv_[arm]
            if times.size == 0:
                continue
            rows = a == arm
            k = np.searchsorted(times, t[rows], side="left")
            vals = np.concatenate([[1.0], surv])[k]
            out[rows] = vals
        return out


class ExponentialRegression(BaseEstimator):
    """Exponential proportional-hazards regression, log-rate linear in ``Z``.

    Maximises sum(event * log r - r * time) by damped Newton iterations.
    ``Z`` is the full design matrix (intercept included).
    """

    def __init__(self, tol=1e-8, max_iter=100):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, Z, time, event):
        Z = np.asarray(Z, dtype=float)
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=float)
        if event.sum() == 0:
            raise InvalidArgumentError("exponential regression needs at least one event")

        def loglik(b):
            eta = Z @ b
            return float(np.sum(event * eta - np.exp(eta) * time))

        beta = np.zeros(Z.shape[1])
        beta[0] = np.log(event.sum() / time.sum())
        ll = loglik(beta)
        for it in range(self.max_iter):
            r = np.exp(Z @ beta)
            grad = Z.T @ (event - r * time)
            hess = (Z * (r * time)[:, None]).T @ Z
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            t = 1.0
            while True:
                cand = beta + t * step
                ll_new = loglik(cand)
                if ll_new >= ll or t < 1e-10:
                    break
                t *= 0.5
            if ll_new < ll:
                break
            beta, ll = cand, ll_new
            if np.max(np.abs(t * step)) < self.tol:
                break
        else:
            raise FitFailureError("exponential regression did not converge")
        if not np.all(np.isfinite(beta)):
            raise FitFailureError("exponential regression diverged")
        self.coef_ = beta
        self.n_iter_ = it + 1
        return self

    def rate(self, Z):
        check_is_fitted(self, "coef_")
        return np.exp(np.asarray(Z, dtype=float) @ self.coef_)


def restricted_mean_exponential(rate, tau):
    """(1 - exp(-r tau)) / r, with the series expansion for tiny rates."""
    rate = np.asarray(rate, dtype=float)
    small = rate < 1e-8
    safe = np.where(small, 1.0, rate)
    out = -np.expm1(-safe * tau) / safe
    series = tau - rate * tau ** 2 / 2
    return np.where(small, series, out)


class CensoringExponential(BaseEstimator):
    """Covariate-adjusted censoring survivor exp(-r(x, a) t) for external data."""

    def __init__(self, tol=1e-8, max_iter=100):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, u, delta, a, X):
        Z = outcome_design(X, a, ())
        self.model_ = ExponentialRegression(self.tol, self.max_iter).fit(Z, u, 1 - np.asarray(delta))
        return self

    def survival(self, t, a, X=None):
        if X is None:
            raise InvalidArgumentError("covariate-adjusted censoring needs X")
        r = self.model_.rate(outcome_design(X, a, ()))
        return np.exp(-r * np.asarray(t, dtype=float))


# ----------------------------------------------------------------------------
# outcome regressions
# ----------------------------------------------------------------------------

class SurvivalOutcomeModel(BaseEstimator):
    """Exponential survival regression with treatment-covariate interactions.

    Provides the restricted mean ``h_a(x)`` and the survivor ``S_a(t|x)``.
    """

    def __init__(self, interactions=(0, 1), tau=20.0, tol=1e-8, max_iter=100):
        self.interactions = interactions
        self.tau = tau
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, a, u, death):
        a = check_binary(a, "a")
        death = check_binary(death, "death")
        for arm in (0, 1):
            if death[a == arm].sum() == 0:
                raise InvalidArgumentError(f"no observed deaths in arm {arm}")
        Z = outcome_design(X, a, self.interactions)
        self.model_ = ExponentialRegression(self.tol, self.max_iter).fit(Z, u, death)
        self.coef_ = self.model_.coef_
        return self

    def rate(self, X, a):
        return self.model_.rate(outcome_design(X, a, self.interactions))

    def restricted_mean(self, X, a):
        return restricted_mean_exponential(self.rate(X, a), self.tau)

    def survival(self, t, X, a):
        return np.exp(-self.rate(X, a) * np.asarray(t, dtype=float))


class GammaGLM(BaseEstimator):
    """Gamma regression with log link fitted by IRLS.

    With the log link the IRLS working weights are constant, so each
    iteration is an ordinary least-squares fit to the working response
    ``eta + (y - mu) / mu``.  Zero responses are allowed; only the mean
    structure is estimated.
    """

    def __init__(self, tol=1e-8, max_iter=50):
        self.tol = tol
        self.max_iter = max_iter

    @staticmethod
    def _deviance(y, mu):
        pos = y > 0
        logy = np.zeros_like(y)
        logy[pos] = np.log(y[pos])
        return 2.0 * float(np.sum(np.log(mu) - logy + y / mu - 1.0))

    def fit(self, Z, y):
        Z = np.asarray(Z, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise InvalidArgumentError("gamma regression needs non-negative responses")
        if y.sum() <= 0:
            raise InvalidArgumentError("gamma regression needs some positive responses")
        beta = np.zeros(Z.shape[1])
        beta[0] = np.log(y.mean())
        mu = np.exp(Z @ beta)
        dev = self._deviance(y, mu)
        self.converged_ = False
        for it in range(self.max_iter):
            eta = Z @ beta
            work = eta + (y - mu) / mu
            new = np.linalg.lstsq(Z, work, rcond=None)[0]
            step = new - beta
            t = 1.0
            while True:
                cand = beta + t * step
                mu_c = np.exp(np.clip(Z @ cand, -700, 700))
                dev_c = self._deviance(y, mu_c)
                if dev_c <= dev or t < 1e-8:
                    break
                t *= 0.5
            moved = np.max(np.abs(t * step))
            beta, mu, dev = cand, mu_c, dev_c
            if moved < self.tol:
                self.converged_ = True
                break
        self.coef_ = beta
        self.deviance_ = dev
        self.n_iter_ = it + 1
        return self

    def predict(self, Z):
        check_is_fitted(self, "coef_")
        return np.exp(np.asarray(Z, dtype=float) @ self.coef_)

    def score(self, Z, y):
        """Estimating-equation residual sum((y / mu - 1) z); zero at the optimum."""
        mu = self.predict(Z)
        return np.asarray(Z).T @ (np.asarray(y) / mu - 1.0)


class CostOutcomeModel(BaseEstimator):
    """Total cost m_a(x) from a log-link gamma GLM on complete cases."""

    def __init__(self, interactions=(0, 1), tol=1e-8, max_iter=50):
        self.interactions = interactions
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, a, cost, delta):
        cost = np.asarray(cost, dtype=float)
        if np.any(cost < 0):
            raise InvalidArgumentError("costs must be non-negative")
        keep = np.asarray(delta) == 1
        Z = outcome_design(np.asarray(X)[keep], np.asarray(a)[keep], self.interactions)
        self.glm_ = GammaGLM(self.tol, self.max_iter).fit(Z, cost[keep])
        self.coef_ = self.glm_.coef_
        return self

    def predict(self, X, a):
        return self.glm_.predict(outcome_design(X, a, self.interactions))


class IntervalCostModel(BaseEstimator):
    """One gamma GLM per grid interval for the cost accrued in that interval.

    Interval j is fitted on subjects whose interval flag is 1.  Intervals with
    too few usable subjects, only zero costs, or a fit that does not converge
    fall back to arm-specific means; their indices are kept in ``fallback_``.
    """

    def __init__(self, interactions=(0, 1), tol=1e-8, max_iter=50, min_subjects=10):
        self.interactions = interactions
        self.tol = tol
        self.max_iter = max_iter
        self.min_subjects = min_subjects

    def fit(self, X, a, interval_cost, interval_delta):
        X = np.asarray(X, dtype=float)
        a = np.asarray(a)
        m = np.asarray(interval_cost, dtype=float)
        d = np.asarray(interval_delta)
        if np.any(m < 0):
            raise InvalidArgumentError("interval costs must be non-negative")
        J = m.shape[1]
        self.models_ = [None] * J
        self.arm_means_ = np.zeros((J, 2))
        self.fallback_ = []
        for j in range(J):
            use = d[:, j] == 1
            yj = m[use, j]
            if use.sum() >= self.min_subjects and yj.sum() > 0:
                Z = outcome_design(X[use], a[use], self.interactions)
                try:
                    glm = GammaGLM(self.tol, self.max_iter).fit(Z, yj)
                except (np.linalg.LinAlgError, InvalidArgumentError):
                    glm = None
                # zero-inflated intervals can drive the fit off to infinity
                if glm is not None and glm.converged_:
                    self.models_[j] = glm
                    continue
            self.fallback_.append(j)
            for arm in (0, 1):
                sel = use & (a == arm)
                if sel.any():
                    self.arm_means_[j, arm] = m[sel, j].mean()
                elif use.any():
                    self.arm_means_[j, arm] = yj.mean()
        if self.fallback_:
            logger.info("interval cost models fell back to arm means for intervals %s",
                        self.fallback_)
        return self

    def predict(self, X, a):
        X = np.asarray(X, dtype=float)
        Z = outcome_design(X, a, self.interactions)
        arm = np.broadcast_to(np.asarray(a), (X.shape[0],)).astype(int)
        out = np.empty((X.shape[0], len(self.models_)))
        for j, model in enumerate(self.models_):
            out[:, j] = model.predict(Z) if model is not None else self.arm_means_[j, arm]
        return out


# ----------------------------------------------------------------------------
# bundle
# ----------------------------------------------------------------------------

@dataclass
class FittedNuisance:
    """All fitted nuisance models; the query surface used by the weights."""

    propensity_model: PropensityModel
    censoring_model: object
    survival_model: Optional[SurvivalOutcomeModel] = None
    cost_model: Optional[CostOutcomeModel] = None
    interval_cost_model: Optional[IntervalCostModel] = None
    grid: Optional[PartitionGrid] = None
    spec: NuisanceSpec = field(default_factory=NuisanceSpec)

    def propensity(self, X):
        return self.propensity_model.predict_proba(X)

    def censor_survival(self, t, a, X=None):
        return self.censoring_model.survival(t, a, X)

    def restricted_mean(self, X, a):
        return self.survival_model.restricted_mean(X, a)

    def cost_mean(self, X, a):
        return self.cost_model.predict(X, a)

    def interval_cost_mean(self, X, a):
        return self.interval_cost_model.predict(X, a)


def fit_propensity(X, a, spec: NuisanceSpec = NuisanceSpec()) -> PropensityModel:
    return PropensityModel(spec.epsilon, spec.newton_tol, spec.newton_max_iter).fit(X, a)


def fit_censor_survivor(u, delta, a, X=None, spec: NuisanceSpec = NuisanceSpec()):
    if spec.censoring == "km":
        return CensoringKaplanMeier().fit(u, delta, a)
    return CensoringExponential(spec.newton_tol, spec.newton_max_iter).fit(u, delta, a, X)


def fit_nuisance(cohort: Cohort, spec: NuisanceSpec = NuisanceSpec(),
                 grid: Optional[PartitionGrid] = None, partitioned: bool = True) -> FittedNuisance:
    """Fit every nuisance model on ``cohort``.

    Interval cost models are only fitted when ``partitioned`` is true and the
    cohort carries a cost history.
    """
    inter = spec.active_interactions
    X, a = cohort.x, cohort.a
    prop = fit_propensity(X, a, spec)
    cens = fit_censor_survivor(cohort.u, cohort.delta, a, X, spec)
    surv = SurvivalOutcomeModel(inter, cohort.tau, spec.newton_tol, spec.newton_max_iter).fit(
        X, a, cohort.u, cohort.death_observed)
    cost = CostOutcomeModel(inter, spec.irls_tol, spec.irls_max_iter).fit(
        X, a, cohort.total_cost, cohort.delta)
    interval = None
    if partitioned and (cohort.cost_history is not None or cohort.accrual is not None):
        grid = grid if grid is not None else cohort.grid
        _, d_j, m_j = cohort_interval_quantities(cohort, grid)
        interval = IntervalCostModel(inter, spec.irls_tol, spec.irls_max_iter,
                                     spec.min_interval_subjects).fit(X, a, m_j, d_j)
    return FittedNuisance(prop, cens, surv, cost, interval, grid, spec)


def inverse_censoring(nuisance, t, a, X, needed) -> np.ndarray:
    """1 / K_a(t-) where ``needed``; raises if any needed value is zero."""
    k = nuisance.censor_survival(t, a, X)
    bad = needed & ~(k > 0)
    if np.any(bad):
        raise DegenerateWeightError(
            f"censoring survivor is zero for {int(bad.sum())} subjects at a required time")
    out = np.zeros_like(k, dtype=float)
    out[needed] = 1.0 / k[needed]
    return out
