"""Per-subject net-monetary-benefit weights.

Every estimator returns a :class:`~ceitr.core.WeightVector` holding the
estimated survival contrast, cost contrast and the resulting
``w = lam * delta_t - delta_m``.  The sign of ``w`` is the class label and
its magnitude the classification weight.

Terms that use only complete cases are inverse-weighted by the censoring
survivor evaluated just before the relevant time.  In the partitioned
methods a censored subject still contributes the cost of every interval it
was followed through.
"""

from __future__ import annotations

import enum
import logging
import warnings

import numpy as np

from .core import (
    CEConfig,
    Cohort,
    InvalidArgumentError,
    InvalidStateError,
    PartitionGrid,
    WeightVector,
    cohort_interval_quantities,
)
from .nuisance import inverse_censoring

logger = logging.getLogger(__name__)


class WeightMethod(str, enum.Enum):
    REG_BASED = "reg"
    AIPW_NP = "aipw-np"
    IPW_P = "ipw-p"
    AIPW_P = "aipw-p"

    @property
    def partitioned(self) -> bool:
        return self in (WeightMethod.IPW_P, WeightMethod.AIPW_P)

    @classmethod
    def parse(cls, name) -> "WeightMethod":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"reg-based": "reg", "reg-naive": "reg", "regression": "reg"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise InvalidArgumentError(f"unknown weight method {name!r}")


def _require(nuisance, *names):
    for name in names:
        if getattr(nuisance, name, None) is None:
            raise InvalidStateError(f"nuisance fit is missing '{name}'")


def reg_based_weights(cohort: Cohort, nuisance, ce: CEConfig) -> WeightVector:
    """Outcome-regression contrasts h_1 - h_0 and m_1 - m_0."""
    for meth in ("restricted_mean", "cost_mean"):
        if not callable(getattr(nuisance, meth, None)):
            raise InvalidStateError("regression weights need survival and cost fits")
    try:
        X = cohort.x
        dt = nuisance.restricted_mean(X, 1) - nuisance.restricted_mean(X, 0)
        dm = nuisance.cost_mean(X, 1) - nuisance.cost_mean(X, 0)
    except AttributeError as exc:
        raise InvalidStateError("regression weights need survival and cost fits") from exc
    return WeightVector(dt, dm, ce.lam)


def reg_naive_rule(weights) -> np.ndarray:
    """Treat exactly when the estimated net benefit is positive."""
    w = weights.w if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    return (w > 0).astype(np.int64)


def _aipw_arm_terms(y, a, e, inv_k1, inv_k0, aug1, aug0):
    """The two bracketed arm terms of the augmented estimator, already IPC-weighted."""
    arm1 = inv_k1 * (a * y - (a - e) * aug1) / e
    arm0 = inv_k0 * ((1 - a) * y + (a - e) * aug0) / (1 - e)
    return arm1, arm0


def aipw_np_weights(cohort: Cohort, nuisance, ce: CEConfig) -> WeightVector:
    """Non-partitioned augmented weights from total cost and restricted time.

    Every term carries the complete-case indicator, so censored subjects get
    a zero weight and complete cases are inflated by 1 / K_a(U-).
    """
    X, a, u = cohort.x, cohort.a, cohort.u
    done = cohort.delta == 1
    e = nuisance.propensity(X)
    inv_k1 = inverse_censoring(nuisance, u, np.ones_like(a), X, done)
    inv_k0 = inverse_censoring(nuisance, u, np.zeros_like(a), X, done)
    c1, c0 = _aipw_arm_terms(cohort.total_cost, a, e, inv_k1, inv_k0,
                             nuisance.cost_mean(X, 1), nuisance.cost_mean(X, 0))
    t1, t0 = _aipw_arm_terms(u, a, e, inv_k1, inv_k0,
                             nuisance.restricted_mean(X, 1), nuisance.restricted_mean(X, 0))
    return WeightVector(t1 - t0, c1 - c0, ce.lam)


def _interval_inverse_weights(nuisance, u_j, d_j, arm, X):
    """1 / K_arm(U^j-) for each subject-interval with flag 1.

    Intervals where the survivor is zero are dropped (weight 0) with a warning.
    """
    n, J = u_j.shape
    k = nuisance.censor_survival(u_j.ravel(), np.repeat(arm, J),
                                 None if X is None else np.repeat(X, J, axis=0)).reshape(n, J)
    need = d_j == 1
    bad = need & ~(k > 0)
    if bad.any():
        msg = f"dropping {int(bad.sum())} subject-intervals with zero censoring survivor"
        logger.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        need = need & ~bad
    out = np.zeros((n, J))
    out[need] = 1.0 / k[need]
    return out


def _partition_inputs(cohort: Cohort, grid, nuisance):
    if cohort.cost_history is None and cohort.accrual is None:
        raise InvalidArgumentError(
            "partitioned weights need per-interval cost history (columns m_1..m_J)")
    grid = grid if grid is not None else (getattr(nuisance, "grid", None) or cohort.grid)
    if grid is None:
        raise InvalidArgumentError("partitioned weights need a partition grid")
    u_j, d_j, m_j = cohort_interval_quantities(cohort, grid)
    needs_x = getattr(nuisance, "spec", None) is not None and \
        getattr(nuisance.spec, "censoring", "km") != "km"
    X = cohort.x if needs_x else None
    inv1 = _interval_inverse_weights(nuisance, u_j, d_j, np.ones(cohort.n, dtype=int), X)
    inv0 = _interval_inverse_weights(nuisance, u_j, d_j, np.zeros(cohort.n, dtype=int), X)
    return grid, m_j, inv1, inv0


def _censoring_adjusted_time(cohort, nuisance, e, augmented):
    """Restricted-time contrast with regression imputation for censored subjects.

    Complete cases contribute the (augmented) inverse-probability term,
    inflated by 1 / K_a(U-); the imputation enters with multiplier
    ``1 - delta / K``, which is exactly ``1`` for censored subjects and keeps the
    contrast mean-unbiased when the nuisances are correct.
    """
    X, a, u = cohort.x, cohort.a, cohort.u
    done = cohort.delta == 1
    ones, zeros = np.ones_like(a), np.zeros_like(a)
    inv_k1 = inverse_censoring(nuisance, u, ones, X, done)
    inv_k0 = inverse_censoring(nuisance, u, zeros, X, done)
    h1, h0 = nuisance.restricted_mean(X, 1), nuisance.restricted_mean(X, 0)
    if augmented:
        t1, t0 = _aipw_arm_terms(u, a, e, inv_k1, inv_k0, h1, h0)
        return (t1 + (1 - inv_k1) * h1) - (t0 + (1 - inv_k0) * h0)
    inv_own = np.where(a == 1, inv_k1, inv_k0)
    ipw = inv_own * (a * u / e - (1 - a) * u / (1 - e))
    return ipw + (1 - inv_own) * (a * h1 - (1 - a) * h0)


def ipw_p_weights(cohort: Cohort, grid: PartitionGrid, nuisance, ce: CEConfig) -> WeightVector:
    """Partitioned inverse-probability weights.

    The cost contrast sums interval-level inverse-weighted costs; the time
    contrast imputes censored subjects by regression.
    """
    _require(nuisance, "propensity")
    grid, m_j, inv1, inv0 = _partition_inputs(cohort, grid, nuisance)
    e = nuisance.propensity(cohort.x)
    a = cohort.a[:, None]
    own = np.where(a == 1, inv1, inv0)
    terms = a * m_j * own / e[:, None] - (1 - a) * m_j * own / (1 - e[:, None])
    dm = terms.sum(axis=1)
    dt = _censoring_adjusted_time(cohort, nuisance, e, augmented=False)
    return WeightVector(dt, dm, ce.lam)


def aipw_p_weights(cohort: Cohort, grid: PartitionGrid, nuisance, ce: CEConfig) -> WeightVector:
    """Partitioned augmented weights with interval-level cost regressions."""
    _require(nuisance, "propensity")
    grid, m_j, inv1, inv0 = _partition_inputs(cohort, grid, nuisance)
    X = cohort.x
    e = nuisance.propensity(X)[:, None]
    a = cohort.a[:, None]
    aug1 = nuisance.interval_cost_mean(X, 1)
    aug0 = nuisance.interval_cost_mean(X, 0)
    if aug1.shape != m_j.shape:
        raise InvalidArgumentError("interval cost model grid does not match the weight grid")
    arm1, arm0 = _aipw_arm_terms(m_j, a, e, inv1, inv0, aug1, aug0)
    dm = (arm1 - arm0).sum(axis=1)
    dt = _censoring_adjusted_time(cohort, nuisance, e[:, 0], augmented=True)
    return WeightVector(dt, dm, ce.lam)


def compute_weights(method, cohort: Cohort, nuisance, ce: CEConfig,
                    grid: PartitionGrid = None) -> WeightVector:
    method = WeightMethod.parse(method)
    if method is WeightMethod.REG_BASED:
        return reg_based_weights(cohort, nuisance, ce)
    if method is WeightMethod.AIPW_NP:
        return aipw_np_weights(cohort, nuisance, ce)
    if method is WeightMethod.IPW_P:
        return ipw_p_weights(cohort, grid, nuisance, ce)
    return aipw_p_weights(cohort, grid, nuisance, ce)
