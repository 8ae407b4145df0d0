"""Synthetic cohorts with known counterfactuals.

Five covariates, a logistic treatment mechanism, exponential survival with
treatment-by-covariate effect modification, three-part gamma costs and
administrative-style censoring that starts after five years of follow-up.
Both arms share their uniform and gamma draws, so counterfactual contrasts
vary smoothly with the covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .core import (
    Accrual,
    CalibrationError,
    Cohort,
    InvalidArgumentError,
    PartitionGrid,
    PotentialOutcomes,
    allocate_costs,
    build_uniform_grid,
    default_grid,
)

EM_MODES = ("EM-TM", "EM-T")
HTE_GAMMA = {"small": (2.0, 1.5), "large": (2.5, 2.0)}
CENSOR_TARGETS = (0.0, 0.2, 0.5, 0.7)
MIN_FOLLOW_UP = 5.0


@dataclass(frozen=True)
class DGPScenario:
    n: int = 1000
    em_mode: str = "EM-TM"
    hte_mode: str = "small"
    censor_target: float = 0.0
    lam: float = 50_000.0
    beta_t: tuple = (0.8, 0.8, 0.3, 0.3, 0.3)
    beta_m: tuple = (0.8, 0.8, 0.3, 0.3, 0.3)
    gamma_m: float = 0.03
    kappa: float = 2.5
    baseline_hazard: float = 0.1
    tau: float = 20.0
    cost_multiplier: float = 1000.0
    # None draws treatment from the logistic model; a number randomises with that P(A=1)
    randomized: Optional[float] = None
    intervals: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.em_mode not in EM_MODES:
            raise InvalidArgumentError(f"em_mode must be one of {EM_MODES}")
        if self.hte_mode not in HTE_GAMMA:
            raise InvalidArgumentError(f"hte_mode must be one of {tuple(HTE_GAMMA)}")
        if len(self.beta_t) != 5 or len(self.beta_m) != 5:
            raise InvalidArgumentError("coefficient vectors must have length 5")
        if not 0 <= self.censor_target < 1:
            raise InvalidArgumentError("censor_target must lie in [0, 1)")
        if not self.kappa > 0:
            raise InvalidArgumentError("kappa must be positive")
        if self.n < 1:
            raise InvalidArgumentError("n must be at least 1")

    @property
    def gamma_t(self) -> np.ndarray:
        return np.array(HTE_GAMMA[self.hte_mode])

    @property
    def grid(self) -> PartitionGrid:
        if self.intervals is None:
            return default_grid(self.tau)
        return build_uniform_grid(self.tau, self.intervals)

    def log_rate(self, X: np.ndarray, a) -> np.ndarray:
        a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
        return (np.log(self.baseline_hazard) + X @ np.asarray(self.beta_t)
                - a * (X[:, :2] @ self.gamma_t))

    def log_cost_scale(self, X: np.ndarray, a) -> np.ndarray:
        a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
        base = X @ np.asarray(self.beta_m)
        if self.em_mode == "EM-TM":
            return base + self.gamma_m * (X[:, 0] + X[:, 1]) * a
        return base + 2 * self.gamma_m * a


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _spawn(seed, k):
    return np.random.SeedSequence(seed).spawn(k)


def sample_covariates(n: int, seed) -> np.ndarray:
    """X1, X2 ~ N(1, var 2); X3..X5 ~ N(0, 1)."""
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    rng = _rng(seed)
    X = rng.standard_normal((n, 5))
    X[:, :2] = 1.0 + np.sqrt(2.0) * X[:, :2]
    return X


def treatment_probability(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 5:
        raise InvalidArgumentError("X must have 5 columns")
    return expit(0.5 * X[:, 0] + 0.5 * X[:, 1] + 0.9 * X[:, 2])


def assign_treatment(X: np.ndarray, seed, randomized: Optional[float] = None) -> np.ndarray:
    prob = treatment_probability(X)
    if randomized is not None:
        prob = np.full_like(prob, float(randomized))
    return (_rng(seed).random(prob.size) < prob).astype(np.int64)


@dataclass(frozen=True)
class PotentialSurvival:
    t_star0: np.ndarray
    t_star1: np.ndarray
    t0: np.ndarray
    t1: np.ndarray


def sample_potential_survival(X: np.ndarray, scenario: DGPScenario, seed) -> PotentialSurvival:
    """Exponential times by inversion from one uniform per subject."""
    e = -np.log(_rng(seed).random(X.shape[0]))
    t_star0 = e / np.exp(scenario.log_rate(X, 0))
    t_star1 = e / np.exp(scenario.log_rate(X, 1))
    return PotentialSurvival(t_star0, t_star1,
                             np.minimum(t_star0, scenario.tau), np.minimum(t_star1, scenario.tau))


def _censored_fraction(c0, e, follow):
    return np.mean(MIN_FOLLOW_UP + e / c0 < follow)


def calibrate_censoring(scenario: DGPScenario, X: np.ndarray, t_star: np.ndarray, seed,
                        tol: float = 0.01, max_iter: int = 100):
    """Exponential censoring hazard on top of the five-year floor.

    Returns ``(c0, C)`` with ``C = 5 + Exp(rate c0)``; the rate is bisected
    (on the log scale) until the realised censored fraction is within ``tol``
    of the target.  A zero target gives ``C = inf``.
    """
    target = scenario.censor_target
    n = np.asarray(t_star).shape[0]
    if target == 0:
        return 0.0, np.full(n, np.inf)
    follow = np.minimum(t_star, scenario.tau)
    e = _rng(seed).exponential(size=n)
    lo, hi = -20.0, 20.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        frac = _censored_fraction(np.exp(mid), e, follow)
        if abs(frac - target) <= tol:
            c0 = float(np.exp(mid))
            return c0, MIN_FOLLOW_UP + e / c0
        if frac < target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"could not reach censoring rate {target}; the largest attainable rate "
        f"is {np.mean(follow > MIN_FOLLOW_UP):.3f}")


@dataclass(frozen=True)
class PotentialCosts:
    m0: np.ndarray
    m1: np.ndarray
    # per-arm accrual components, scaled by the cost multiplier
    initial: tuple
    rate: tuple
    death: tuple


def sample_costs(X: np.ndarray, surv: PotentialSurvival, scenario: DGPScenario, seed) -> PotentialCosts:
    """Initial, ongoing (per year alive) and death-related gamma costs."""
    rng = _rng(seed)
    n = X.shape[0]
    g_init = rng.gamma(scenario.kappa, 1.0, n)
    g_ong = rng.gamma(scenario.kappa, 1.0, n)
    g_death = rng.gamma(scenario.kappa, 1.0, n)
    mult = scenario.cost_multiplier
    initial, rate, death, totals = [], [], [], []
    for a, t, t_star in ((0, surv.t0, surv.t_star0), (1, surv.t1, surv.t_star1)):
        theta = np.exp(scenario.log_cost_scale(X, a))
        init_a = mult * g_init * theta
        rate_a = mult * g_ong * 0.6 * theta
        death_a = mult * g_death * 0.2 * theta
        died = t_star <= scenario.tau
        initial.append(init_a)
        rate.append(rate_a)
        death.append(death_a)
        totals.append(init_a + rate_a * t + death_a * died)
    return PotentialCosts(totals[0], totals[1], tuple(initial), tuple(rate), tuple(death))


@dataclass(frozen=True)
class SimulatedData:
    cohort: Cohort
    potentials: PotentialOutcomes
    censor_rate: float = 0.0
    realized_censoring: float = 0.0
    propensity: np.ndarray = field(default=None, repr=False)
    scenario: DGPScenario = None


def assemble_cohort(scenario: DGPScenario, grid: Optional[PartitionGrid] = None) -> SimulatedData:
    """Draw one cohort with its counterfactuals; a pure function of the scenario."""
    s_x, s_a, s_t, s_c, s_m = _spawn(scenario.seed, 5)
    X = sample_covariates(scenario.n, s_x)
    A = assign_treatment(X, s_a, scenario.randomized)
    surv = sample_potential_survival(X, scenario, s_t)
    t_star = np.where(A == 1, surv.t_star1, surv.t_star0)
    c0, C = calibrate_censoring(scenario, X, t_star, s_c)
    costs = sample_costs(X, surv, scenario, s_m)

    tau = scenario.tau
    u = np.minimum(np.minimum(t_star, C), tau)
    delta = (np.minimum(t_star, tau) <= C).astype(np.int64)
    death_obs = t_star <= np.minimum(C, tau)
    pick = lambda pair: np.where(A == 1, pair[1], pair[0])  # noqa: E731
    accrual = Accrual(pick(costs.initial), pick(costs.rate), pick(costs.death))
    total = accrual.initial + accrual.rate * u + accrual.death * death_obs

    grid = scenario.grid if grid is None else grid
    hist = allocate_costs(accrual, u, death_obs, grid)
    cohort = Cohort(x=X, a=A, u=u, delta=delta, total_cost=total, tau=tau,
                    cost_history=hist, grid=grid, accrual=accrual)
    potentials = PotentialOutcomes(surv.t0, surv.t1, costs.m0, costs.m1, scenario.lam)
    prop = (np.full(scenario.n, float(scenario.randomized)) if scenario.randomized is not None
            else treatment_probability(X))
    return SimulatedData(cohort, potentials, c0, float(np.mean(delta == 0)), prop, scenario)


def replicate_seed(master_seed: int, rep: int) -> int:
    """Independent 63-bit seed for replication ``rep``."""
    ss = np.random.SeedSequence([int(master_seed), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def with_seed(scenario: DGPScenario, seed: int) -> DGPScenario:
    return replace(scenario, seed=seed)


class TrueNuisance:
    """Nuisance quantities of the generating process.

    Exposes the same evaluation methods as a fitted nuisance model so the
    weight estimators can be run with known propensities, censoring,
    survival and cost means.
    """

    def __init__(self, sim: SimulatedData, grid: Optional[PartitionGrid] = None):
        self.scenario = sim.scenario
        self.c0 = sim.censor_rate
        self.grid = sim.cohort.grid if grid is None else grid

    @classmethod
    def from_scenario(cls, scenario: DGPScenario, censor_rate: float = 0.0) -> "TrueNuisance":
        self = cls.__new__(cls)
        self.scenario, self.c0, self.grid = scenario, float(censor_rate), scenario.grid
        return self

    def propensity(self, X):
        if self.scenario.randomized is not None:
            return np.full(X.shape[0], float(self.scenario.randomized))
        return treatment_probability(X)

    def censor_survival(self, t, a, X=None):
        t = np.asarray(t, dtype=float)
        if self.c0 == 0:
            return np.ones_like(t)
        return np.exp(-self.c0 * np.clip(t - MIN_FOLLOW_UP, 0.0, None))

    def _rate(self, X, a):
        return np.exp(self.scenario.log_rate(X, a))

    def restricted_mean(self, X, a):
        r = self._rate(X, a)
        return -np.expm1(-r * self.scenario.tau) / r

    def _cost_scale(self, X, a):
        s = self.scenario
        return s.cost_multiplier * s.kappa * np.exp(s.log_cost_scale(X, a))

    def cost_mean(self, X, a):
        r = self._rate(X, a)
        p_death = -np.expm1(-r * self.scenario.tau)
        return self._cost_scale(X, a) * (1 + 0.6 * self.restricted_mean(X, a) + 0.2 * p_death)

    def interval_cost_mean(self, X, a):
        r = self._rate(X, a)[:, None]
        left, right = self.grid.left[None, :], self.grid.right[None, :]
        surv_l, surv_r = np.exp(-r * left), np.exp(-r * right)
        alive_time = (surv_l - surv_r) / r
        out = 0.6 * alive_time + 0.2 * (surv_l - surv_r)
        out[:, 0] += 1.0
        return self._cost_scale(X, a)[:, None] * out


def true_net_benefit(scenario: DGPScenario, X) -> np.ndarray:
    """E[Y(1) - Y(0) | X] under the generating model."""
    tn = TrueNuisance.from_scenario(scenario)
    X = np.asarray(X, dtype=float)
    dt = tn.restricted_mean(X, 1) - tn.restricted_mean(X, 0)
    dm = tn.cost_mean(X, 1) - tn.cost_mean(X, 0)
    return scenario.lam * dt - dm


def true_rule(scenario: DGPScenario, X) -> np.ndarray:
    """Covariate-level optimal rule I{E[Y(1) - Y(0) | X] > 0}."""
    return (true_net_benefit(scenario, X) > 0).astype(np.int64)
