import numpy as np
import pytest
from scipy.stats import chi2
from numpy.testing import assert_allclose, assert_array_equal

from ceitr.core import CalibrationError, InvalidArgumentError, PotentialOutcomes
from ceitr.dgp import (
    MIN_FOLLOW_UP,
    DGPScenario,
    TrueNuisance,
    assemble_cohort,
    replicate_seed,
    sample_costs,
    sample_covariates,
    sample_potential_survival,
    treatment_probability,
    true_rule,
)


def test_covariate_moments():
    X = sample_covariates(100_000, 1)
    se = X.std(axis=0) / np.sqrt(X.shape[0])
    assert np.all(np.abs(X.mean(axis=0) - [1, 1, 0, 0, 0]) < 3 * se)
    assert_allclose(X[:, :2].var(axis=0), 2.0, rtol=0.03)


def test_covariates_deterministic():
    assert_array_equal(sample_covariates(100, 5), sample_covariates(100, 5))
    one = sample_covariates(1, 5)
    assert one.shape == (1, 5) and np.all(np.isfinite(one))


def test_treatment_probability():
    X = np.zeros((1, 5))
    assert treatment_probability(X)[0] == 0.5
    X = np.array([[10.0, 10.0, 0, 0, 0]])
    assert_allclose(treatment_probability(X), 1 / (1 + np.exp(-10.0)))


def test_treatment_calibration_by_bucket():
    sim = assemble_cohort(DGPScenario(n=100_000, seed=2))
    X, A = sim.cohort.x, sim.cohort.a
    p = treatment_probability(X)
    bins = np.quantile(p, np.linspace(0, 1, 11))
    which = np.clip(np.searchsorted(bins, p, side="right") - 1, 0, 9)
    zs = []
    for b in range(10):
        sel = which == b
        se = np.sqrt(np.sum(p[sel] * (1 - p[sel]))) / sel.sum()
        zs.append((A[sel].mean() - p[sel].mean()) / se)
    # joint test over the ten bins at the three-sigma level
    assert chi2.sf(np.sum(np.square(zs)), df=10) > 0.0027


def test_log_rate_contrast_large_hte():
    s = DGPScenario(hte_mode="large")
    X = np.array([[1.0, 1.0, 0.3, -0.2, 0.5]])
    assert_allclose(s.log_rate(X, 1) - s.log_rate(X, 0), -4.5)
    assert_allclose(np.exp(s.log_rate(np.zeros((1, 5)), 0)), 0.1)


def test_restricted_mean_monte_carlo():
    s = DGPScenario(n=100_000)
    X = np.zeros((100_000, 5))
    surv = sample_potential_survival(X, s, 4)
    t = surv.t0
    target = 20 * (1 - np.exp(-2)) / 2
    assert abs(t.mean() - target) < 3 * t.std() / np.sqrt(t.size)
    assert_allclose(TrueNuisance.from_scenario(s).restricted_mean(X[:1], 0), target)


def test_censoring_calibration():
    sim = assemble_cohort(DGPScenario(n=100_000, censor_target=0.5, seed=3))
    assert 0.49 <= sim.realized_censoring <= 0.51
    c = sim.cohort
    # censored subjects were never censored before the follow-up floor
    assert np.all(c.u[c.delta == 0] >= MIN_FOLLOW_UP)


def test_zero_censoring():
    sim = assemble_cohort(DGPScenario(n=500, censor_target=0.0, seed=3))
    c, pot = sim.cohort, sim.potentials
    assert np.all(c.delta == 1)
    assert_allclose(c.u, np.where(c.a == 1, pot.t1, pot.t0))
    assert_allclose(c.total_cost, np.where(c.a == 1, pot.m1, pot.m0), rtol=1e-12)
    assert_allclose(c.cost_history.sum(axis=1), c.total_cost, rtol=1e-9)


def test_unreachable_censoring_raises():
    with pytest.raises(CalibrationError):
        assemble_cohort(DGPScenario(n=500, censor_target=0.9, randomized=0.5, seed=1))


def test_consistency_under_censoring():
    s = DGPScenario(n=2000, censor_target=0.2, seed=9)
    sim = assemble_cohort(s)
    c, pot = sim.cohort, sim.potentials
    t_obs = np.where(c.a == 1, pot.t1, pot.t0)
    # u = min(T, C, tau) so u never exceeds the counterfactual restricted time
    assert np.all(c.u <= t_obs + 1e-12)
    done = c.delta == 1
    assert_allclose(c.u[done], t_obs[done])
    assert_allclose(c.total_cost[done], np.where(c.a == 1, pot.m1, pot.m0)[done], rtol=1e-12)


def test_gamma_cost_mean():
    s = DGPScenario(n=100_000, seed=0)
    X = np.zeros((100_000, 5))
    surv = sample_potential_survival(X, s, 1)
    costs = sample_costs(X, surv, s, 2)
    init = costs.initial[0] / s.cost_multiplier
    # theta = 1 at X = 0, a = 0
    assert abs(init.mean() - 2.5) < 3 * init.std() / np.sqrt(init.size)


def test_em_t_cost_ratio():
    s = DGPScenario(em_mode="EM-T")
    X = sample_covariates(20, 0)
    assert_allclose(np.exp(s.log_cost_scale(X, 1) - s.log_cost_scale(X, 0)),
                    np.exp(0.06), rtol=1e-12)
    assert_allclose(np.exp(0.06), 1.0618, atol=1e-4)


def test_no_death_cost_past_horizon():
    s = DGPScenario(n=200, seed=0)
    X = sample_covariates(200, 0)
    surv = sample_potential_survival(X, s, 1)
    costs = sample_costs(X, surv, s, 2)
    alive = surv.t_star0 > s.tau
    expected = costs.initial[0] + costs.rate[0] * s.tau
    assert alive.any()
    assert_allclose(costs.m0[alive], expected[alive])


def test_cohort_determinism():
    s = DGPScenario(n=300, censor_target=0.2, seed=7)
    a, b = assemble_cohort(s), assemble_cohort(s)
    for f in ("x", "a", "u", "delta", "total_cost", "cost_history"):
        assert_array_equal(getattr(a.cohort, f), getattr(b.cohort, f))
    assert_array_equal(a.potentials.m1, b.potentials.m1)
    assert replicate_seed(1, 2) == replicate_seed(1, 2) != replicate_seed(1, 3)


def test_oracle_shift_invariance(complete_sim):
    pot = complete_sim.potentials
    shifted = PotentialOutcomes(pot.t0, pot.t1, pot.m0 - 123.0, pot.m1 - 123.0, pot.lam)
    assert_array_equal(shifted.g_opt, pot.g_opt)
    assert np.mean(pot.g_opt == pot.g_opt) == 1.0


def test_true_rule_matches_net_benefit_sign():
    s = DGPScenario()
    X = sample_covariates(1000, 3)
    g = true_rule(s, X)
    assert set(np.unique(g)) <= {0, 1}
    assert 0 < g.mean() < 1


def test_scenario_validation():
    with pytest.raises(InvalidArgumentError):
        DGPScenario(em_mode="bad")
    with pytest.raises(InvalidArgumentError):
        DGPScenario(censor_target=1.0)
    with pytest.raises(InvalidArgumentError):
        DGPScenario(n=0)
