"""Replicated simulation runs over scenario cells."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from ..core import CEConfig
from ..dgp import DGPScenario, assemble_cohort, replicate_seed, with_seed
from ..nuisance import NuisanceSpec, fit_nuisance
from ..weights import WeightMethod, compute_weights
from .methods import ALL_METHODS, fit_rule, method_seed, parse_methods
from .metrics import classification_accuracy, mean_nmb_under_rule, oracle_nmb

logger = logging.getLogger(__name__)

# failures that exclude a replication instead of aborting the run
REPLICATION_ERRORS = (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError)


@dataclass
class ReplicationResult:
    rep: int
    seed: int
    accuracy: dict
    nmb: dict
    oracle: float
    censoring: float


@dataclass
class ScenarioResult:
    scenario: DGPScenario
    methods: tuple
    replications: list
    failures: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def n_reps(self) -> int:
        return len(self.replications)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def _stat(self, values):
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return float("nan"), float("nan")
        return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0

    def accuracy(self, method):
        name = str(method)
        return self._stat([r.accuracy[name] for r in self.replications])

    def nmb(self, method):
        name = str(method)
        return self._stat([r.nmb[name] for r in self.replications])

    def oracle(self):
        return self._stat([r.oracle for r in self.replications])

    def row(self) -> dict:
        s = self.scenario
        out = {"em_mode": s.em_mode, "hte_mode": s.hte_mode, "wtp": s.lam,
               "censor_rate": s.censor_target, "n": s.n, "reps": self.n_reps,
               "failed": self.n_failed}
        out["oracle_nmb_mean"], out["oracle_nmb_sd"] = self.oracle()
        for m in self.methods:
            out[f"{m}_acc_mean"], out[f"{m}_acc_sd"] = self.accuracy(m)
            out[f"{m}_nmb_mean"], out[f"{m}_nmb_sd"] = self.nmb(m)
        return out


def run_replication(scenario: DGPScenario, methods, rep: int, master_seed: int,
                    spec: NuisanceSpec, tree_params=None, forest_params=None) -> ReplicationResult:
    seed = replicate_seed(master_seed, rep)
    sim = assemble_cohort(with_seed(scenario, seed))
    cohort, pot = sim.cohort, sim.potentials
    ce = CEConfig(lam=scenario.lam, tau=scenario.tau)
    need_interval = any(m.weight.partitioned for m in methods if m.learner)
    nuisance = fit_nuisance(cohort, spec, partitioned=need_interval)
    cache = {}
    acc, nmb = {}, {}
    for m in methods:
        w = None
        if m.learner is not None:
            if m.weight not in cache:
                cache[m.weight] = compute_weights(m.weight, cohort, nuisance, ce)
            w = cache[m.weight]
        rule = fit_rule(m, cohort, nuisance, ce, tree_params=tree_params,
                        forest_params=forest_params, seed=method_seed(seed, m), weights=w)
        g = rule.predict(cohort.x)
        acc[m.name] = classification_accuracy(g, pot.g_opt)
        nmb[m.name] = mean_nmb_under_rule(pot, g)
    return ReplicationResult(rep, seed, acc, nmb, oracle_nmb(pot), sim.realized_censoring)


def _safe_replication(args):
    scenario, methods, rep = args[:3]
    try:
        return run_replication(*args)
    except REPLICATION_ERRORS as exc:
        logger.warning("replication %d of %s failed: %s", rep, scenario_id(scenario), exc)
        return (rep, f"{type(exc).__name__}: {exc}")


def run_scenario(scenario: DGPScenario, methods=ALL_METHODS, reps: int = 50, seed: int = 0,
                 spec: NuisanceSpec = NuisanceSpec(misspecified=True), tree_params=None,
                 forest_params=None, n_jobs: int = 1) -> ScenarioResult:
    """Run ``reps`` replications; failed ones are excluded and recorded."""
    methods = parse_methods(methods)
    start = time.perf_counter()
    jobs = [(scenario, methods, r, seed, spec, tree_params, forest_params) for r in range(reps)]
    if n_jobs == 1:
        outs = [_safe_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outs = list(pool.map(_safe_replication, jobs))
    done = [o for o in outs if isinstance(o, ReplicationResult)]
    failed = [o for o in outs if not isinstance(o, ReplicationResult)]
    return ScenarioResult(scenario, methods, done, failed, time.perf_counter() - start)


def scenario_id(s: DGPScenario) -> str:
    return f"{s.em_mode}/{s.hte_mode}/wtp={s.lam:g}/cr={s.censor_target:g}"


def scenario_grid(base: DGPScenario = DGPScenario(), em_modes=("EM-TM", "EM-T"),
                  hte_modes=("small", "large"), wtps=(50_000.0, 100_000.0),
                  censor_rates=(0.0, 0.2, 0.5, 0.7)):
    """Cartesian product of the design factors (32 cells by default)."""
    return [replace(base, em_mode=e, hte_mode=h, lam=float(w), censor_target=float(c))
            for e, h, w, c in product(em_modes, hte_modes, wtps, censor_rates)]


def results_csv(results) -> str:
    """CSV text with one row per scenario; runtimes are left out so output is reproducible."""
    rows = [r.row() for r in results]
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
