"""Command-line interface: ``ceitr <command> [options]``.

Every option that has a config counterpart overrides the value read from
``--config``.  Outputs are written with fixed float formatting, so repeating
a command with the same seed and configuration reproduces its files byte for
byte.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from ..core import (
    CalibrationError,
    DegenerateWeightError,
    FitFailureError,
    InvalidArgumentError,
    InvalidStateError,
    build_uniform_grid,
)
from ..dgp import assemble_cohort, true_rule
from ..learners import ConditionalForestClassifier, FittedRule, WeightedTreeClassifier
from ..nuisance import fit_nuisance
from ..weights import WeightMethod, compute_weights
from . import io as cio
from .analysis import analyze_external, rule_importance
from .boundary import export_boundary_grid
from .config import Config
from .methods import MethodSpec, fit_rule, method_seed, parse_methods
from .runner import results_csv, run_scenario, scenario_grid

logger = logging.getLogger("ceitr")

# option -> (section, key)
OVERRIDES = {}


def _opt(parser, flags, section, key, **kw):
    dest = f"{section}__{key}"
    OVERRIDES[dest] = (section, key)
    flags = (flags,) if isinstance(flags, str) else flags
    parser.add_argument(*flags, dest=dest, default=None, **kw)


def _common(p, sections=()):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--log-level", default="WARNING")
    if "ce" in sections:
        _opt(p, ("--lam", "--lambda"), "ce", "lam", help="willingness to pay per life-year")
        _opt(p, "--tau", "ce", "tau", help="restriction horizon")
        _opt(p, "--intervals", "ce", "intervals", help="number of equal partition intervals")
        _opt(p, "--grid", "ce", "grid", help="comma-separated partition knots starting at 0")
    if "dgp" in sections:
        _opt(p, "--n", "dgp", "n")
        _opt(p, "--em-mode", "dgp", "em_mode", choices=("EM-TM", "EM-T"))
        _opt(p, "--hte-mode", "dgp", "hte_mode", choices=("small", "large"))
        _opt(p, "--censor-rate", "dgp", "censor_rate")
        _opt(p, "--randomized", "dgp", "randomized", help="fixed treatment probability")
    if "nuisance" in sections:
        _opt(p, "--misspecified", "nuisance", "misspecified", help="true/false")
        _opt(p, "--censoring", "nuisance", "censoring", choices=("km", "exponential"))
        _opt(p, "--epsilon", "nuisance", "epsilon")
    if "learner" in sections:
        _opt(p, "--method", "harness", "method", help="e.g. CRF-AIPW-P, DT-IPW-P, Reg-naive")
        _opt(p, "--n-trees", "forest", "n_estimators")
        _opt(p, "--mtry", "forest", "mtry")
        _opt(p, "--cp", "tree", "cp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ceitr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a cohort and its counterfactuals")
    _common(p, ("ce", "dgp"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="cohort CSV")
    p.add_argument("--potentials", help="counterfactual CSV (default: <out>_potentials.csv)")

    p = sub.add_parser("weights", help="per-subject net-benefit weights")
    _common(p, ("ce", "nuisance"))
    p.add_argument("--cohort", required=True)
    p.add_argument("--method", default="aipw-p", help="reg, aipw-np, ipw-p or aipw-p")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="learn a rule and save it")
    _common(p, ("ce", "nuisance", "learner"))
    p.add_argument("--cohort", required=True)
    p.add_argument("--weights", help="use precomputed weights instead of estimating them")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="rule file (JSON)")

    p = sub.add_parser("predict", help="apply a saved rule")
    _common(p, ("ce",))
    p.add_argument("--rule", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("benchmark", help="replicated simulation over scenario cells")
    _common(p, ("ce", "dgp", "nuisance"))
    p.add_argument("--seed", type=int, required=True)
    _opt(p, "--reps", "harness", "reps")
    _opt(p, "--methods", "harness", "methods", help="comma-separated list or 'all'")
    _opt(p, "--n-jobs", "harness", "n_jobs")
    p.add_argument("--full-grid", action="store_true",
                   help="run all 32 design cells instead of the configured one")
    p.add_argument("--out", required=True)

    p = sub.add_parser("boundary", help="rule labels over an (x1, x2) lattice")
    _common(p, ("ce", "dgp"))
    p.add_argument("--rule", help="saved rule; omit with --oracle")
    p.add_argument("--oracle", action="store_true", help="use the generating model's rule")
    p.add_argument("--cohort", help="cohort whose covariate means fix the other columns")
    p.add_argument("--x1-range", default="-3,5")
    p.add_argument("--x2-range", default="-3,5")
    _opt(p, "--resolution", "harness", "resolution")
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="out-of-fold rule and its value on a cohort")
    _common(p, ("ce", "nuisance", "learner"))
    p.add_argument("--cohort", required=True)
    p.add_argument("--seed", type=int, default=0)
    _opt(p, "--folds", "harness", "folds")
    _opt(p, "--bootstrap", "harness", "bootstrap")
    _opt(p, "--bootstrap-mode", "harness", "bootstrap_mode", choices=("full", "fast"))
    p.add_argument("--no-importance", action="store_true")
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--labels", help="out-of-fold labels CSV")
    p.add_argument("--summary", help="text summary (default: stdout)")

    p = sub.add_parser("importance", help="conditional permutation importance")
    _common(p, ("ce", "nuisance", "learner"))
    p.add_argument("--cohort", required=True)
    p.add_argument("--seed", type=int, default=0)
    _opt(p, "--cor-threshold", "harness", "cor_threshold")
    _opt(p, "--repeats", "harness", "importance_repeats")
    p.add_argument("--out", required=True)
    return parser


def load_config(args) -> Config:
    cfg = Config.read(args.config)
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg.set(section, key, value)
    return cfg


def read_cohort(path, cfg: Config):
    text = cio.read_text(path)
    header = text.split("\n", 1)[0].split(",")
    J = sum(1 for h in header if cio._INTERVAL_COL.match(h.strip()))
    grid = None
    if J:
        c = cfg["ce"]
        explicit = c["grid"] is not None or c["intervals"] is not None
        grid = cfg.grid() if explicit else build_uniform_grid(c["tau"], J)
    return cio.cohort_from_csv(text, cfg["ce"]["tau"], grid)


def _method(cfg) -> MethodSpec:
    return MethodSpec.parse(cfg["harness"]["method"])


def cmd_simulate(args, cfg):
    scenario = cfg.scenario(seed=args.seed)
    sim = assemble_cohort(scenario, cfg.grid())
    cio.write_text(args.out, cio.cohort_to_csv(sim.cohort))
    pot_path = args.potentials or f"{os.path.splitext(args.out)[0]}_potentials.csv"
    cio.write_text(pot_path, cio.potentials_to_csv(sim.cohort.ids, sim.potentials))


def cmd_weights(args, cfg):
    cohort = read_cohort(args.cohort, cfg)
    method = WeightMethod.parse(args.method)
    nuisance = fit_nuisance(cohort, cfg.nuisance_spec(), partitioned=method.partitioned)
    wv = compute_weights(method, cohort, nuisance, cfg.ce())
    cio.write_text(args.out, cio.weights_to_csv(cohort.ids, wv))


def cmd_fit(args, cfg):
    cohort = read_cohort(args.cohort, cfg)
    method = _method(cfg)
    seed = method_seed(args.seed, method)
    if args.weights:
        if method.learner is None:
            raise InvalidArgumentError("precomputed weights need a tree or forest method")
        ids, z, w = cio.weights_from_csv(cio.read_text(args.weights))
        if not np.array_equal(ids, cohort.ids):
            raise InvalidArgumentError("weight ids do not match the cohort ids")
        if method.learner == "tree":
            est = WeightedTreeClassifier(**{**cfg.tree_params(), "random_state": seed})
        else:
            est = ConditionalForestClassifier(**{**cfg.forest_params(), "random_state": seed})
        rule = FittedRule.from_estimator(est.fit(cohort.x, z, w), method=method.name)
    else:
        nuisance = fit_nuisance(cohort, cfg.nuisance_spec(), partitioned=method.weight.partitioned)
        rule = fit_rule(method, cohort, nuisance, cfg.ce(), tree_params=cfg.tree_params(),
                        forest_params=cfg.forest_params(), seed=seed)
    rule.metadata["seed"] = args.seed
    rule.metadata["features"] = list(cohort.feature_names)
    rule.save(args.out)


def cmd_predict(args, cfg):
    rule = FittedRule.load(args.rule)
    cohort = read_cohort(args.cohort, cfg)
    cio.write_text(args.out, cio.labels_to_csv(cohort.ids, rule.predict(cohort.x)))


def cmd_benchmark(args, cfg):
    h = cfg["harness"]
    base = cfg.scenario(seed=0)
    cells = scenario_grid(base) if args.full_grid else [base]
    methods = parse_methods(None if h["methods"] == ("all",) else h["methods"])
    results = []
    for sc in cells:
        res = run_scenario(sc, methods, reps=h["reps"], seed=args.seed, spec=cfg.nuisance_spec(),
                           tree_params=cfg.tree_params(), forest_params=cfg.forest_params(),
                           n_jobs=h["n_jobs"])
        logger.info("%s: %d reps, %d failed, %.1fs", sc, res.n_reps, res.n_failed, res.runtime)
        results.append(res)
    cio.write_text(args.out, results_csv(results))


def _range(text):
    lo, hi = (float(t) for t in text.split(","))
    return lo, hi


def cmd_boundary(args, cfg):
    scenario = cfg.scenario()
    if args.oracle == bool(args.rule):
        raise InvalidArgumentError("give exactly one of --rule and --oracle")
    if args.rule:
        rule = FittedRule.load(args.rule)
        p = rule.n_features
    else:
        p = 5
        rule = lambda X: true_rule(scenario, X)  # noqa: E731
    if args.cohort:
        means = read_cohort(args.cohort, cfg).x.mean(axis=0)
    else:
        # covariate means of the generating model
        means = np.array([1.0, 1.0, 0.0, 0.0, 0.0])[:p] if p <= 5 else np.zeros(p)
    if means.size != p:
        raise InvalidArgumentError("cohort dimension does not match the rule")
    text = export_boundary_grid(rule, _range(args.x1_range), _range(args.x2_range),
                                cfg["harness"]["resolution"], means)
    cio.write_text(args.out, text)


def cmd_analyze(args, cfg):
    cohort = read_cohort(args.cohort, cfg)
    h = cfg["harness"]
    report = analyze_external(cohort, _method(cfg), cfg.ce(), cfg.nuisance_spec(), folds=h["folds"],
                              bootstrap=h["bootstrap"], seed=args.seed,
                              bootstrap_mode=h["bootstrap_mode"], tree_params=cfg.tree_params(),
                              forest_params=cfg.forest_params(),
                              importance=not args.no_importance,
                              cor_threshold=h["cor_threshold"])
    cio.write_text(args.out, report.to_csv())
    if args.labels:
        cio.write_text(args.labels, cio.labels_to_csv(report.ids, report.labels))
    if args.summary:
        cio.write_text(args.summary, report.summary())
    else:
        sys.stdout.write(report.summary())


def cmd_importance(args, cfg):
    cohort = read_cohort(args.cohort, cfg)
    h = cfg["harness"]
    imp = rule_importance(cohort, _method(cfg), cfg.ce(), cfg.nuisance_spec(),
                          cfg.forest_params(), args.seed, h["cor_threshold"],
                          h["importance_repeats"])
    cio.write_text(args.out, cio.write_table(("feature", "importance"),
                                             (list(cohort.feature_names), imp)))


COMMANDS = {"simulate": cmd_simulate, "weights": cmd_weights, "fit": cmd_fit,
            "predict": cmd_predict, "benchmark": cmd_benchmark, "boundary": cmd_boundary,
            "analyze": cmd_analyze, "importance": cmd_importance}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except (InvalidArgumentError, InvalidStateError, DegenerateWeightError, FitFailureError,
            CalibrationError, OSError) as exc:
        print(f"ceitr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
