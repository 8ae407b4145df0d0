"""Simulation runs, metrics, cohort analysis and the command-line interface."""

from .analysis import AnalysisReport, analyze_external, out_of_fold_rule, rule_value
from .boundary import export_boundary_grid
from .config import Config
from .methods import ALL_METHODS, MethodSpec, fit_rule, parse_methods
from .metrics import classification_accuracy, mean_nmb_under_rule, oracle_nmb
from .runner import ScenarioResult, results_csv, run_scenario, scenario_grid

__all__ = [
    "ALL_METHODS",
    "AnalysisReport",
    "Config",
    "MethodSpec",
    "ScenarioResult",
    "analyze_external",
    "classification_accuracy",
    "export_boundary_grid",
    "fit_rule",
    "mean_nmb_under_rule",
    "oracle_nmb",
    "out_of_fold_rule",
    "parse_methods",
    "results_csv",
    "rule_value",
    "run_scenario",
    "scenario_grid",
]
