"""INI configuration with typed keys.

Sections: [ce], [dgp], [nuisance], [tree], [forest], [harness].  Every key
has a type and a default; unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser

from ..core import CEConfig, InvalidArgumentError, PartitionGrid, build_uniform_grid, default_grid
from ..dgp import DGPScenario
from ..nuisance import NuisanceSpec


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    def parse(text):
        if text is None or str(text).strip().lower() in ("", "none", "auto"):
            return None
        return conv(text)
    return parse


def _int_tuple(text):
    text = str(text).strip()
    return tuple(int(t) for t in text.split(",") if t.strip()) if text else ()


def _float_tuple(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _str_tuple(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


SCHEMA = {
    "ce": {"lam": (float, 50_000.0), "tau": (float, 20.0), "discount_rate": (float, 0.0),
           "intervals": (_opt(int), None), "grid": (_opt(_float_tuple), None)},
    "dgp": {"n": (int, 1000), "em_mode": (str, "EM-TM"), "hte_mode": (str, "small"),
            "censor_rate": (float, 0.0), "randomized": (_opt(float), None),
            "cost_multiplier": (float, 1000.0)},
    "nuisance": {"interactions": (_int_tuple, (0, 1)), "misspecified": (_bool, False),
                 "epsilon": (float, 0.01), "censoring": (str, "km"),
                 "newton_tol": (float, 1e-8), "newton_max_iter": (int, 100),
                 "irls_tol": (float, 1e-8), "irls_max_iter": (int, 50),
                 "min_interval_subjects": (int, 10)},
    "tree": {"max_depth": (int, 10), "min_samples_split": (int, 2), "min_samples_leaf": (int, 1),
             "min_weight_fraction_leaf": (float, 0.005), "cp": (_opt(float), None),
             "cv_folds": (int, 10)},
    "forest": {"n_estimators": (int, 50), "mtry": (_opt(int), None), "max_depth": (int, 5),
               "subsample": (float, 0.632), "mincriterion": (float, 0.0),
               "min_samples_split": (int, 20), "min_samples_leaf": (int, 7),
               "weighted_selection": (_bool, True), "cv_folds": (int, 10)},
    "harness": {"method": (str, "CRF-AIPW-P"), "methods": (_str_tuple, ("all",)),
                "reps": (int, 50), "seed": (_opt(int), None), "n_jobs": (int, 1),
                "folds": (int, 10), "bootstrap": (int, 1000), "bootstrap_mode": (str, "full"),
                "cor_threshold": (float, 0.2), "importance_repeats": (int, 1),
                "resolution": (int, 50)},
}


class Config:
    """Typed view of the configuration; ``cfg[section][key]``."""

    def __init__(self, values=None):
        self.values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        for section, keys in (values or {}).items():
            for key, value in keys.items():
                self.set(section, key, value)

    def __getitem__(self, section):
        return self.values[section]

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise InvalidArgumentError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise InvalidArgumentError(f"unknown key '{key}' in [{section}]")
        conv = SCHEMA[section][key][0]
        if isinstance(value, str) or value is None:
            try:
                value = conv(value) if value is not None else None
            except ValueError as exc:
                raise InvalidArgumentError(f"[{section}] {key}: {exc}") from None
        self.values[section][key] = value

    @classmethod
    def read(cls, path=None) -> "Config":
        cfg = cls()
        if path is None:
            return cfg
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise InvalidArgumentError(f"cannot parse config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(section, key, value)
        return cfg

    # -- typed builders ---------------------------------------------------

    def ce(self) -> CEConfig:
        c = self["ce"]
        return CEConfig(lam=c["lam"], tau=c["tau"], discount_rate=c["discount_rate"])

    def grid(self) -> PartitionGrid:
        c = self["ce"]
        if c["grid"] is not None:
            return PartitionGrid(c["grid"])
        if c["intervals"] is not None:
            return build_uniform_grid(c["tau"], c["intervals"])
        return default_grid(c["tau"])

    def scenario(self, seed=0) -> DGPScenario:
        d, c = self["dgp"], self["ce"]
        return DGPScenario(n=d["n"], em_mode=d["em_mode"], hte_mode=d["hte_mode"],
                           censor_target=d["censor_rate"], lam=c["lam"], tau=c["tau"],
                           cost_multiplier=d["cost_multiplier"], randomized=d["randomized"],
                           intervals=c["intervals"], seed=seed)

    def nuisance_spec(self) -> NuisanceSpec:
        return NuisanceSpec(**self["nuisance"])

    def tree_params(self) -> dict:
        return dict(self["tree"])

    def forest_params(self) -> dict:
        return dict(self["forest"])
