"""Evaluation of estimated rules against simulated counterfactuals."""

import numpy as np

from ..core import InvalidArgumentError, PotentialOutcomes


def classification_accuracy(g_hat, g_opt) -> float:
    """Fraction of subjects assigned to their optimal arm."""
    g_hat, g_opt = np.asarray(g_hat), np.asarray(g_opt)
    if g_hat.shape != g_opt.shape:
        raise InvalidArgumentError(f"length mismatch: {g_hat.shape} vs {g_opt.shape}")
    if g_hat.size == 0:
        raise InvalidArgumentError("empty rule")
    return float(np.mean(g_hat == g_opt))


def mean_nmb_under_rule(potentials: PotentialOutcomes, g_hat) -> float:
    """Sample mean of y1 * g + y0 * (1 - g)."""
    g = np.asarray(g_hat)
    if g.shape != potentials.y0.shape:
        raise InvalidArgumentError("rule length does not match the potential outcomes")
    return float(np.mean(np.where(g == 1, potentials.y1, potentials.y0)))


def oracle_nmb(potentials: PotentialOutcomes) -> float:
    return mean_nmb_under_rule(potentials, potentials.g_opt)
