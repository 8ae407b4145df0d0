"""Rule evaluation over an (x1, x2) lattice for decision-boundary plots."""

import numpy as np

from ..core import InvalidArgumentError
from .io import write_table


def boundary_lattice(x1_range, x2_range, resolution, fixed_others, features=(0, 1)):
    """Lattice design matrix; columns other than ``features`` are held at ``fixed_others``."""
    if resolution < 2:
        raise InvalidArgumentError("resolution must be at least 2")
    base = np.asarray(fixed_others, dtype=float)
    g1 = np.linspace(*x1_range, resolution)
    g2 = np.linspace(*x2_range, resolution)
    a, b = np.meshgrid(g1, g2, indexing="ij")
    X = np.tile(base, (a.size, 1))
    X[:, features[0]] = a.ravel()
    X[:, features[1]] = b.ravel()
    return X


def export_boundary_grid(rule, x1_range, x2_range, resolution, fixed_others,
                         features=(0, 1)) -> str:
    """CSV with columns x1,x2,label; ``rule`` is a fitted rule or a callable X -> labels."""
    X = boundary_lattice(x1_range, x2_range, resolution, fixed_others, features)
    predict = rule.predict if hasattr(rule, "predict") else rule
    labels = np.asarray(predict(X), dtype=np.int64)
    return write_table(("x1", "x2", "label"), (X[:, features[0]], X[:, features[1]], labels))
