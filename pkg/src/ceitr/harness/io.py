"""CSV formats for cohorts, counterfactuals, weights and labels.

Cohort files have the columns ``id,a,u,delta,total_cost`` followed by the
covariates and, optionally, per-interval costs ``m_1..m_J``.  Floats are
written in their shortest round-trip form, so files reload exactly.
"""

from __future__ import annotations

import csv
import io
import re

import numpy as np

from ..core import Cohort, InvalidArgumentError, PartitionGrid, PotentialOutcomes, WeightVector

COHORT_FIXED = ("id", "a", "u", "delta", "total_cost")
_INTERVAL_COL = re.compile(r"^m_(\d+)$")


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_table(header, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_table(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidArgumentError("empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise InvalidArgumentError(f"row {k + 2} has {len(r)} fields, expected {len(header)}")
    try:
        data = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise InvalidArgumentError(f"non-numeric value in CSV: {exc}") from None
    return header, data


def read_text(path) -> str:
    with open(path, newline="") as fh:
        return fh.read()


def write_text(path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cohort_to_csv(cohort: Cohort, include_history: bool = True) -> str:
    header = list(COHORT_FIXED) + list(cohort.feature_names)
    cols = [cohort.ids, cohort.a, cohort.u, cohort.delta, cohort.total_cost, *cohort.x.T]
    if include_history and cohort.cost_history is not None:
        header += [f"m_{j + 1}" for j in range(cohort.grid.J)]
        cols += list(cohort.cost_history.T)
    return write_table(header, cols)


def cohort_from_csv(text: str, tau: float, grid: PartitionGrid = None) -> Cohort:
    """Parse a cohort file.  Interval-cost columns need a grid with J intervals."""
    header, data = read_table(text)
    missing = [c for c in COHORT_FIXED if c not in header]
    if missing:
        raise InvalidArgumentError(f"cohort CSV is missing columns {missing}")
    pos = {h: k for k, h in enumerate(header)}
    interval_cols = sorted((int(m.group(1)), pos[h]) for h in header
                           if (m := _INTERVAL_COL.match(h)))
    features = [h for h in header if h not in COHORT_FIXED and not _INTERVAL_COL.match(h)]
    if not features:
        raise InvalidArgumentError("cohort CSV has no covariate columns")
    hist = None
    if interval_cols:
        idx = [j for j, _ in interval_cols]
        if idx != list(range(1, len(idx) + 1)):
            raise InvalidArgumentError("interval cost columns must be m_1..m_J without gaps")
        if grid is None:
            raise InvalidArgumentError("interval cost columns need a partition grid")
        if grid.J != len(idx):
            raise InvalidArgumentError(
                f"grid has {grid.J} intervals but the CSV has {len(idx)} cost columns")
        hist = data[:, [c for _, c in interval_cols]]
    X = data[:, [pos[f] for f in features]]
    return Cohort(x=X, a=data[:, pos["a"]], u=data[:, pos["u"]], delta=data[:, pos["delta"]],
                  total_cost=data[:, pos["total_cost"]], tau=tau,
                  ids=data[:, pos["id"]].astype(np.int64), cost_history=hist,
                  grid=grid if hist is not None else None, feature_names=tuple(features))


def potentials_to_csv(ids, pot: PotentialOutcomes) -> str:
    return write_table(("id", "t0", "t1", "m0", "m1", "y0", "y1", "g_opt"),
                       (ids, pot.t0, pot.t1, pot.m0, pot.m1, pot.y0, pot.y1, pot.g_opt))


def potentials_from_csv(text: str, lam: float):
    header, data = read_table(text)
    need = ("id", "t0", "t1", "m0", "m1")
    if any(c not in header for c in need):
        raise InvalidArgumentError(f"potentials CSV needs columns {need}")
    pos = {h: k for k, h in enumerate(header)}
    col = lambda c: data[:, pos[c]]  # noqa: E731
    return col("id").astype(np.int64), PotentialOutcomes(col("t0"), col("t1"), col("m0"),
                                                          col("m1"), lam)


def weights_to_csv(ids, wv: WeightVector) -> str:
    return write_table(("id", "delta_t", "delta_m", "w", "z", "abs_w"),
                       (ids, wv.delta_t, wv.delta_m, wv.w, wv.z, wv.abs_w))


def weights_from_csv(text: str):
    header, data = read_table(text)
    if any(c not in header for c in ("id", "z", "abs_w")):
        raise InvalidArgumentError("weights CSV needs columns id, z, abs_w")
    pos = {h: k for k, h in enumerate(header)}
    return (data[:, pos["id"]].astype(np.int64), data[:, pos["z"]].astype(np.int64),
            data[:, pos["abs_w"]])


def labels_to_csv(ids, labels) -> str:
    return write_table(("id", "label"), (ids, np.asarray(labels, dtype=np.int64)))
