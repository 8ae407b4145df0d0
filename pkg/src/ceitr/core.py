"""Domain types shared by every stage of the pipeline.

A :class:`Cohort` stores observed data column-wise (one numpy array per
field), which is what all estimators consume.  :class:`Subject` is the
row view of the same data and is mostly useful for inspection and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class InvalidArgumentError(ValueError):
    pass


class InvalidStateError(RuntimeError):
    pass


class DegenerateWeightError(ArithmeticError):
    """A censoring survivor estimate hit zero where an inverse weight is needed."""


class CalibrationError(RuntimeError):
    pass


class FitFailureError(RuntimeError):
    pass


class SeparationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CEConfig:
    """Willingness-to-pay, restriction horizon and discounting."""

    lam: float = 50_000.0
    tau: float = 20.0
    discount_rate: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be positive, got {self.tau}")
        if not 0 <= self.discount_rate < 1:
            raise InvalidArgumentError("discount_rate must lie in [0, 1)")


@dataclass(frozen=True)
class PartitionGrid:
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise InvalidArgumentError("a grid needs at least two knots")
        if knots[0] != 0.0:
            raise InvalidArgumentError("the first knot must be exactly 0")
        if np.any(np.diff(knots) <= 0):
            raise InvalidArgumentError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def J(self) -> int:
        return self.knots.size - 1

    @property
    def tau(self) -> float:
        return float(self.knots[-1])

    @property
    def left(self) -> np.ndarray:
        return self.knots[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.knots[1:]

    def interval_of(self, t) -> np.ndarray:
        """Index j of the interval (t_j, t_{j+1}] containing each time."""
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=float), side="left") - 1
        return np.clip(idx, 0, self.J - 1)

    def to_string(self) -> str:
        return ",".join(repr(float(k)) for k in self.knots)

    @classmethod
    def from_string(cls, text: str) -> "PartitionGrid":
        return cls(np.array([float(tok) for tok in text.split(",") if tok.strip()]))

    def __eq__(self, other):
        return isinstance(other, PartitionGrid) and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash(self.knots.tobytes())


def build_uniform_grid(tau: float, J: int) -> PartitionGrid:
    """``J`` equal-width intervals covering ``(0, tau]``."""
    if int(J) != J or J < 1:
        raise InvalidArgumentError(f"J must be a positive integer, got {J}")
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    knots = np.linspace(0.0, float(tau), int(J) + 1)
    knots[-1] = float(tau)
    return PartitionGrid(knots)


def default_grid(tau: float) -> PartitionGrid:
    """Six-month intervals, the accrual period of the simulated ongoing cost."""
    return build_uniform_grid(tau, max(1, int(round(2 * tau))))


@dataclass(frozen=True)
class Subject:
    id: int
    x: np.ndarray
    a: int
    u: float
    delta: int
    death_observed: int
    total_cost: float
    cost_history: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Accrual:
    """Continuous-time cost accrual of the observed arm.

    Cost ``initial`` is charged at time 0, ``rate`` per year while alive and
    under observation, and ``death`` at the death time when the death is
    observed.  Lets a simulated cohort be re-binned onto any grid.
    """

    initial: np.ndarray
    rate: np.ndarray
    death: np.ndarray


def allocate_costs(accrual: Accrual, u, death_observed, grid: PartitionGrid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    left, right = grid.left, grid.right
    time_in = np.clip(np.minimum(u[:, None], right[None, :]) - left[None, :], 0.0, None)
    hist = accrual.rate[:, None] * time_in
    hist[:, 0] += accrual.initial
    dead = np.asarray(death_observed, dtype=bool)
    rows = np.flatnonzero(dead)
    hist[rows, grid.interval_of(u[rows])] += accrual.death[rows]
    return hist


@dataclass(frozen=True)
class Cohort:
    """Observed data, one row per subject.

    ``delta`` is 1 when the restricted outcome is fully known: death before
    censoring, or survival to the horizon ``tau`` uncensored.
    """

    x: np.ndarray
    a: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    total_cost: np.ndarray
    tau: float
    ids: Optional[np.ndarray] = None
    cost_history: Optional[np.ndarray] = None
    grid: Optional[PartitionGrid] = None
    accrual: Optional[Accrual] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = x.shape[0]
        a = np.asarray(self.a).astype(np.int64)
        u = np.asarray(self.u, dtype=float)
        delta = np.asarray(self.delta).astype(np.int64)
        cost = np.asarray(self.total_cost, dtype=float)
        for name, arr in (("a", a), ("u", u), ("delta", delta), ("total_cost", cost)):
            if arr.shape != (n,):
                raise InvalidArgumentError(f"{name} must have length {n}, got shape {arr.shape}")
        if not np.all(np.isin(a, (0, 1))) or not np.all(np.isin(delta, (0, 1))):
            raise InvalidArgumentError("a and delta must be binary")
        if np.any(u < 0) or np.any(u > self.tau * (1 + 1e-12)):
            raise InvalidArgumentError("observed times must lie in [0, tau]")
        if np.any(cost < 0):
            raise InvalidArgumentError("costs must be non-negative")
        if np.any(delta[u >= self.tau] != 1):
            raise InvalidArgumentError("subjects followed to tau must have delta = 1")
        ids = np.arange(1, n + 1) if self.ids is None else np.asarray(self.ids).astype(np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "total_cost", cost)
        object.__setattr__(self, "ids", ids)
        if self.feature_names is None:
            object.__setattr__(self, "feature_names",
                               tuple(f"x{k + 1}" for k in range(x.shape[1])))
        if self.cost_history is not None:
            hist = np.asarray(self.cost_history, dtype=float)
            if self.grid is None:
                raise InvalidArgumentError("cost_history needs the grid it is aligned to")
            if hist.shape != (n, self.grid.J):
                raise InvalidArgumentError(
                    f"cost_history has shape {hist.shape}, expected {(n, self.grid.J)}")
            if np.any(hist < 0):
                raise InvalidArgumentError("interval costs must be non-negative")
            object.__setattr__(self, "cost_history", hist)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def death_observed(self) -> np.ndarray:
        return ((self.delta == 1) & (self.u < self.tau)).astype(np.int64)

    def subject(self, i: int) -> Subject:
        hist = None if self.cost_history is None else self.cost_history[i]
        return Subject(int(self.ids[i]), self.x[i], int(self.a[i]), float(self.u[i]),
                       int(self.delta[i]), int(self.death_observed[i]),
                       float(self.total_cost[i]), hist)

    def subset(self, idx) -> "Cohort":
        idx = np.asarray(idx)
        acc = self.accrual
        if acc is not None:
            acc = Accrual(acc.initial[idx], acc.rate[idx], acc.death[idx])
        hist = None if self.cost_history is None else self.cost_history[idx]
        return replace(self, x=self.x[idx], a=self.a[idx], u=self.u[idx],
                       delta=self.delta[idx], total_cost=self.total_cost[idx],
                       ids=self.ids[idx], cost_history=hist, accrual=acc)

    def with_grid(self, grid: PartitionGrid) -> "Cohort":
        """Return the cohort with its cost history on ``grid``.

        Simulated cohorts are re-allocated from their accrual record.  Recorded
        histories can only be coarsened onto a subset of their own knots.
        """
        if not np.isclose(grid.tau, self.tau):
            raise InvalidArgumentError("grid must end at the cohort horizon")
        if self.grid is not None and grid == self.grid:
            return self
        if self.accrual is not None:
            hist = allocate_costs(self.accrual, self.u, self.death_observed, grid)
            return replace(self, cost_history=hist, grid=grid)
        if self.cost_history is None:
            raise InvalidArgumentError("cohort has no cost history to place on a grid")
        pos = np.searchsorted(self.grid.knots, grid.knots)
        pos = np.clip(pos, 0, self.grid.knots.size - 1)
        if not np.allclose(self.grid.knots[pos], grid.knots, rtol=0, atol=1e-9):
            raise InvalidArgumentError(
                "target grid knots must be a subset of the recorded cost-history knots")
        csum = np.concatenate([np.zeros((self.n, 1)), np.cumsum(self.cost_history, axis=1)], axis=1)
        hist = np.diff(csum[:, pos], axis=1)
        return replace(self, cost_history=hist, grid=grid)


@dataclass(frozen=True)
class PotentialOutcomes:
    t0: np.ndarray
    t1: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    lam: float

    @property
    def y0(self) -> np.ndarray:
        return self.lam * self.t0 - self.m0

    @property
    def y1(self) -> np.ndarray:
        return self.lam * self.t1 - self.m1

    @property
    def delta_y(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def g_opt(self) -> np.ndarray:
        return (self.delta_y > 0).astype(np.int64)

    def subset(self, idx) -> "PotentialOutcomes":
        return PotentialOutcomes(self.t0[idx], self.t1[idx], self.m0[idx], self.m1[idx], self.lam)


@dataclass(frozen=True)
class WeightVector:
    delta_t: np.ndarray
    delta_m: np.ndarray
    lam: float

    @property
    def w(self) -> np.ndarray:
        return self.lam * self.delta_t - self.delta_m

    @property
    def z(self) -> np.ndarray:
        return (self.w > 0).astype(np.int64)

    @property
    def abs_w(self) -> np.ndarray:
        return np.abs(self.w)


def interval_quantities(subject: Subject, grid: PartitionGrid):
    """Interval-truncated time, event flag and cost for one subject.

    Interval j is ``(t_j, t_{j+1}]``.  Its truncated time is
    ``min(u, t_{j+1})`` and its flag is 1 when the subject was followed to
    the end of the interval or its restricted outcome is already known.
    """
    if subject.cost_history is None:
        raise InvalidArgumentError("subject has no cost history")
    hist = np.asarray(subject.cost_history, dtype=float)
    if hist.shape != (grid.J,):
        raise InvalidArgumentError(
            f"cost history has {hist.size} entries but the grid has {grid.J} intervals")
    u_j, d_j = _interval_times(np.array([subject.u]), np.array([subject.delta]), grid)
    return u_j[0], d_j[0], hist


def _interval_times(u: np.ndarray, delta: np.ndarray, grid: PartitionGrid):
    right = grid.right
    u_j = np.minimum(u[:, None], right[None, :])
    d_j = (delta[:, None] == 1) | (u[:, None] >= right[None, :])
    return u_j, d_j.astype(np.int64)


def cohort_interval_quantities(cohort: Cohort, grid: Optional[PartitionGrid] = None):
    """Vectorised :func:`interval_quantities`, each output shaped (n, J)."""
    if grid is not None:
        cohort = cohort.with_grid(grid)
    if cohort.cost_history is None:
        raise InvalidArgumentError("cohort has no cost history; partitioned methods need one")
    u_j, d_j = _interval_times(cohort.u, cohort.delta, cohort.grid)
    return u_j, d_j, cohort.cost_history
