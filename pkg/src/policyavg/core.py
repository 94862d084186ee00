"""Domain types and newsvendor cost primitives shared by every other module.

All types are immutable after construction (arrays are frozen) and safe to
share across concurrent workers; the cost operations are pure functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "CostParams",
    "WeightBox",
    "FoldPlan",
    "PolicyEvalMatrix",
    "newsvendor_cost",
    "empirical_cost",
    "critical_ratio",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Ordered demand observations with optional covariate vectors.

    ``demands`` has shape (t,), ``covariates`` shape (t, d) with d = 0 for a
    plain demand history.  ``positions`` records each row's index in the
    original series and survives fold removal, so time-indexed candidates can
    evaluate held-out rows at their true positions.
    """

    demands: np.ndarray
    covariates: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        demands = _frozen_array(self.demands)
        if demands.ndim != 1:
            raise ValueError("demands must be one-dimensional")
        t = demands.shape[0]
        if t < 2:
            raise ValueError("a dataset needs at least 2 rows")
        if not np.all(np.isfinite(demands)):
            raise ValueError("demands must be finite")
        if np.any(demands < 0):
            raise ValueError("demands must be nonnegative")
        covariates = np.array(self.covariates, dtype=float)
        if covariates.ndim != 2 or covariates.shape[0] != t:
            raise ValueError("covariates must have shape (t, d)")
        if covariates.size and not np.all(np.isfinite(covariates)):
            raise ValueError("covariates must be finite")
        covariates.setflags(write=False)
        positions = _frozen_array(self.positions, dtype=int)
        if positions.shape != (t,):
            raise ValueError("positions must have shape (t,)")
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "positions", positions)

    @classmethod
    def from_arrays(cls, demands, covariates=None) -> "Dataset":
        demands = np.asarray(demands, dtype=float)
        t = demands.shape[0]
        if covariates is None:
            covariates = np.empty((t, 0))
        return cls(demands, covariates, np.arange(t))

    @property
    def t(self) -> int:
        return self.demands.shape[0]

    @property
    def covariate_dim(self) -> int:
        return self.covariates.shape[1]

    def drop_indices(self, indices) -> "Dataset":
        """Dataset with the given rows removed; original positions retained."""
        mask = np.ones(self.t, dtype=bool)
        mask[np.asarray(indices, dtype=int)] = False
        return Dataset(self.demands[mask], self.covariates[mask], self.positions[mask])


@dataclass(frozen=True)
class CostParams:
    """Per-unit overage and underage costs."""

    co: float
    cu: float

    def __post_init__(self):
        if not (math.isfinite(self.co) and math.isfinite(self.cu)):
            raise ValueError("costs must be finite")
        if self.co <= 0 or self.cu <= 0:
            raise ValueError("costs must be positive")

    @property
    def critical_ratio(self) -> float:
        return self.cu / (self.co + self.cu)


@dataclass(frozen=True)
class WeightBox:
    """Box bounds for combination weights: lower <= 0 <= 1 <= upper."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower <= 0.0 <= 1.0 <= self.upper):
            raise ValueError("weight box must satisfy L <= 0 <= 1 <= U")


@dataclass(frozen=True)
class FoldPlan:
    """Partition of row indices 0..t-1 into evaluation folds.

    Every fold has ``batch_size`` rows except possibly the last.  The default
    plan (batch_size 1) is exact leave-one-out; larger batches are contiguous.
    """

    batch_size: int
    folds: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        folds = tuple(tuple(int(i) for i in fold) for fold in self.folds)
        flat = [i for fold in folds for i in fold]
        t = len(flat)
        if sorted(flat) != list(range(t)):
            raise ValueError("folds must partition 0..t-1")
        for fold in folds[:-1]:
            if len(fold) != self.batch_size:
                raise ValueError("every fold but the last must have batch_size rows")
        if folds and not (0 < len(folds[-1]) <= self.batch_size):
            raise ValueError("last fold must have between 1 and batch_size rows")
        object.__setattr__(self, "folds", folds)

    @classmethod
    def contiguous(cls, t: int, batch_size: int = 1) -> "FoldPlan":
        folds = tuple(
            tuple(range(start, min(start + batch_size, t)))
            for start in range(0, t, batch_size)
        )
        return cls(batch_size, folds)

    @property
    def n_folds(self) -> int:
        return len(self.folds)


@dataclass(frozen=True)
class PolicyEvalMatrix:
    """m x t table of candidate order quantities at held-out rows.

    Entry (i, j) is candidate i's order for row j, fitted without row j's
    fold.  ``heldout_demands`` holds the matching realized demands.
    """

    entries: np.ndarray
    heldout_demands: np.ndarray
    candidate_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        entries = _frozen_array(self.entries)
        if entries.ndim != 2:
            raise ValueError("entries must be an m x t matrix")
        demands = _frozen_array(self.heldout_demands)
        if demands.shape != (entries.shape[1],):
            raise ValueError("heldout_demands length must match matrix columns")
        if not np.all(np.isfinite(entries)) or not np.all(np.isfinite(demands)):
            raise ValueError("matrix entries and demands must be finite")
        labels = tuple(self.candidate_labels)
        if labels and len(labels) != entries.shape[0]:
            raise ValueError("one label per candidate row")
        if not labels:
            labels = tuple(f"cand_{i}" for i in range(entries.shape[0]))
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "heldout_demands", demands)
        object.__setattr__(self, "candidate_labels", labels)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def t(self) -> int:
        return self.entries.shape[1]


def newsvendor_cost(q: float, d: float, costs: CostParams) -> float:
    """co * max(q - d, 0) + cu * max(d - q, 0); zero iff q == d."""
    if not (math.isfinite(q) and math.isfinite(d)):
        raise ValueError("order quantity and demand must be finite")
    return costs.co * max(q - d, 0.0) + costs.cu * max(d - q, 0.0)


def empirical_cost(q_values, demands, costs: CostParams) -> float:
    """Mean newsvendor cost over paired (order, demand) entries."""
    q = np.asarray(q_values, dtype=float)
    d = np.asarray(demands, dtype=float)
    if q.shape != d.shape or q.ndim != 1 or q.size == 0:
        raise ValueError("q_values and demands must be equal-length vectors")
    diff = q - d
    over = np.maximum(diff, 0.0)
    under = np.maximum(-diff, 0.0)
    return float(np.mean(costs.co * over + costs.cu * under))


def critical_ratio(costs: CostParams) -> float:
    """cu / (co + cu), the quantile level of the optimal order."""
    return costs.critical_ratio
