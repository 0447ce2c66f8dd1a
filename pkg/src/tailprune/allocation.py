"""Per-class budget allocation under a power-law error model.

Each class's reducible error is modeled as E_y(m) = c_y * m^(-gamma) + bias_y.
Under a total budget m, the risk-minimizing continuous allocation is

    m_y* = m * (c_y * pi_y)^(1/(1+gamma)) / sum_z (c_z * pi_z)^(1/(1+gamma))

which this module computes in closed form, integerizes exactly, checks
against a brute-force KKT solver, and post-processes with a per-class
safety floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import EmbeddingDataset, FloatArray, IntArray, PriorVector
from .exceptions import InfeasibleError
from .signals import ScoreKind, score_scalar

__all__ = [
    "RateModel",
    "AllocationPlan",
    "continuous_allocation",
    "optimal_allocation",
    "allocation_oracle",
    "allocation_objective",
    "floor_gain",
    "apply_floor",
    "estimate_complexities",
]


@dataclass(frozen=True)
class RateModel:
    """Error-rate model parameters: per-class scale, shared decay, offsets."""

    complexities: FloatArray
    gamma: float
    bias_terms: FloatArray | None = None

    def __post_init__(self):
        c = np.asarray(self.complexities, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("complexities must be a nonempty vector")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValueError("complexities must be positive finite")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive")
        bias = np.zeros(c.size) if self.bias_terms is None else \
            np.asarray(self.bias_terms, dtype=np.float64)
        if bias.shape != c.shape or np.any(bias < 0) or not np.all(np.isfinite(bias)):
            raise ValueError("bias_terms must be nonnegative, same length as complexities")
        for name, val in (("complexities", c), ("bias_terms", bias)):
            val = np.ascontiguousarray(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def num_classes(self) -> int:
        return int(self.complexities.size)


@dataclass(frozen=True)
class AllocationPlan:
    """Integer per-class budgets summing exactly to the total."""

    budgets: IntArray
    target_prior: PriorVector
    total: int
    floor: int = 0

    def __post_init__(self):
        b = np.asarray(self.budgets, dtype=np.int64)
        if b.ndim != 1 or b.size != self.target_prior.num_classes:
            raise ValueError("budgets must align with the prior")
        if np.any(b < 0):
            raise ValueError("budgets must be nonnegative")
        if int(b.sum()) != self.total:
            raise ValueError(f"budgets sum to {int(b.sum())}, expected {self.total}")
        if self.floor < 0:
            raise ValueError("floor must be >= 0")
        b = np.ascontiguousarray(b)
        b.flags.writeable = False
        object.__setattr__(self, "budgets", b)


def _check_shapes(rm: RateModel, prior: PriorVector) -> None:
    if rm.num_classes != prior.num_classes:
        raise ValueError("rate model and prior disagree on class count")


def continuous_allocation(rm: RateModel, prior: PriorVector, m: int) -> FloatArray:
    """Real-valued optimal budgets; classes with zero prior mass get 0."""
    _check_shapes(rm, prior)
    if m < 0:
        raise ValueError("budget must be >= 0")
    a = rm.complexities * prior.probs
    shares = a ** (1.0 / (1.0 + rm.gamma))
    return m * shares / shares.sum()


def optimal_allocation(rm: RateModel, prior: PriorVector, m: int) -> AllocationPlan:
    """Closed-form allocation, integerized by the largest-remainder method.

    Floors of the continuous solution are assigned first, then the
    leftover units go to the classes with the largest fractional parts
    (ties toward the lowest class id), so the total is exactly m.
    """
    real = continuous_allocation(rm, prior, m)
    base = np.floor(real).astype(np.int64)
    frac = real - base
    leftover = int(m - base.sum())
    order = np.lexsort((np.arange(real.size), -frac))
    base[order[:leftover]] += 1
    return AllocationPlan(base, prior, m)


def allocation_oracle(rm: RateModel, prior: PriorVector, m: int,
                      max_iter: int = 400) -> FloatArray:
    """Independent KKT solve of the same problem, for cross-checking.

    Stationarity gives m_y^(gamma+1) = gamma * a_y / lam with a_y = c_y*pi_y;
    the multiplier lam is found by bisection against sum m_y(lam) = m.
    Restricted to small class counts: this is a test oracle, not the API.
    """
    _check_shapes(rm, prior)
    if rm.num_classes > 8:
        raise ValueError("oracle supports at most 8 classes")
    if m <= 0:
        raise ValueError("budget must be >= 1")
    a = rm.complexities * prior.probs
    k = 1.0 / (1.0 + rm.gamma)

    def total(lam: float) -> float:
        return float(np.sum((rm.gamma * a / lam) ** k))

    lo = hi = 1.0
    for _ in range(max_iter):
        if total(hi) <= m:
            break
        hi *= 2.0
    else:
        raise RuntimeError("oracle bracketing failed to converge (upper)")
    for _ in range(max_iter):
        if total(lo) >= m:
            break
        lo /= 2.0
    else:
        raise RuntimeError("oracle bracketing failed to converge (lower)")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if total(mid) > m:
            lo = mid
        else:
            hi = mid
    return (rm.gamma * a / (0.5 * (lo + hi))) ** k


def allocation_objective(rm: RateModel, prior: PriorVector, budgets) -> float:
    """Modeled risk sum pi_y * (c_y * m_y^(-gamma) + bias_y) of an allocation.

    A zero budget for a class with positive prior mass costs +inf.
    """
    _check_shapes(rm, prior)
    b = np.asarray(budgets, dtype=np.float64)
    if b.shape != rm.complexities.shape:
        raise ValueError("budgets must align with the rate model")
    out = 0.0
    for y in range(rm.num_classes):
        if prior.probs[y] == 0.0:
            continue
        if b[y] <= 0.0:
            return float("inf")
        out += prior.probs[y] * (rm.complexities[y] * b[y] ** (-rm.gamma)
                                 + rm.bias_terms[y])
    return out


def floor_gain(b: int, gamma: float) -> float:
    """Fraction of a class's reducible error removed by its first b samples.

    Under the m^(-gamma) decay this is 1 - b^(-gamma): it depends only on
    the floor and the decay rate, not on any prior or reweighting.
    """
    if b < 1:
        raise ValueError("floor must be >= 1")
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError("gamma must be positive")
    return 1.0 - float(b) ** (-gamma)


def apply_floor(plan: AllocationPlan, b: int, class_sizes) -> AllocationPlan:
    """Guarantee every class at least min(b, class size) budget.

    Deficient classes are raised to their floor; the excess is taken back
    one unit at a time from the currently largest budget (ties toward the
    lowest class id), never pushing a donor below its own floor.
    """
    sizes = np.asarray(class_sizes, dtype=np.int64)
    if sizes.shape != plan.budgets.shape or np.any(sizes < 0):
        raise ValueError("class_sizes must be nonnegative, one per class")
    if b < 0:
        raise ValueError("floor must be >= 0")
    floors = np.minimum(b, sizes)
    need = int(floors.sum())
    if need > plan.total:
        raise InfeasibleError(
            f"floor {b} needs {need} samples but the budget is {plan.total} "
            f"(shortfall {need - plan.total})"
        )
    out = np.maximum(plan.budgets, floors)
    excess = int(out.sum()) - plan.total
    while excess > 0:
        donors = np.flatnonzero(out > floors)
        donor = donors[np.argmax(out[donors])]  # argmax keeps lowest id on ties
        out[donor] -= 1
        excess -= 1
    return AllocationPlan(out, plan.target_prior, plan.total, floor=b)


def estimate_complexities(ds: EmbeddingDataset, min_value: float = 1e-12) -> FloatArray:
    """Heuristic c_y: per-class mean distance to the class-center embedding.

    A proxy for intra-class spread; replaceable by any positive vector.
    Degenerate (single-point) classes are clamped to ``min_value``.
    """
    dist = score_scalar(ds, ScoreKind.CENTER_DIST)
    out = np.empty(ds.num_classes, dtype=np.float64)
    for y in range(ds.num_classes):
        idx = ds.class_indices(y)
        if idx.size == 0:
            raise ValueError(f"class {y} has no samples")
        out[y] = max(float(dist[idx].mean()), min_value)
    return out
