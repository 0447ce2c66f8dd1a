"""Seeded global selection: one knob between coverage and class safety.

The ratio K in [0, 1] splits the budget B: roughly K*B is spent seeding
every class through a stratified pass (protecting per-class accuracy),
the remainder goes to one global pass of the same selector (chasing
overall accuracy).  The two sets are unioned and topped up to exactly B.
Every class is guaranteed at least min(floor(K*B/C), n_y) picks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataset import EmbeddingDataset
from .exceptions import InfeasibleError
from .selectors import Method, Selection, SelectorSpec, select
from .signals import rbf_kernel

__all__ = ["SgsConfig", "SweepRow", "sgs_select", "sweep_k"]


@dataclass(frozen=True)
class SgsConfig:
    k_ratio: float
    budget: int
    base_selector: SelectorSpec
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.k_ratio <= 1.0):
            raise ValueError("k_ratio must lie in [0, 1]")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    k: float
    budget: int
    oa: float
    macc: float
    seed: int


def sgs_select(ds: EmbeddingDataset, cfg: SgsConfig) -> Selection:
    """Stratified seeding, global selection, union, then top-up to budget.

    The per-class seed quota is b = floor(K*B/C); the global phase gets
    the remaining B - b*C.  Overlap between the phases is absorbed by a
    final top-up pass conditioned on the union, so the result always has
    exactly B samples.  Fully deterministic.
    """
    B, C = cfg.budget, ds.num_classes
    if B > ds.n:
        raise InfeasibleError(f"budget {B} exceeds dataset size {ds.n}")
    b = int(math.floor(cfg.k_ratio * B / C))
    spec = cfg.base_selector

    kernel = None
    if spec.method is Method.FLRBF:
        # global and top-up phases share one full-dataset kernel
        kernel = rbf_kernel(ds.embeddings.astype(np.float64))

    parts: list[np.ndarray] = []
    if b > 0:
        sizes = ds.class_counts
        for y in range(C):
            quota = min(b, int(sizes[y]))
            if quota == 0:
                continue
            parts.append(select(ds, quota, spec, pool=ds.class_indices(y)).indices)
    global_budget = B - b * C
    if global_budget > 0:
        parts.append(select(ds, global_budget, spec, kernel=kernel).indices)

    union = np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
    shortfall = B - union.size
    if shortfall > 0:
        extra = select(ds, shortfall, spec, init=union, kernel=kernel).indices
        union = np.union1d(union, extra)

    counts = np.bincount(ds.labels[union], minlength=C).astype(np.int64)
    return Selection(union, np.full(union.size, 1.0 / union.size), counts,
                     f"sgs+{spec.name}", B, seed_used=cfg.seed, k_ratio=cfg.k_ratio)


def sweep_k(
    ds: EmbeddingDataset,
    budgets: Sequence[int],
    k_grid: Sequence[float],
    eval_fn: Callable[[EmbeddingDataset, Selection], tuple[float, float]],
    base_selector: SelectorSpec,
    seed: int = 0,
) -> list[SweepRow]:
    """Evaluate the K trade-off curve: one row per (budget, K) pair.

    ``eval_fn(ds, selection) -> (oa, macc)`` scores each selection, e.g.
    by retraining a probe head on the subset.
    """
    if len(budgets) == 0 or len(k_grid) == 0:
        raise ValueError("budgets and k_grid must be nonempty")
    rows: list[SweepRow] = []
    for budget in budgets:
        for k in k_grid:
            sel = sgs_select(ds, SgsConfig(float(k), int(budget), base_selector, seed))
            oa, macc = eval_fn(ds, sel)
            rows.append(SweepRow(float(k), int(budget), float(oa), float(macc), seed))
    return rows
