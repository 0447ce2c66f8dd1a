"""Subset selectors over embedding datasets.

Every method is deterministic: ties are always broken toward the lowest
sample index, and a selection's indices are stored sorted ascending.  A
selector can be restricted to a candidate pool (e.g. one class) and
conditioned on an already-selected set, which is how the stratified and
seeded pipelines compose the same primitive.
"""

from __future__ import annotations

import enum
import heapq
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import EmbeddingDataset, FloatArray, IntArray
from .signals import KernelMatrix, ScoreKind, rbf_kernel, score_scalar

__all__ = [
    "Method",
    "SelectorSpec",
    "Selection",
    "select",
    "stratified_select",
    "facility_location_value",
    "selection_to_dict",
    "selection_from_dict",
    "save_selection",
    "load_selection",
]


class Method(enum.Enum):
    """Selection strategies."""

    TOPK = "topk"
    BOTTOMK = "bottomk"
    HERDING = "herding"
    KCENTER = "kcenter"
    FLRBF = "flrbf"

    @property
    def uses_scores(self) -> bool:
        return self in (Method.TOPK, Method.BOTTOMK)


@dataclass(frozen=True)
class SelectorSpec:
    """A method plus, for rank-based methods, the score to rank by."""

    method: Method
    score_kind: ScoreKind | None = None

    def __post_init__(self):
        if self.method.uses_scores and self.score_kind is None:
            raise ValueError(f"method {self.method.value!r} requires a score_kind")
        if not self.method.uses_scores and self.score_kind is not None:
            raise ValueError(f"method {self.method.value!r} does not take a score_kind")

    @property
    def name(self) -> str:
        if self.score_kind is not None:
            return f"{self.method.value}:{self.score_kind.value}"
        return self.method.value


@dataclass(frozen=True)
class Selection:
    """An index set with per-sample weights and bookkeeping.

    ``indices`` are global sample ids, sorted ascending.  ``weights``
    align with ``indices`` and sum to 1 for any nonempty selection.
    """

    indices: IntArray
    weights: FloatArray
    per_class_counts: IntArray
    method: str
    budget: int
    seed_used: int | None = None
    k_ratio: float = 0.0
    clamp_count: int = 0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if idx.ndim != 1 or w.shape != idx.shape:
            raise ValueError("indices and weights must be aligned 1-d arrays")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(float(w.sum()) - 1.0) > 1e-9:
                raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        pcc = np.asarray(self.per_class_counts, dtype=np.int64)
        if int(pcc.sum()) != idx.size:
            raise ValueError("per_class_counts must sum to the selection size")
        for name, val in (("indices", idx), ("weights", w), ("per_class_counts", pcc)):
            val = np.ascontiguousarray(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def with_weights(self, weights) -> "Selection":
        return Selection(self.indices, weights, self.per_class_counts, self.method,
                         self.budget, self.seed_used, self.k_ratio, self.clamp_count)


def _class_counts(indices: np.ndarray, labels: np.ndarray, num_classes: int) -> IntArray:
    if indices.size == 0:
        return np.zeros(num_classes, dtype=np.int64)
    return np.bincount(labels[indices], minlength=num_classes).astype(np.int64)


def _uniform_weights(k: int) -> FloatArray:
    return np.full(k, 1.0 / k) if k else np.zeros(0)


def facility_location_value(kernel: KernelMatrix | np.ndarray, selected) -> float:
    """Coverage objective: sum over all points of their best similarity in S."""
    K = kernel.values if isinstance(kernel, KernelMatrix) else np.asarray(kernel)
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size == 0:
        return 0.0
    return float(np.max(K[:, sel], axis=1).sum())


def _marginal_gain(K: np.ndarray, coverage: np.ndarray, j: int) -> float:
    # single shared arithmetic path so lazy and naive greedy agree bitwise;
    # the relu form is monotone in coverage even in floating point, which
    # keeps stale heap entries valid upper bounds
    return float(np.maximum(K[:, j] - coverage, 0.0).sum())


def _fl_greedy_naive_order(K: np.ndarray, candidates: list[int], init: list[int],
                           budget: int) -> list[int]:
    coverage = np.zeros(K.shape[0])
    for j in init:
        coverage = np.maximum(coverage, K[:, j])
    remaining = list(candidates)
    picks: list[int] = []
    for _ in range(budget):
        best_j, best_gain = -1, -np.inf
        for j in remaining:
            g = _marginal_gain(K, coverage, j)
            if g > best_gain:
                best_j, best_gain = j, g
        picks.append(best_j)
        remaining.remove(best_j)
        coverage = np.maximum(coverage, K[:, best_j])
    return picks


def _fl_greedy_lazy_order(K: np.ndarray, candidates: list[int], init: list[int],
                          budget: int) -> list[int]:
    coverage = np.zeros(K.shape[0])
    for j in init:
        coverage = np.maximum(coverage, K[:, j])
    # stale upper bounds; an entry is only trusted once recomputed at the
    # current coverage and still at least as good as the next-best bound
    heap = [(-_marginal_gain(K, coverage, j), j) for j in candidates]
    heapq.heapify(heap)
    picks: list[int] = []
    for _ in range(budget):
        while True:
            neg_gain, j = heapq.heappop(heap)
            fresh = (-_marginal_gain(K, coverage, j), j)
            if not heap or fresh <= heap[0]:
                picks.append(j)
                coverage = np.maximum(coverage, K[:, j])
                break
            heapq.heappush(heap, fresh)
    return picks


def _herding_order(emb: np.ndarray, candidates: list[int], init: list[int],
                   budget: int) -> list[int]:
    mu = emb.mean(axis=0)
    w = mu.copy()
    for j in init:  # replay the conditioning picks through the recurrence
        w += mu - emb[j]
    remaining = list(candidates)
    picks: list[int] = []
    for _ in range(budget):
        scores = np.array([float(w @ emb[j]) for j in remaining])
        best = int(np.argmax(scores))  # argmax keeps the first (lowest) index on ties
        j = remaining.pop(best)
        picks.append(j)
        w += mu - emb[j]
    return picks


def _kcenter_order(emb: np.ndarray, candidates: list[int], init: list[int],
                   budget: int) -> list[int]:
    remaining = list(candidates)
    picks: list[int] = []
    if init:
        mindist = np.min(
            np.linalg.norm(emb[:, None, :] - emb[None, init, :], axis=2), axis=1
        )
    else:
        centroid = emb.mean(axis=0)
        start_d = np.linalg.norm(emb[remaining] - centroid, axis=1)
        j = remaining.pop(int(np.argmax(start_d)))
        picks.append(j)
        mindist = np.linalg.norm(emb - emb[j], axis=1)
    while len(picks) < budget:
        j = remaining.pop(int(np.argmax(mindist[remaining])))
        picks.append(j)
        mindist = np.minimum(mindist, np.linalg.norm(emb - emb[j], axis=1))
    return picks


def _ranked_order(scores: np.ndarray, candidates: list[int], budget: int,
                  descending: bool) -> list[int]:
    cand = np.asarray(candidates, dtype=np.int64)
    key = -scores[cand] if descending else scores[cand]
    order = np.lexsort((cand, key))  # primary: score key, secondary: lowest id
    return [int(c) for c in cand[order][:budget]]


def select(
    ds: EmbeddingDataset,
    budget: int,
    spec: SelectorSpec,
    pool: np.ndarray | None = None,
    init: np.ndarray | None = None,
    kernel: KernelMatrix | None = None,
) -> Selection:
    """Pick ``budget`` new samples from ``pool``, conditioned on ``init``.

    ``pool`` defaults to the whole dataset; ``init`` marks samples treated
    as already selected (they condition the method but are not returned).
    If the budget meets or exceeds the available candidates, the whole
    candidate set is returned without running the method.  A ``kernel``
    over the full dataset may be supplied to skip rebuilding it; it is
    only consulted when ``pool`` is the whole dataset.

    Returns a :class:`Selection` of the new picks with uniform weights.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    pool_ids = np.arange(ds.n, dtype=np.int64) if pool is None else \
        np.unique(np.asarray(pool, dtype=np.int64))
    if pool_ids.size and (pool_ids[0] < 0 or pool_ids[-1] >= ds.n):
        raise ValueError("pool indices out of range")
    init_ids = np.zeros(0, dtype=np.int64) if init is None else \
        np.unique(np.asarray(init, dtype=np.int64))
    if init_ids.size and not np.isin(init_ids, pool_ids).all():
        raise ValueError("init must be a subset of pool")

    candidates = np.setdiff1d(pool_ids, init_ids, assume_unique=True)
    method_name = spec.name

    def build(picks: np.ndarray) -> Selection:
        picks = np.sort(np.asarray(picks, dtype=np.int64))
        return Selection(picks, _uniform_weights(picks.size),
                         _class_counts(picks, ds.labels, ds.num_classes),
                         method_name, budget)

    if budget == 0 or candidates.size == 0:
        return build(np.zeros(0, dtype=np.int64))
    if budget >= candidates.size:
        return build(candidates)  # exhaustion: take everything, skip the method

    if spec.method.uses_scores:
        scores = score_scalar(ds, spec.score_kind)
        picks = _ranked_order(scores, list(candidates), budget,
                              descending=spec.method is Method.TOPK)
        return build(np.array(picks, dtype=np.int64))

    # geometry methods work in pool-local coordinates; pool_ids is sorted,
    # so local order matches global order and tie-breaks carry over
    local = {int(g): i for i, g in enumerate(pool_ids)}
    cand_local = [local[int(g)] for g in candidates]
    init_local = [local[int(g)] for g in init_ids]
    emb = ds.embeddings[pool_ids].astype(np.float64)

    if spec.method is Method.FLRBF:
        if kernel is not None and pool_ids.size == ds.n:
            K = kernel.values
        else:
            K = rbf_kernel(emb).values
        picks_local = _fl_greedy_lazy_order(K, cand_local, init_local, budget)
    elif spec.method is Method.HERDING:
        picks_local = _herding_order(emb, cand_local, init_local, budget)
    elif spec.method is Method.KCENTER:
        picks_local = _kcenter_order(emb, cand_local, init_local, budget)
    else:
        raise AssertionError(f"unhandled method {spec.method}")
    return build(pool_ids[np.array(picks_local, dtype=np.int64)])


def stratified_select(
    ds: EmbeddingDataset,
    quotas,
    spec: SelectorSpec,
) -> Selection:
    """Run the selector independently inside each class with a per-class quota.

    Quotas larger than a class are clamped to the class size; each clamp
    emits a warning and increments the selection's ``clamp_count``.
    """
    quotas = np.asarray(quotas, dtype=np.int64)
    if quotas.shape != (ds.num_classes,):
        raise ValueError(f"quotas must have shape ({ds.num_classes},)")
    if np.any(quotas < 0):
        raise ValueError("quotas must be nonnegative")

    sizes = ds.class_counts
    clamp_count = 0
    parts: list[np.ndarray] = []
    for y in range(ds.num_classes):
        q = int(quotas[y])
        if q > sizes[y]:
            warnings.warn(
                f"class {y}: quota {q} exceeds class size {int(sizes[y])}; clamping",
                stacklevel=2,
            )
            clamp_count += 1
            q = int(sizes[y])
        if q == 0:
            continue
        part = select(ds, q, spec, pool=ds.class_indices(y))
        parts.append(part.indices)

    idx = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
    return Selection(idx, _uniform_weights(idx.size),
                     _class_counts(idx, ds.labels, ds.num_classes),
                     f"stratified+{spec.name}", int(quotas.sum()),
                     clamp_count=clamp_count)


def selection_to_dict(sel: Selection) -> dict:
    return {
        "indices": [int(i) for i in sel.indices],
        "weights": [float(w) for w in sel.weights],
        "per_class_counts": [int(c) for c in sel.per_class_counts],
        "method": sel.method,
        "budget": int(sel.budget),
        "seed": None if sel.seed_used is None else int(sel.seed_used),
        "k_ratio": float(sel.k_ratio),
        "clamp_count": int(sel.clamp_count),
    }


def selection_from_dict(payload: dict) -> Selection:
    return Selection(
        np.asarray(payload["indices"], dtype=np.int64),
        np.asarray(payload["weights"], dtype=np.float64),
        np.asarray(payload["per_class_counts"], dtype=np.int64),
        payload["method"],
        int(payload["budget"]),
        payload.get("seed"),
        float(payload.get("k_ratio", 0.0)),
        int(payload.get("clamp_count", 0)),
    )


def save_selection(sel: Selection, path) -> None:
    """Write a selection manifest as canonical JSON (byte stable)."""
    with open(path, "w") as fh:
        json.dump(selection_to_dict(sel), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_selection(path) -> Selection:
    with open(path) as fh:
        payload = json.load(fh)
    if "selection" in payload and "indices" not in payload:
        payload = payload["selection"]  # config-wrapped manifest
    return selection_from_dict(payload)
