"""Per-sample difficulty scores and the RBF similarity kernel.

Scores summarise how hard or how atypical a sample is; selectors consume
them either directly (rank-based methods) or through the kernel (coverage
methods).  All score functions are pure and vectorised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import log_softmax

from .dataset import EmbeddingDataset, FloatArray

# subsampling seed for the bandwidth heuristic; a fixed constant so the
# kernel is a deterministic function of the points alone
_BANDWIDTH_SEED = 1811
_BANDWIDTH_MAX_POINTS = 2048

__all__ = [
    "ScoreKind",
    "KernelMatrix",
    "score_scalar",
    "rbf_kernel",
    "median_bandwidth",
]


class ScoreKind(enum.Enum):
    """Available per-sample scalar signals."""

    LOSS = "loss"
    ENTROPY = "entropy"
    EL2N = "el2n"
    GRAD_NORM = "grad_norm"
    CENTER_DIST = "center_dist"

    @property
    def needs_logits(self) -> bool:
        return self is not ScoreKind.CENTER_DIST


def _probs_and_logp(logits: np.ndarray) -> tuple[FloatArray, FloatArray]:
    logp = log_softmax(np.asarray(logits, dtype=np.float64), axis=1)
    return np.exp(logp), logp


def score_scalar(ds: EmbeddingDataset, kind: ScoreKind) -> FloatArray:
    """Compute one scalar per sample; higher means harder / more atypical.

    LOSS is the cross entropy -log p_y, ENTROPY the predictive entropy,
    EL2N the L2 norm of the probability-vs-onehot residual, GRAD_NORM the
    exact gradient norm of the cross entropy through a final linear layer
    with bias (EL2N scaled by sqrt(|phi|^2 + 1)), and CENTER_DIST the
    Euclidean distance to the sample's class-mean embedding.
    """
    if kind.needs_logits:
        if ds.teacher_logits is None:
            raise ValueError(f"score kind {kind.value!r} requires teacher logits")
        probs, logp = _probs_and_logp(ds.teacher_logits)
        rows = np.arange(ds.n)
        if kind is ScoreKind.LOSS:
            return -logp[rows, ds.labels]
        if kind is ScoreKind.ENTROPY:
            ent = -np.sum(probs * logp, axis=1)
            return np.maximum(ent, 0.0)  # clamp float negatives near zero
        residual = probs.copy()
        residual[rows, ds.labels] -= 1.0
        el2n = np.linalg.norm(residual, axis=1)
        if kind is ScoreKind.EL2N:
            return el2n
        if kind is ScoreKind.GRAD_NORM:
            feat_sq = np.einsum("ij,ij->i", ds.embeddings.astype(np.float64),
                                ds.embeddings.astype(np.float64))
            return el2n * np.sqrt(feat_sq + 1.0)
        raise AssertionError(f"unhandled kind {kind}")
    # CENTER_DIST
    emb = ds.embeddings.astype(np.float64)
    dist = np.empty(ds.n, dtype=np.float64)
    for y in range(ds.num_classes):
        idx = ds.class_indices(y)
        if idx.size == 0:
            continue
        center = emb[idx].mean(axis=0)
        dist[idx] = np.linalg.norm(emb[idx] - center, axis=1)
    return dist


def median_bandwidth(points: np.ndarray) -> float:
    """Median pairwise distance of (a subsample of) the points.

    Uses at most 2048 points, chosen with a fixed internal seed, so the
    bandwidth depends only on the data.  Raises if the median distance is
    zero (all subsampled points coincide).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("bandwidth needs at least two points")
    if pts.shape[0] > _BANDWIDTH_MAX_POINTS:
        rng = np.random.default_rng(_BANDWIDTH_SEED)
        keep = rng.choice(pts.shape[0], size=_BANDWIDTH_MAX_POINTS, replace=False)
        pts = pts[np.sort(keep)]
    sigma = float(np.median(pdist(pts)))
    if sigma <= 0.0:
        raise ValueError("median pairwise distance is zero; cannot set a bandwidth")
    return sigma


@dataclass(frozen=True)
class KernelMatrix:
    """A dense symmetric RBF similarity matrix with unit diagonal."""

    values: FloatArray
    bandwidth: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("kernel must be square")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def rbf_kernel(points: np.ndarray, bandwidth: float | None = None) -> KernelMatrix:
    """K[i, j] = exp(-|x_i - x_j|^2 / (2 sigma^2)).

    With ``bandwidth=None`` sigma comes from :func:`median_bandwidth`.
    Built from condensed pairwise distances, so the matrix is exactly
    symmetric with an exactly unit diagonal.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("points must be a nonempty n x d matrix")
    sigma = median_bandwidth(pts) if bandwidth is None else float(bandwidth)
    if sigma <= 0:
        raise ValueError("bandwidth must be positive")
    if pts.shape[0] == 1:
        return KernelMatrix(np.ones((1, 1)), sigma)
    sq = pdist(pts, metric="sqeuclidean")
    dense = squareform(np.exp(-sq / (2.0 * sigma * sigma)))
    np.fill_diagonal(dense, 1.0)
    return KernelMatrix(dense, sigma)
