"""Supervision kernels for training on a pruned subset.

Covers the linear-head recalibration trainer (weighted softmax regression
by full-batch gradient descent), temperature-softened distillation loss
with its weight-robustness probe, relational distance/angle losses with
analytic gradients, and the class-rebalancing weight policies.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .dataset import EmbeddingDataset, FloatArray
from .exceptions import DivergenceError, StudentSaturationError

DEFAULT_TEMPERATURE = 5.0
DEFAULT_ALPHA = 0.8
DEFAULT_DISTANCE_WEIGHT = 50.0
DEFAULT_ANGLE_WEIGHT = 100.0
DEFAULT_RKD_SCALE = 0.1

__all__ = [
    "LinearHead",
    "HeadFit",
    "SoftTargets",
    "RebalanceKind",
    "RebalancePolicy",
    "KDLossValue",
    "RKDLoss",
    "RKDGradients",
    "KdRobustnessReport",
    "rebalance_weights",
    "calibrate_head",
    "kd_loss",
    "rkd_loss",
    "rkd_grad",
    "combined_distill_loss",
    "kd_robustness_check",
    "weighted_label_mix",
    "head_to_dict",
    "head_from_dict",
    "save_head",
    "load_head",
    "DEFAULT_TEMPERATURE",
    "DEFAULT_ALPHA",
    "DEFAULT_DISTANCE_WEIGHT",
    "DEFAULT_ANGLE_WEIGHT",
    "DEFAULT_RKD_SCALE",
]


@dataclass(frozen=True)
class LinearHead:
    """A C-way linear classifier z = W x + b over embeddings."""

    W: FloatArray
    b: FloatArray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("W must be C x d and b length C")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        for name, val in (("W", W), ("b", b)):
            val = np.ascontiguousarray(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def num_classes(self) -> int:
        return int(self.W.shape[0])

    @property
    def dims(self) -> int:
        return int(self.W.shape[1])

    def logits(self, embeddings: np.ndarray) -> FloatArray:
        return np.asarray(embeddings, dtype=np.float64) @ self.W.T + self.b

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, i.e. the lowest class id on ties
        return np.argmax(self.logits(embeddings), axis=1).astype(np.int64)


def head_to_dict(head: LinearHead) -> dict:
    return {
        "W": [[float(v) for v in row] for row in head.W],
        "b": [float(v) for v in head.b],
        "C": head.num_classes,
        "d": head.dims,
    }


def head_from_dict(payload: dict) -> LinearHead:
    head = LinearHead(np.asarray(payload["W"], dtype=np.float64),
                      np.asarray(payload["b"], dtype=np.float64))
    if head.num_classes != payload["C"] or head.dims != payload["d"]:
        raise ValueError("declared head shape does not match stored arrays")
    return head


def save_head(head: LinearHead, path) -> None:
    with open(path, "w") as fh:
        json.dump(head_to_dict(head), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_head(path) -> LinearHead:
    with open(path) as fh:
        payload = json.load(fh)
    if "head" in payload and "W" not in payload:
        payload = payload["head"]  # config-wrapped artifact
    return head_from_dict(payload)


@dataclass(frozen=True)
class SoftTargets:
    """Per-sample target distributions produced at a fixed temperature."""

    probs: FloatArray
    temperature: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("probs must be n x C")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probs must be nonnegative finite")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each probs row must sum to 1")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError("temperature must be positive")
        p = np.ascontiguousarray(p)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_logits(cls, logits: np.ndarray, temperature: float = DEFAULT_TEMPERATURE
                    ) -> "SoftTargets":
        z = np.asarray(logits, dtype=np.float64) / float(temperature)
        return cls(np.exp(log_softmax(z, axis=1)), float(temperature))

    @property
    def n(self) -> int:
        return int(self.probs.shape[0])


class RebalanceKind(enum.Enum):
    INSTANCE_BALANCED = "ib"
    CLASS_BALANCED = "cb"
    SQRT = "sqrt"
    CB_LOSS = "cbloss"


@dataclass(frozen=True)
class RebalancePolicy:
    kind: RebalanceKind
    beta: float = 0.9999

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta must lie in (0, 1)")


def rebalance_weights(class_counts, policy: RebalancePolicy) -> FloatArray:
    """Per-class weights for the given policy, normalized to mean 1.

    Instance-balanced: uniform.  Class-balanced: 1/n_y.  Square-root:
    1/sqrt(n_y).  Effective-number: (1-beta)/(1-beta^n_y).
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0 or np.any(counts < 1):
        raise ValueError("class_counts must be >= 1 per class")
    if policy.kind is RebalanceKind.INSTANCE_BALANCED:
        raw = np.ones_like(counts)
    elif policy.kind is RebalanceKind.CLASS_BALANCED:
        raw = 1.0 / counts
    elif policy.kind is RebalanceKind.SQRT:
        raw = 1.0 / np.sqrt(counts)
    elif policy.kind is RebalanceKind.CB_LOSS:
        raw = (1.0 - policy.beta) / (1.0 - policy.beta ** counts)
    else:
        raise AssertionError(f"unhandled policy {policy.kind}")
    return raw / raw.mean()


@dataclass(frozen=True)
class HeadFit:
    """A trained head together with its optimization trace."""

    head: LinearHead
    loss_trace: FloatArray
    n_iter: int
    grad_norm: float
    converged: bool


def calibrate_head(
    ds: EmbeddingDataset,
    alpha: np.ndarray | None = None,
    lr: float = 1.0,
    max_iter: int = 500,
    grad_tol: float = 1e-6,
) -> HeadFit:
    """Retrain a linear head on frozen embeddings by weighted softmax CE.

    ``alpha`` is a positive per-class loss weight vector; None selects
    class-balanced weights (1/n_y, mean-normalized), and all-ones gives
    the plain unweighted objective.  The objective is convex; full-batch
    gradient descent with step halving keeps the loss trace monotone.
    A step that underflows before improving the loss raises
    DivergenceError.
    """
    if alpha is None:
        alpha = rebalance_weights(ds.class_counts,
                                  RebalancePolicy(RebalanceKind.CLASS_BALANCED))
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (ds.num_classes,) or np.any(alpha <= 0):
        raise ValueError("alpha must be positive, one entry per class")
    if lr <= 0:
        raise ValueError("lr must be positive")

    X = ds.embeddings.astype(np.float64)
    y = ds.labels
    n, d, C = ds.n, ds.dims, ds.num_classes
    sample_w = alpha[y] / n
    rows = np.arange(n)

    def loss_and_grad(W, b):
        logp = log_softmax(X @ W.T + b, axis=1)
        value = float(-(sample_w * logp[rows, y]).sum())
        G = np.exp(logp) * sample_w[:, None]
        G[rows, y] -= sample_w
        return value, G.T @ X, G.sum(axis=0)

    W = np.zeros((C, d))
    b = np.zeros(C)
    loss, gW, gb = loss_and_grad(W, b)
    trace = [loss]
    step = lr
    grad_norm = float(np.sqrt((gW * gW).sum() + (gb * gb).sum()))
    it = 0
    converged = grad_norm <= grad_tol
    while not converged and it < max_iter:
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, gW_new, gb_new = loss_and_grad(W_new, b_new)
            if new_loss <= loss:
                break
            step *= 0.5
            if step < 1e-20:
                raise DivergenceError(
                    "loss failed to decrease at any step size; "
                    "try a smaller learning rate"
                )
        W, b, loss, gW, gb = W_new, b_new, new_loss, gW_new, gb_new
        trace.append(loss)
        step = min(step * 2.0, lr)
        grad_norm = float(np.sqrt((gW * gW).sum() + (gb * gb).sum()))
        it += 1
        converged = grad_norm <= grad_tol
    return HeadFit(LinearHead(W, b), np.asarray(trace), it, grad_norm, converged)


@dataclass(frozen=True)
class KDLossValue:
    """Weighted distillation loss split into its two parts.

    ``total`` = ``entropy_floor`` + ``kl_term``: the floor is the weighted
    target entropy (independent of the student), the KL part is what
    training can actually reduce.
    """

    total: float
    entropy_floor: float
    kl_term: float


def kd_loss(student_logits: np.ndarray, targets: SoftTargets,
            weights: np.ndarray | None = None) -> KDLossValue:
    """Sum_i w_i * CE(T_i, softmax(z_i / temperature)).

    Decomposed as Sum_i w_i [H(T_i) + KL(T_i || f_i)].  A student that
    assigns probability 0 where the target is positive has infinite loss;
    that case raises StudentSaturationError instead of returning inf.
    """
    z = np.asarray(student_logits, dtype=np.float64)
    T = targets.probs
    if z.shape != T.shape:
        raise ValueError(f"student logits shape {z.shape} != targets shape {T.shape}")
    w = np.ones(T.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (T.shape[0],) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per sample")

    logf = log_softmax(z / targets.temperature, axis=1)
    mask = T > 0
    if np.any(np.isneginf(logf) & mask):
        raise StudentSaturationError(
            "student assigns probability 0 where the target is positive"
        )
    if not np.all(np.isfinite(logf[mask])):
        raise ValueError("student logits produce non-finite log probabilities")

    logT = np.zeros_like(T)
    np.log(T, out=logT, where=mask)
    H = -np.sum(T * logT, axis=1)
    # zero the log ratio off-support first: logf may be -inf there, and
    # 0 * inf would poison the row sum
    KL = np.sum(T * np.where(mask, logT - logf, 0.0), axis=1)
    floor = float(w @ H)
    kl = float(w @ KL)
    return KDLossValue(floor + kl, floor, kl)


def _huber(r: np.ndarray) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= 1.0, 0.5 * r * r, a - 0.5)


def _huber_deriv(r: np.ndarray) -> np.ndarray:
    return np.clip(r, -1.0, 1.0)


def _pairwise(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    B = emb.shape[0]
    iu, ju = np.triu_indices(B, k=1)
    d = np.linalg.norm(emb[iu] - emb[ju], axis=1)
    return iu, ju, d


@dataclass(frozen=True)
class RKDLoss:
    """Relational loss over a batch: Huber on normalized pairwise
    distances plus Huber on triplet-angle cosines."""

    distance_term: float
    angle_term: float
    combined: float
    skipped_triplets: int


@dataclass(frozen=True)
class RKDGradients:
    """d(distance_term)/d(student) and d(angle_term)/d(student)."""

    distance: FloatArray
    angle: FloatArray


def _triplets(B: int):
    for j in range(B):
        others = [i for i in range(B) if i != j]
        for a in range(len(others)):
            for c in range(a + 1, len(others)):
                yield others[a], j, others[c]


def rkd_loss(student_emb: np.ndarray, teacher_emb: np.ndarray,
             distance_weight: float = DEFAULT_DISTANCE_WEIGHT,
             angle_weight: float = DEFAULT_ANGLE_WEIGHT) -> RKDLoss:
    """Match the student's batch geometry to the teacher's.

    Distance potential: pairwise distances divided by each side's own
    batch-mean distance (so uniform rescaling of either side is free).
    Angle potential: cosine of the angle at the center of every triplet.
    Both compared under Huber with unit threshold and summed.  Triplets
    with a zero-length edge on either side are skipped and counted.
    """
    S = np.asarray(student_emb, dtype=np.float64)
    T = np.asarray(teacher_emb, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != T.shape[0]:
        raise ValueError("student and teacher batches must have the same size")
    B = S.shape[0]
    if B < 2:
        raise ValueError("need a batch of at least 2")

    iu, ju, dS = _pairwise(S)
    _, _, dT = _pairwise(T)
    muS, muT = float(dS.mean()), float(dT.mean())
    if muS > 0 and muT > 0:
        distance_term = float(_huber(dT / muT - dS / muS).sum())
    else:
        distance_term = 0.0  # a fully collapsed side has no usable geometry

    angle_term = 0.0
    skipped = 0
    if B >= 3:
        for i, j, k in _triplets(B):
            uS, vS = S[i] - S[j], S[k] - S[j]
            uT, vT = T[i] - T[j], T[k] - T[j]
            nuS, nvS = np.linalg.norm(uS), np.linalg.norm(vS)
            nuT, nvT = np.linalg.norm(uT), np.linalg.norm(vT)
            if min(nuS, nvS, nuT, nvT) == 0.0:
                skipped += 1
                continue
            aS = float(uS @ vS) / (nuS * nvS)
            aT = float(uT @ vT) / (nuT * nvT)
            angle_term += float(_huber(np.asarray(aT - aS)))
    combined = distance_weight * distance_term + angle_weight * angle_term
    return RKDLoss(distance_term, float(angle_term), float(combined), skipped)


def rkd_grad(student_emb: np.ndarray, teacher_emb: np.ndarray) -> RKDGradients:
    """Analytic gradients of the two relational terms w.r.t. the student."""
    S = np.asarray(student_emb, dtype=np.float64)
    T = np.asarray(teacher_emb, dtype=np.float64)
    B = S.shape[0]
    grad_d = np.zeros_like(S)
    grad_a = np.zeros_like(S)

    iu, ju, dS = _pairwise(S)
    _, _, dT = _pairwise(T)
    muS, muT = float(dS.mean()), float(dT.mean())
    if muS > 0 and muT > 0:
        r = dT / muT - dS / muS
        hp = _huber_deriv(r)
        # dL/dd_ab = -h'(r_ab)/mu + (dmu/dd_ab) * sum h'(r)*d / mu^2,
        # with dmu/dd_ab = 1/P for every pair
        P = dS.size
        correction = float((hp * dS).sum()) / (muS * muS) / P
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = (S[iu] - S[ju]) / dS[:, None]
        unit[dS == 0.0] = 0.0
        coef = (-hp / muS + correction)[:, None] * unit
        np.add.at(grad_d, iu, coef)
        np.add.at(grad_d, ju, -coef)

    if B >= 3:
        for i, j, k in _triplets(B):
            uS, vS = S[i] - S[j], S[k] - S[j]
            uT, vT = T[i] - T[j], T[k] - T[j]
            nuS, nvS = np.linalg.norm(uS), np.linalg.norm(vS)
            nuT, nvT = np.linalg.norm(uT), np.linalg.norm(vT)
            if min(nuS, nvS, nuT, nvT) == 0.0:
                continue
            aS = float(uS @ vS) / (nuS * nvS)
            aT = float(uT @ vT) / (nuT * nvT)
            hp = float(_huber_deriv(np.asarray(aT - aS)))
            da_du = vS / (nuS * nvS) - aS * uS / (nuS * nuS)
            da_dv = uS / (nuS * nvS) - aS * vS / (nvS * nvS)
            grad_a[i] += -hp * da_du
            grad_a[k] += -hp * da_dv
            grad_a[j] += hp * (da_du + da_dv)
    return RKDGradients(grad_d, grad_a)


def combined_distill_loss(hard_ce: float, kd: KDLossValue, rkd: RKDLoss,
                          alpha: float = DEFAULT_ALPHA,
                          temperature: float = DEFAULT_TEMPERATURE,
                          rkd_scale: float = DEFAULT_RKD_SCALE) -> float:
    """(1 - alpha) * CE + alpha * temperature^2 * KD + scale * relational.

    The temperature^2 factor restores the gradient magnitude that
    temperature softening divides away.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    return ((1.0 - alpha) * hard_ce
            + alpha * temperature * temperature * kd.total
            + rkd_scale * rkd.combined)


@dataclass(frozen=True)
class KdRobustnessReport:
    """Outcome of minimizing the distillation loss under two weightings."""

    max_gap_a: float
    max_gap_b: float
    solution_gap: float
    steps_a: int
    steps_b: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_gap_a <= tol and self.max_gap_b <= tol


def _fit_free_logits(targets: SoftTargets, w: np.ndarray, max_steps: int,
                     tol: float) -> tuple[FloatArray, int]:
    T = targets.probs
    lr = 1.0 / float(w.max())
    z = np.zeros_like(T)
    for step in range(1, max_steps + 1):
        p = np.exp(log_softmax(z, axis=1))
        if float(np.abs(p - T).sum(axis=1).max()) <= tol:
            return p, step
        z -= lr * w[:, None] * (p - T)
    raise RuntimeError(
        f"optimization budget exhausted after {max_steps} steps "
        f"(residual above {tol})"
    )


def kd_robustness_check(targets: SoftTargets, weights_a, weights_b,
                        max_steps: int = 50000, tol: float = 2e-5
                        ) -> KdRobustnessReport:
    """Minimize the distillation loss with an unconstrained per-sample
    logit table under two positive weightings.

    The weighting changes the optimization path but not the optimum: both
    runs should land on the targets themselves.  Reports the worst
    per-sample L1 distance to the targets for each run, and between the
    two solutions.  Raises if either run fails to reach ``tol``.
    """
    wa = np.asarray(weights_a, dtype=np.float64)
    wb = np.asarray(weights_b, dtype=np.float64)
    for w in (wa, wb):
        if w.shape != (targets.n,) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per sample")
    pa, steps_a = _fit_free_logits(targets, wa, max_steps, tol)
    pb, steps_b = _fit_free_logits(targets, wb, max_steps, tol)
    T = targets.probs
    return KdRobustnessReport(
        float(np.abs(pa - T).sum(axis=1).max()),
        float(np.abs(pb - T).sum(axis=1).max()),
        float(np.abs(pa - pb).sum(axis=1).max()),
        steps_a, steps_b,
    )


def weighted_label_mix(labels, weights, num_classes: int) -> FloatArray:
    """Optimum of weighted CE to hard labels for one shared posterior.

    This is the contrast case to distillation's weight robustness: with
    hard labels on identical inputs the optimal shared posterior is the
    weight-proportional label mix, which moves whenever the weights do.
    """
    y = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape or np.any(w <= 0):
        raise ValueError("weights must be positive, one per label")
    mix = np.zeros(num_classes)
    np.add.at(mix, y, w)
    return mix / mix.sum()
