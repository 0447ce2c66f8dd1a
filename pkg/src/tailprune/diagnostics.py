"""Measurement tools: accuracy metrics, prior diagnostics, score audits,
and a finite-enumeration lab for the subset-risk bounds.

The lab works on fully discrete problems (finite sample space, finite
hypothesis grid) where every expectation is an exact sum, so the two
structural inequalities behind weighted pruning can be checked by brute
force rather than trusted:

  excess risk of the subset minimizer <= 2 * sup-gap between true and
  subset-weighted expectations, and the sup-gap itself splits into a
  per-class representation term plus a prior-mismatch term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import EmbeddingDataset, FloatArray, IntArray, PriorVector
from .distill import calibrate_head
from .selectors import Selection

__all__ = [
    "AuditReport",
    "QuadLabSpec",
    "QuadLabReport",
    "eval_oa_macc",
    "prediction_counts",
    "induced_prior",
    "tv_distance",
    "term_b_bound",
    "reweigh_to_prior",
    "signal_audit",
    "quad_lab",
    "make_threshold_lab",
    "probe_eval",
]


def eval_oa_macc(per_class_correct, per_class_total) -> tuple[float, float]:
    """Overall accuracy (frequency-weighted) and mean class accuracy.

    Classes with zero evaluated samples are excluded from the mean with a
    warning; overall accuracy pools all counts.
    """
    correct = np.asarray(per_class_correct, dtype=np.int64)
    total = np.asarray(per_class_total, dtype=np.int64)
    if correct.shape != total.shape or correct.ndim != 1:
        raise ValueError("correct and total must be aligned vectors")
    if np.any(correct < 0) or np.any(total < 0) or np.any(correct > total):
        raise ValueError("need 0 <= correct <= total per class")
    if total.sum() == 0:
        raise ValueError("no evaluated samples at all")
    covered = total > 0
    if not covered.all():
        warnings.warn(
            f"{int((~covered).sum())} class(es) have no evaluated samples; "
            "excluded from the class-mean accuracy",
            stacklevel=2,
        )
    oa = float(correct.sum() / total.sum())
    macc = float(np.mean(correct[covered] / total[covered]))
    return oa, macc


def prediction_counts(labels, predictions, num_classes: int
                      ) -> tuple[IntArray, IntArray]:
    """Per-class (correct, total) counts from labels and predictions."""
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(predictions, dtype=np.int64)
    if y.shape != p.shape:
        raise ValueError("labels and predictions must be aligned")
    total = np.bincount(y, minlength=num_classes).astype(np.int64)
    correct = np.bincount(y[y == p], minlength=num_classes).astype(np.int64)
    return correct, total


def induced_prior(sel: Selection, labels, num_classes: int) -> PriorVector:
    """The class distribution a weighted selection actually represents:
    the sum of selection weights within each class."""
    if sel.size == 0:
        raise ValueError("induced prior of an empty selection is undefined")
    y = np.asarray(labels, dtype=np.int64)
    rho = np.zeros(num_classes)
    np.add.at(rho, y[sel.indices], sel.weights)
    return PriorVector(rho / rho.sum())


def tv_distance(p, q) -> float:
    """Total variation distance 0.5 * sum |p_y - q_y| between two priors."""
    pa = p.probs if isinstance(p, PriorVector) else np.asarray(p, dtype=np.float64)
    qa = q.probs if isinstance(q, PriorVector) else np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise ValueError("priors must have the same length")
    return 0.5 * float(np.abs(pa - qa).sum())


def term_b_bound(p, q, loss_bound: float) -> float:
    """Worst-case risk bias from prior mismatch: 2 * bound * TV(p, q)."""
    if loss_bound < 0:
        raise ValueError("loss bound must be >= 0")
    return 2.0 * loss_bound * tv_distance(p, q)


def reweigh_to_prior(sel: Selection, labels, target: PriorVector) -> Selection:
    """Reweight a selection so its induced prior equals the target exactly.

    Every selected sample of class y gets weight target_y / m_y, where
    m_y is the class's selected count.  Any class with positive target
    mass but no selected samples makes the target unreachable (this is
    the failure mode a per-class floor exists to rule out).
    """
    if sel.size == 0:
        raise ValueError("cannot reweigh an empty selection")
    y = np.asarray(labels, dtype=np.int64)
    sel_labels = y[sel.indices]
    counts = np.bincount(sel_labels, minlength=target.num_classes)
    missing = np.flatnonzero((target.probs > 0) & (counts == 0))
    if missing.size:
        raise ValueError(
            f"class {int(missing[0])} has positive target mass but no "
            "selected samples; cannot match the target prior"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, target.probs / np.maximum(counts, 1), 0.0)
    return sel.with_weights(per_class[sel_labels])


@dataclass(frozen=True)
class AuditReport:
    """How strongly a score tracks class size, and how separable the
    head/tail score populations are."""

    pearson_rho: float
    r_squared: float
    overlap: float
    per_class_mean_magnitude: FloatArray
    selection_imbalance_ratio: float | None = None
    zero_selection_classes: tuple[int, ...] = ()


def _interval_overlap(head: np.ndarray, tail: np.ndarray) -> float:
    h_lo, h_hi = np.percentile(head, [5.0, 95.0])
    t_lo, t_hi = np.percentile(tail, [5.0, 95.0])
    inter = min(h_hi, t_hi) - max(h_lo, t_lo)
    width = h_hi - h_lo
    if width <= 0.0:
        return 1.0 if t_lo <= h_lo <= t_hi else 0.0
    return float(max(inter, 0.0) / width)


def signal_audit(ds: EmbeddingDataset, scores: np.ndarray,
                 selection: Selection | None = None) -> AuditReport:
    """Quantify a score signal's dependence on class frequency.

    Reports the Pearson correlation (and its squared value, the R^2 of
    the least-squares line) between per-class mean score magnitude and
    raw class size; the overlap between the [p5, p95] score intervals of
    the largest-quartile and smallest-quartile classes; and, when a
    selection is given, how unevenly the selection samples classes
    (max/min of per-class selected fractions, zero-fraction classes
    listed separately).
    """
    if ds.num_classes < 2:
        raise ValueError("audit needs at least 2 classes")
    s = np.abs(np.asarray(scores, dtype=np.float64))
    if s.shape != (ds.n,):
        raise ValueError("scores must be one value per sample")

    sizes = ds.class_counts
    mean_mag = np.zeros(ds.num_classes)
    for y in range(ds.num_classes):
        idx = ds.class_indices(y)
        mean_mag[y] = float(s[idx].mean()) if idx.size else 0.0

    if np.std(mean_mag) == 0.0 or np.std(sizes.astype(np.float64)) == 0.0:
        rho = 0.0
    else:
        rho = float(np.corrcoef(mean_mag, sizes.astype(np.float64))[0, 1])
    r_squared = rho * rho

    q = max(1, ds.num_classes // 4)
    by_size_desc = np.lexsort((np.arange(ds.num_classes), -sizes))
    by_size_asc = np.lexsort((np.arange(ds.num_classes), sizes))
    head_pool = np.concatenate([ds.class_indices(int(y)) for y in by_size_desc[:q]])
    tail_pool = np.concatenate([ds.class_indices(int(y)) for y in by_size_asc[:q]])
    overlap = _interval_overlap(s[head_pool], s[tail_pool])

    ratio = None
    zero_classes: tuple[int, ...] = ()
    if selection is not None:
        present = sizes > 0
        fractions = np.zeros(ds.num_classes)
        fractions[present] = selection.per_class_counts[present] / sizes[present]
        picked = present & (fractions > 0)
        if not picked.any():
            raise ValueError("selection covers no class; imbalance ratio undefined")
        ratio = float(fractions[picked].max() / fractions[picked].min())
        zero_classes = tuple(int(y) for y in np.flatnonzero(present & (fractions == 0)))
    return AuditReport(rho, r_squared, overlap, mean_mag, ratio, zero_classes)


@dataclass(frozen=True)
class QuadLabSpec:
    """A fully discrete risk-minimization problem for bound checking.

    ``loss_table[t, i]`` is the loss of hypothesis t on sample i, bounded
    by ``bound``.  ``class_conditionals[y]`` is the known distribution of
    class y over the sample points (supported only on that class's own
    samples); the target prior mixes them into the true distribution.
    """

    loss_table: FloatArray
    bound: float
    labels: IntArray
    target_prior: PriorVector
    class_conditionals: FloatArray

    def __post_init__(self):
        L = np.asarray(self.loss_table, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        P = np.asarray(self.class_conditionals, dtype=np.float64)
        C = self.target_prior.num_classes
        if L.ndim != 2 or L.shape[1] != y.size:
            raise ValueError("loss_table must be |grid| x n")
        if self.bound <= 0 or np.any(L < 0) or np.any(L > self.bound):
            raise ValueError("losses must lie in [0, bound]")
        if P.shape != (C, y.size):
            raise ValueError("class_conditionals must be C x n")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each class conditional must be a distribution")
        for cls in range(C):
            if np.any(P[cls][y != cls] != 0.0):
                raise ValueError(f"conditional of class {cls} leaks off its support")
        for name, val in (("loss_table", L), ("labels", y), ("class_conditionals", P)):
            val = np.ascontiguousarray(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def grid_size(self) -> int:
        return int(self.loss_table.shape[0])


@dataclass(frozen=True)
class QuadLabReport:
    theta_star: int
    theta_hat: int
    true_risk_star: float
    true_risk_hat: float
    excess_gap: float
    d_g: float
    tv: float
    term_b: float
    per_theta_gap: FloatArray
    per_theta_term_a: FloatArray
    lemma_holds: bool
    decomposition_holds: bool


def quad_lab(spec: QuadLabSpec, sel: Selection, tol: float = 1e-12) -> QuadLabReport:
    """Check the two subset-risk inequalities by exhaustive enumeration.

    Computes the true risk minimizer, the subset-weighted risk minimizer,
    the sup-gap D between true and subset expectations, and verifies that
    (a) the excess true risk of the subset minimizer is at most 2D and
    (b) for every hypothesis the expectation gap is at most the per-class
    representation sum plus the prior-mismatch term.  Empty-class
    convention: a class absent from the subset contributes zero
    representation error (its conditional defaults to the true one).
    """
    if sel.size == 0:
        raise ValueError("empty subset")
    C = spec.target_prior.num_classes
    pi = spec.target_prior.probs

    true_class_exp = spec.loss_table @ spec.class_conditionals.T   # |grid| x C
    true_risk = true_class_exp @ pi
    subset_risk = spec.loss_table[:, sel.indices] @ sel.weights

    theta_star = int(np.argmin(true_risk))
    theta_hat = int(np.argmin(subset_risk))
    gap = float(true_risk[theta_hat] - true_risk[theta_star])
    per_theta_gap = np.abs(true_risk - subset_risk)
    d_g = float(per_theta_gap.max())

    sel_labels = spec.labels[sel.indices]
    rho = np.zeros(C)
    np.add.at(rho, sel_labels, sel.weights)
    rho_total = rho.sum()
    rho = rho / rho_total

    subset_class_exp = true_class_exp.copy()  # default for uncovered classes
    for cls in range(C):
        mask = sel_labels == cls
        if mask.any() and rho[cls] > 0:
            w_cls = sel.weights[mask] / (rho[cls] * rho_total)
            subset_class_exp[:, cls] = spec.loss_table[:, sel.indices[mask]] @ w_cls

    term_a = np.abs(true_class_exp - subset_class_exp) @ pi
    tv = tv_distance(pi, rho)
    term_b = 2.0 * spec.bound * tv

    lemma_holds = gap <= 2.0 * d_g + tol
    decomposition_holds = bool(np.all(per_theta_gap <= term_a + term_b + tol))
    return QuadLabReport(theta_star, theta_hat, float(true_risk[theta_star]),
                         float(true_risk[theta_hat]), gap, d_g, tv, term_b,
                         per_theta_gap, term_a, lemma_holds, decomposition_holds)


def make_threshold_lab(seed: int, n: int = 20) -> QuadLabSpec:
    """A random 1-d two-class problem with threshold classifiers.

    Points come from two overlapping Gaussians with a random class split;
    the hypothesis grid holds both orientations of every midpoint
    threshold; the loss is 0/1 misclassification (bound 1).  Conditionals
    and the target prior are random, so the lab exercises non-uniform
    weights too.
    """
    if n < 4:
        raise ValueError("need at least 4 points")
    rng = np.random.default_rng(seed)
    n0 = int(rng.integers(n // 4, 3 * n // 4))
    labels = np.array([0] * n0 + [1] * (n - n0), dtype=np.int64)
    x = np.where(labels == 0, rng.normal(-1.0, 1.0, n), rng.normal(1.0, 1.0, n))

    xs = np.sort(x)
    mids = (xs[:-1] + xs[1:]) / 2.0
    thresholds = np.concatenate(([xs[0] - 1.0], mids, [xs[-1] + 1.0]))
    # both orientations: predict 1 above the threshold, or 1 below it
    pred_above = (x[None, :] > thresholds[:, None]).astype(np.int64)
    preds = np.concatenate([pred_above, 1 - pred_above], axis=0)
    loss_table = (preds != labels[None, :]).astype(np.float64)

    conditionals = np.zeros((2, n))
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        mass = rng.random(idx.size) + 0.1
        conditionals[cls, idx] = mass / mass.sum()
    prior_raw = rng.random(2) + 0.1
    prior = PriorVector(prior_raw / prior_raw.sum())
    return QuadLabSpec(loss_table, 1.0, labels, prior, conditionals)


def probe_eval(ds: EmbeddingDataset, sel: Selection, *, lr: float = 1.0,
               max_iter: int = 150, grad_tol: float = 1e-6) -> tuple[float, float]:
    """Train an unweighted linear probe on the selected subset and score
    it on the full dataset.  Usable directly as a sweep eval_fn."""
    if sel.size == 0:
        raise ValueError("cannot evaluate an empty selection")
    subset = ds.subset(sel.indices)
    fit = calibrate_head(subset, alpha=np.ones(ds.num_classes), lr=lr,
                         max_iter=max_iter, grad_tol=grad_tol)
    correct, total = prediction_counts(ds.labels, fit.head.predict(ds.embeddings),
                                       ds.num_classes)
    return eval_oa_macc(correct, total)
