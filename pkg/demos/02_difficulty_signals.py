"""
Scoring samples and auditing what a signal measures
===================================================

Computes per-sample difficulty scores from a trained linear head, then
uses the audit report to see how strongly each signal tracks class size.
"""

import numpy as np

from tailprune import (
    LongTailSpec,
    ScoreKind,
    calibrate_head,
    generate_long_tail,
    score_scalar,
    signal_audit,
)

ds = generate_long_tail(LongTailSpec(10, 300, 30.0, 8, 2.0, seed=3))

# loss, el2n, margin and entropy need teacher logits; attach them from a
# plain unweighted probe
fit = calibrate_head(ds, alpha=np.ones(ds.num_classes), max_iter=150)
ds = ds.with_teacher_logits(fit.head.logits(ds.embeddings).astype(np.float32))

for kind in (ScoreKind.LOSS, ScoreKind.EL2N, ScoreKind.GRAD_NORM,
             ScoreKind.ENTROPY, ScoreKind.CENTER_DIST):
    scores = score_scalar(ds, kind)
    report = signal_audit(ds, scores)
    print(f"{kind.value:12s} rho={report.pearson_rho:+.3f} "
          f"r2={report.r_squared:.3f}")

# loss-family signals correlate with class size much more strongly than
# the geometry signal; that correlation is what starves the tail when a
# selector chases high scores
rho_loss = abs(signal_audit(ds, score_scalar(ds, ScoreKind.LOSS)).pearson_rho)
rho_geo = abs(signal_audit(
    ds, score_scalar(ds, ScoreKind.CENTER_DIST)).pearson_rho)
print("loss |rho| > geometry |rho|:", rho_loss > rho_geo)
