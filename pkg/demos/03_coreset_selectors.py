"""
Coreset selectors side by side
==============================

Runs each selection method at the same budget and compares how the picks
cover the dataset and how they spread across classes.
"""

import numpy as np

from tailprune import (
    LongTailSpec,
    Method,
    ScoreKind,
    SelectorSpec,
    calibrate_head,
    facility_location_value,
    generate_long_tail,
    rbf_kernel,
    select,
)

ds = generate_long_tail(LongTailSpec(8, 200, 20.0, 8, 2.5, seed=7))
fit = calibrate_head(ds, alpha=np.ones(ds.num_classes), max_iter=150)
ds = ds.with_teacher_logits(fit.head.logits(ds.embeddings).astype(np.float32))

BUDGET = 60
specs = {
    "topk loss": SelectorSpec(Method.TOPK, ScoreKind.LOSS),
    "bottomk loss": SelectorSpec(Method.BOTTOMK, ScoreKind.LOSS),
    "herding": SelectorSpec(Method.HERDING),
    "kcenter": SelectorSpec(Method.KCENTER),
    "flrbf": SelectorSpec(Method.FLRBF),
}

# one shared kernel so coverage numbers are comparable
K = rbf_kernel(ds.embeddings).values

for name, spec in specs.items():
    sel = select(ds, BUDGET, spec)
    coverage = facility_location_value(K, sel.indices.tolist()) / ds.n
    nonzero = int(np.count_nonzero(sel.per_class_counts))
    print(f"{name:14s} coverage/n={coverage:.3f} "
          f"classes touched={nonzero}/{ds.num_classes} "
          f"counts={sel.per_class_counts.tolist()}")

# selections are deterministic: same inputs, same bytes
again = select(ds, BUDGET, SelectorSpec(Method.FLRBF))
assert np.array_equal(again.indices, select(ds, BUDGET,
                                            SelectorSpec(Method.FLRBF)).indices)

# warm-starting: pass picks as init and the selector only returns new ones
first = select(ds, 20, SelectorSpec(Method.FLRBF))
rest = select(ds, 40, SelectorSpec(Method.FLRBF), init=first.indices)
full = select(ds, 60, SelectorSpec(Method.FLRBF))
assert np.array_equal(np.sort(np.concatenate([first.indices, rest.indices])),
                      np.sort(full.indices))
print("warm start reproduces the one-shot selection")
