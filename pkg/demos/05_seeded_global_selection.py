"""
Seeded global selection and the K dial
======================================

Interpolates between pure global selection (K=0) and pure per-class
stratification (K=1), then sweeps K to locate the tradeoff.
"""

import numpy as np

from tailprune import (
    LongTailSpec,
    Method,
    SelectorSpec,
    SgsConfig,
    generate_long_tail,
    probe_eval,
    select,
    sgs_select,
    stratified_select,
    sweep_k,
)

ds = generate_long_tail(LongTailSpec(10, 250, 50.0, 12, 2.0, seed=42))
base = SelectorSpec(Method.FLRBF)
BUDGET = 50

# K controls the fraction of budget reserved as per-class seed floors
for k in (0.0, 0.4, 1.0):
    sel = sgs_select(ds, SgsConfig(k, BUDGET, base))
    oa, macc = probe_eval(ds, sel)
    print(f"K={k:.1f} counts={sel.per_class_counts.tolist()} "
          f"OA={oa:.3f} mAcc={macc:.3f}")

# the endpoints are not approximations, they are the pure methods
pure = select(ds, BUDGET, base)
k0 = sgs_select(ds, SgsConfig(0.0, BUDGET, base))
assert np.array_equal(k0.indices, pure.indices)

strat = stratified_select(ds, np.full(10, BUDGET // 10), base)
k1 = sgs_select(ds, SgsConfig(1.0, BUDGET, base))
assert np.array_equal(k1.indices, strat.indices)
print("endpoints bit-match the pure global and stratified selectors")

# sweep K x budget; eval_fn receives the dataset and each selection
rows = sweep_k(ds, budgets=[40, 60], k_grid=[0.0, 0.2, 0.4, 0.8, 1.0],
               eval_fn=probe_eval, base_selector=base)
print(f"{'budget':>6s} {'K':>4s} {'OA':>6s} {'mAcc':>6s}")
for row in rows:
    print(f"{row.budget:6d} {row.k:4.1f} {row.oa:6.3f} {row.macc:6.3f}")
