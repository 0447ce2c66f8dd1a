"""
Generating a synthetic long-tailed embedding dataset
====================================================

Builds a dataset whose per-class sizes decay exponentially from a head
class down to a rare tail, then inspects the profile.
"""

import numpy as np

from tailprune import LongTailSpec, empirical_prior, generate_long_tail

# 20 classes, the largest 100x the size of the smallest
spec = LongTailSpec(num_classes=20, head_count=500, imbalance_ratio=100.0,
                    dims=16, class_separation=2.0, seed=0)

# the size profile is available before paying for any sampling
sizes = spec.class_sizes()
print("per-class sizes:", sizes)
print("total:", sizes.sum())
print("realized imbalance:", round(float(sizes[0] / sizes[-1]), 1), "x")

ds = generate_long_tail(spec)
print("embeddings:", ds.embeddings.shape, ds.embeddings.dtype)
print("labels:", ds.labels.shape, "classes:", ds.num_classes)

# counts in the realized dataset match the declared profile exactly
assert np.array_equal(ds.class_counts, sizes)

# the empirical prior is the normalized size profile
prior = empirical_prior(ds)
print("head mass:", round(float(prior.probs[0]), 4),
      "tail mass:", round(float(prior.probs[-1]), 6))

# subsetting keeps the full class space so priors stay comparable
head_only = ds.subset(np.flatnonzero(ds.labels < 5))
print("subset n:", head_only.n, "still", head_only.num_classes, "classes")
