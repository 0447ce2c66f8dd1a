import numpy as np
import pytest

from tailprune import EmbeddingDataset, LongTailSpec, generate_long_tail


def tiny_dataset(n_per_class=(4, 3, 2), dims=3, seed=0, with_logits=False):
    """Small dataset with Gaussian clusters on coordinate axes."""
    rng = np.random.default_rng(seed)
    C = len(n_per_class)
    blocks, labels = [], []
    for y, n in enumerate(n_per_class):
        center = np.zeros(dims)
        center[y % dims] = 4.0 * (1 + y // dims)
        blocks.append(center + rng.normal(0, 0.5, (n, dims)))
        labels.extend([y] * n)
    emb = np.concatenate(blocks).astype(np.float32)
    logits = None
    if with_logits:
        logits = rng.normal(0, 2.0, (emb.shape[0], C)).astype(np.float32)
    return EmbeddingDataset(emb, np.array(labels, dtype=np.int64), C, logits)


@pytest.fixture
def longtail():
    return generate_long_tail(LongTailSpec(5, 60, 12.0, 6, seed=11))
