"""Named-stream seed derivation.

Every run owns a single master seed; each consumer (dataset generation,
selection, probe training, ...) pulls its own 64-bit seed from a named
stream.  Adding a new stream never perturbs the seeds of existing ones,
which keeps pipeline outputs stable as features are added.
"""

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master_seed: int, stream: str) -> int:
    """Derive a stable 64-bit seed for a named stream.

    Args:
      master_seed: the run-level seed.
      stream: a short name such as "dataset" or "select".

    Returns:
      An unsigned 64-bit integer, a pure function of (master_seed, stream).
    """
    digest = hashlib.sha256(f"{master_seed}\x1f{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
