"""Embedding datasets, class priors, and the synthetic long-tail generator.

The dataset is the universe every selector operates on: an n x d matrix of
embedding vectors, integer class labels, and (optionally) teacher logits.
Datasets are immutable after construction and safe to share read-only.

File format (little-endian throughout)::

    magic "EMB1" | u32 version=1 | u64 n | u32 d | u32 C | u8 has_logits
    | n*d f32 row-major embeddings | n u32 labels | optional n*C f32 logits
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .exceptions import (
    BadMagicError,
    DatasetFormatError,
    LabelRangeError,
    NonFiniteValueError,
    TruncatedPayloadError,
)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

_MAGIC = b"EMB1"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIIB")

__all__ = [
    "EmbeddingDataset",
    "LongTailSpec",
    "PriorVector",
    "generate_long_tail",
    "empirical_prior",
    "load_dataset",
    "save_dataset",
    "FloatArray",
    "IntArray",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PriorVector:
    """A probability vector over the C classes.

    Holds any of the priors the pipeline cares about: the empirical prior
    of a dataset, the uniform prior, a user-supplied target, or the prior
    induced by a weighted selection.
    """

    probs: FloatArray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("prior must be a nonempty 1-d vector")
        if not np.all(np.isfinite(probs)):
            raise ValueError("prior entries must be finite")
        if np.any(probs < 0):
            raise ValueError("prior entries must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"prior must sum to 1, got {probs.sum()!r}")
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def num_classes(self) -> int:
        return int(self.probs.size)

    @classmethod
    def uniform(cls, num_classes: int) -> "PriorVector":
        if num_classes < 1:
            raise ValueError("need at least one class")
        return cls(np.full(num_classes, 1.0 / num_classes))

    @classmethod
    def from_counts(cls, counts) -> "PriorVector":
        counts = np.asarray(counts, dtype=np.float64)
        total = counts.sum()
        if total <= 0:
            raise ValueError("counts must sum to a positive total")
        return cls(counts / total)


@dataclass(frozen=True)
class EmbeddingDataset:
    """Per-sample embeddings, labels, and optional teacher logits.

    Arrays are stored read-only; embeddings and logits use float32 (the
    on-disk width) so save/load round-trips are bit identical.
    """

    embeddings: np.ndarray
    labels: IntArray
    num_classes: int
    teacher_logits: np.ndarray | None = None

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
            raise ValueError("embeddings must be a nonempty n x d matrix")
        if not np.all(np.isfinite(emb)):
            raise NonFiniteValueError("embeddings contain non-finite values")
        if labels.ndim != 1 or labels.shape[0] != emb.shape[0]:
            raise ValueError("labels must be a vector of length n")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelRangeError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "embeddings", _frozen(emb))
        object.__setattr__(self, "labels", _frozen(labels))
        if self.teacher_logits is not None:
            logits = np.asarray(self.teacher_logits, dtype=np.float32)
            if logits.shape != (emb.shape[0], self.num_classes):
                raise ValueError(
                    f"teacher_logits must have shape (n, C) = "
                    f"({emb.shape[0]}, {self.num_classes}), got {logits.shape}"
                )
            if not np.all(np.isfinite(logits)):
                raise NonFiniteValueError("teacher_logits contain non-finite values")
            object.__setattr__(self, "teacher_logits", _frozen(logits))

    @property
    def n(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dims(self) -> int:
        return int(self.embeddings.shape[1])

    @property
    def class_counts(self) -> IntArray:
        return np.bincount(self.labels, minlength=self.num_classes).astype(np.int64)

    def class_indices(self, label: int) -> IntArray:
        """Sample ids belonging to one class, ascending."""
        return np.flatnonzero(self.labels == label).astype(np.int64)

    def with_teacher_logits(self, logits: np.ndarray) -> "EmbeddingDataset":
        """A copy of this dataset carrying the given teacher logits."""
        return EmbeddingDataset(self.embeddings, self.labels, self.num_classes, logits)

    def subset(self, indices) -> "EmbeddingDataset":
        """Row-subset view (copied); keeps the full class space C."""
        idx = np.asarray(indices, dtype=np.int64)
        logits = None if self.teacher_logits is None else self.teacher_logits[idx]
        return EmbeddingDataset(self.embeddings[idx], self.labels[idx], self.num_classes, logits)


@dataclass(frozen=True)
class LongTailSpec:
    """Shape of a synthetic long-tailed dataset.

    Class sizes decay exponentially from ``head_count`` down to roughly
    ``head_count / imbalance_ratio``:

        n_y = round(head_count * imbalance_ratio**(-y / (C - 1)))

    rounded half-up and clamped to at least one sample per class.
    """

    num_classes: int
    head_count: int
    imbalance_ratio: float
    dims: int
    class_separation: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.head_count < 1:
            raise ValueError("head_count must be >= 1")
        if self.imbalance_ratio < 1.0:
            raise ValueError("imbalance_ratio must be >= 1")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")

    def class_sizes(self) -> IntArray:
        y = np.arange(self.num_classes, dtype=np.float64)
        raw = self.head_count * self.imbalance_ratio ** (-y / (self.num_classes - 1))
        sizes = np.floor(raw + 0.5).astype(np.int64)  # round half-up
        return np.maximum(sizes, 1)


def generate_long_tail(spec: LongTailSpec) -> EmbeddingDataset:
    """Draw a synthetic long-tailed embedding dataset.

    Each class is an isotropic unit-variance Gaussian cluster whose mean
    has norm ``class_separation``.  Mean directions are mutually
    orthogonal whenever the embedding dimension allows (C <= d); otherwise
    they are independent random unit vectors.  Fully deterministic given
    the ``LongTailSpec``, including its seed.
    """
    rng = np.random.default_rng(spec.seed)
    C, d = spec.num_classes, spec.dims
    sizes = spec.class_sizes()

    if C <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, C)))
        # pin the sign convention so the result is stable across LAPACK builds
        signs = np.where(q[np.abs(q).argmax(axis=0), np.arange(C)] >= 0, 1.0, -1.0)
        directions = (q * signs).T
    else:
        directions = rng.standard_normal((C, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    means = spec.class_separation * directions
    blocks = [means[y] + rng.standard_normal((int(sizes[y]), d)) for y in range(C)]
    embeddings = np.concatenate(blocks, axis=0).astype(np.float32)
    labels = np.repeat(np.arange(C, dtype=np.int64), sizes)
    return EmbeddingDataset(embeddings, labels, C)


def empirical_prior(ds: EmbeddingDataset) -> PriorVector:
    """The observed class frequencies n_y / n as a prior."""
    return PriorVector.from_counts(ds.class_counts)


def save_dataset(ds: EmbeddingDataset, path) -> None:
    """Write the binary dataset format described in the module docstring."""
    has_logits = ds.teacher_logits is not None
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, ds.n, ds.dims, ds.num_classes, int(has_logits)))
        fh.write(np.ascontiguousarray(ds.embeddings, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())
        if has_logits:
            fh.write(np.ascontiguousarray(ds.teacher_logits, dtype="<f4").tobytes())


def load_dataset(path) -> EmbeddingDataset:
    """Read a binary dataset file, validating structure and payload.

    Raises:
      BadMagicError: the file does not start with the expected magic.
      DatasetFormatError: unsupported version or inconsistent header.
      TruncatedPayloadError: fewer payload bytes than the header promises.
      LabelRangeError: a stored label >= C.
      NonFiniteValueError: NaN/inf in embeddings or logits.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[: len(_MAGIC)] != _MAGIC[: len(blob)]:
            raise BadMagicError(f"bad magic in {path}")
        raise TruncatedPayloadError(f"{path}: header truncated")
    magic, version, n, d, C, has_logits = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise BadMagicError(f"bad magic {magic!r} in {path}")
    if version != _VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    if n < 1 or d < 1 or C < 1 or has_logits not in (0, 1):
        raise DatasetFormatError(f"inconsistent header: n={n} d={d} C={C} has_logits={has_logits}")

    expected = _HEADER.size + n * d * 4 + n * 4 + (n * C * 4 if has_logits else 0)
    if len(blob) < expected:
        raise TruncatedPayloadError(f"{path}: expected {expected} bytes, found {len(blob)}")
    if len(blob) > expected:
        raise DatasetFormatError(f"{path}: {len(blob) - expected} trailing bytes")

    off = _HEADER.size
    emb = np.frombuffer(blob, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += n * d * 4
    labels_u32 = np.frombuffer(blob, dtype="<u4", count=n, offset=off)
    off += n * 4
    logits = None
    if has_logits:
        logits = np.frombuffer(blob, dtype="<f4", count=n * C, offset=off).reshape(n, C)

    if labels_u32.size and int(labels_u32.max()) >= C:
        raise LabelRangeError(f"{path}: label {int(labels_u32.max())} >= C={C}")
    if not np.all(np.isfinite(emb)):
        raise NonFiniteValueError(f"{path}: non-finite embedding values")
    if logits is not None and not np.all(np.isfinite(logits)):
        raise NonFiniteValueError(f"{path}: non-finite logit values")
    return EmbeddingDataset(emb, labels_u32.astype(np.int64), int(C), logits)
