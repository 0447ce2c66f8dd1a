"""Exception types shared across the package.

Dataset file errors are split into distinct classes so callers (and the
CLI exit-code mapping) can tell malformed magic, truncation, label-range
and non-finite payloads apart.
"""

__all__ = [
    "DatasetFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "LabelRangeError",
    "NonFiniteValueError",
    "InfeasibleError",
    "DivergenceError",
    "StudentSaturationError",
]


class DatasetFormatError(ValueError):
    """Base class for malformed dataset/selection files."""

    code = "format"


class BadMagicError(DatasetFormatError):
    code = "bad_magic"


class TruncatedPayloadError(DatasetFormatError):
    code = "truncated_payload"


class LabelRangeError(DatasetFormatError):
    code = "label_range"


class NonFiniteValueError(DatasetFormatError):
    code = "non_finite"


class InfeasibleError(ValueError):
    """A structurally valid request that cannot be satisfied (e.g. a

    per-class floor whose sum exceeds the total budget, or a selection
    budget larger than the dataset)."""

    code = "infeasible"


class DivergenceError(RuntimeError):
    """Raised when an optimizer's loss increases past recovery."""

    code = "divergence"


class StudentSaturationError(ValueError):
    """Student assigns probability zero where the teacher does not."""

    code = "saturation"
