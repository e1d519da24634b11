"""Exception hierarchy shared across the toolkit.

Everything raised on bad data or bad state derives from LatentOodError so the
CLI can map library failures to a single exit code.
"""


class LatentOodError(Exception):
    """Base class for all toolkit errors."""


class FormatError(LatentOodError):
    """File does not carry the expected magic/version."""


class CorruptionError(LatentOodError):
    """File header and payload disagree (truncation, bad sizes)."""


class ValidationError(LatentOodError):
    """Data violates a declared invariant (non-finite entries, empty class...)."""


class ShapeError(LatentOodError):
    """Dimension mismatch between operands."""


class ArgumentError(LatentOodError):
    """Argument outside its documented range."""


class DegenerateInputError(LatentOodError):
    """Input is structurally empty for the requested operation (e.g. all-masked)."""


class InsufficientDataError(LatentOodError):
    """Too few samples to fit the requested model."""


class NotPositiveDefiniteError(LatentOodError):
    """Cholesky factorization hit a non-positive pivot."""


class ConditioningError(LatentOodError):
    """Factorization still fails after ridge escalation."""


class TrainingError(LatentOodError):
    """Observer training diverged; message carries the step index."""


class NumericError(LatentOodError):
    """A non-finite intermediate appeared; message names the stage."""
