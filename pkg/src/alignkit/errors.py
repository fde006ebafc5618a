"""Exception types shared across the toolkit."""


class AlignkitError(Exception):
    """Base class for all toolkit errors."""


class MalformedInputError(AlignkitError, ValueError):
    """Input data violates a structural precondition."""


class UndefinedMetricError(AlignkitError, ValueError):
    """A metric is undefined for the given inputs (e.g. empty sure set)."""


class ConfigError(AlignkitError, ValueError):
    """Invalid configuration or flag combination."""


class BackendError(AlignkitError, RuntimeError):
    """A scorer backend failed or produced an unusable reply."""


class CapabilityError(BackendError):
    """A backend was asked for a score kind it does not support."""


class ScorerTimeoutError(BackendError):
    """An external backend did not reply within the deadline."""


class FitError(AlignkitError, ValueError):
    """A regression fit is impossible (rank-deficient design)."""


class TrainingError(AlignkitError, RuntimeError):
    """Ensemble training failed (unusable data or divergence)."""
