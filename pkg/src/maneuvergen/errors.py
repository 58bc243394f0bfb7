"""Exception hierarchy shared across the package."""


class ManeuverGenError(Exception):
    """Base class for all package errors."""


class ConfigError(ManeuverGenError, ValueError):
    """A configuration object violates its invariants."""


class ParameterError(ManeuverGenError, ValueError):
    """A function argument is out of its admissible range."""


class ShapeError(ManeuverGenError, ValueError):
    """Tensor or array shapes are inconsistent with the model configuration."""


class FormatError(ManeuverGenError):
    """Base class for on-disk container errors."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    def __init__(self, path, expected, actual):
        self.path = path
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{path}: truncated container, expected {expected} bytes but found {actual}"
        )


class TrainingError(ManeuverGenError, RuntimeError):
    """Training produced a non-finite loss or otherwise cannot continue."""


class SearchError(ManeuverGenError, RuntimeError):
    """Latent search hit a non-finite gradient or invalid state."""
