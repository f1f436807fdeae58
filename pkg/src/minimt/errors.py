"""Exception types shared across the package."""


class MinimtError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MinimtError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class EmptyInputError(MinimtError, ValueError):
    """An operation received an empty corpus, sentence or batch."""


class VocabularyError(MinimtError, ValueError):
    """Token id outside the vocabulary, or malformed vocabulary file."""


class ShapeError(MinimtError, ValueError):
    """Parameter or gradient arrays with inconsistent names/shapes."""


class SessionError(MinimtError, RuntimeError):
    """Interactive session misuse (closed session, bad position)."""


class NotFittedError(MinimtError, RuntimeError):
    """Estimator used before fit() or before a checkpoint was loaded."""


class CheckpointError(MinimtError, ValueError):
    """Unreadable or inconsistent checkpoint file."""
