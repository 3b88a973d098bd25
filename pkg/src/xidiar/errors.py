"""Exception and warning types shared across the package."""


class DiarizationError(Exception):
    """Base class for every error raised by xidiar."""

    stage = None

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(DiarizationError, ValueError):
    pass


class EmptyInputError(DiarizationError, ValueError):
    pass


class AlignmentError(DiarizationError, ValueError):
    def __init__(self, message, index=None, stage=None):
        super().__init__(message, stage)
        self.index = index


class DimensionError(DiarizationError, ValueError):
    pass


class NumericalError(DiarizationError, ArithmeticError):
    pass


class ModelError(DiarizationError):
    pass


class FormatError(DiarizationError, ValueError):
    pass


class ScoringError(DiarizationError, ValueError):
    pass


class DiarizationWarning(UserWarning):
    """Emitted for degenerate-but-recoverable inputs."""
