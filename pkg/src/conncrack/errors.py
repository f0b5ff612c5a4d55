"""Exception hierarchy shared by all modules."""


class ConnCrackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ConnCrackError):
    """A config object or argument violates its invariants."""


class DimensionError(ConnCrackError):
    """Array shapes are inconsistent with the requested operation."""


class FormatError(ConnCrackError):
    """A file or byte stream is malformed.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(ConnCrackError):
    """A loss became non-finite during training.

    ``iteration`` is the 0-based iteration at which divergence was detected.
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.message = message
        self.iteration = iteration
