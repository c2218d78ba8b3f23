"""Exception hierarchy shared by all modules.

``ParameterError`` marks bad inputs (mapped to exit code 2 by the CLI);
the remaining classes are data/runtime failures (exit code 3).
"""


class DepthRespError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(DepthRespError, ValueError):
    """A parameter or precondition was violated."""


class IngestionError(DepthRespError, ValueError):
    """A waveform file could not be read.

    ``record`` is the 1-based record (line) index that failed, when known.
    """

    def __init__(self, message: str, record: int | None = None):
        super().__init__(message)
        self.record = record


class DegenerateSignalError(DepthRespError, ValueError):
    """The signal carries no usable variation (constant or zero energy)."""


class DetectionError(DepthRespError, RuntimeError):
    """No respiration peak could be found in the reference spectrum."""
