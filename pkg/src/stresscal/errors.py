"""Exception hierarchy shared by every stage of the pipeline."""


class StressCalError(Exception):
    """Base class for all package errors."""


class SchemaError(StressCalError, KeyError):
    """A column or role named in a schema is missing or malformed."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParseError(StressCalError, ValueError):
    """A data file contains a value that cannot be interpreted."""


class EmptyInputError(StressCalError, ValueError):
    """An input file or array contained no usable data."""


class IncompatibleFormatError(StressCalError, ValueError):
    """A persisted artifact was written with an unsupported format version."""


class UsageError(StressCalError, ValueError):
    """Invalid argument combination or unknown option."""


class InsufficientSignalError(StressCalError, ValueError):
    """Too little signal to compute the requested quantity."""


class InsufficientDataError(StressCalError, ValueError):
    """A series is shorter than the requested analysis window."""


class ParameterError(StressCalError, ValueError):
    """A numeric parameter is outside its valid range."""


class ShapeError(StressCalError, ValueError):
    """Array lengths or widths do not match."""


class PolicyError(StressCalError, ValueError):
    """A selection policy produced an empty or invalid result."""


class ProtocolError(StressCalError, ValueError):
    """An evaluation protocol's preconditions are not met."""


class ContaminationError(StressCalError, ValueError):
    """Calibration and generic pools share a subject."""
