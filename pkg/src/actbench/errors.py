"""Exception hierarchy shared across the toolkit."""


class ActBenchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ActBenchError):
    """Input values are malformed (non-finite, wrong sign, zero gap...)."""


class InsufficientPointsError(InvalidInputError):
    """An operation needs more trajectory points than were supplied."""


class FrameError(ActBenchError):
    """A trajectory is expressed in the wrong coordinate frame."""


class TimeRangeError(ActBenchError):
    """A requested timestamp falls outside the trajectory's time span."""


class AlignmentError(ActBenchError):
    """Two trajectories cannot be compared point-by-point."""


class SchemaError(ActBenchError):
    """A record or file does not match its documented schema."""


class ParameterError(ActBenchError):
    """A configuration value or operation parameter is unusable."""


class StructureError(ActBenchError):
    """A packed sequence or serialized payload is malformed."""


class CoverageError(ActBenchError):
    """Requested span is not covered by the available data."""


class IntegrityError(ActBenchError):
    """Dataset-level consistency violation (duplicate ids, ...)."""
