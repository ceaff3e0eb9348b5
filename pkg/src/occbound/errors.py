"""Exception taxonomy shared by the library and the CLI exit codes."""


class OccBoundError(Exception):
    """Base class for all library errors."""


class ParameterError(OccBoundError, ValueError):
    """A scalar argument or configuration value is out of its domain."""


class ValidationError(OccBoundError, ValueError):
    """Map data violates a structural invariant (shape, range, pairing)."""


class FormatError(OccBoundError, ValueError):
    """A file's content does not conform to its declared on-disk format."""


class CheckFailure(OccBoundError):
    """A self-check (gradient check, acceptance run) did not pass."""
