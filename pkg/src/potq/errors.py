"""Exception hierarchy shared across the toolkit."""


class PotqError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(PotqError):
    """Operand shapes are inconsistent."""


class SchemeError(PotqError):
    """An operation received parameters of the wrong quantization scheme."""


class UncalibratedError(PotqError):
    """Quantization parameters were requested from an unfed observer."""


class AuditError(PotqError):
    """A static numeric audit (e.g. accumulator overflow) failed."""


class FormatError(PotqError):
    """A binary file does not conform to its declared format."""


class DataError(PotqError):
    """Dataset input is missing, unreadable, or degenerate."""
