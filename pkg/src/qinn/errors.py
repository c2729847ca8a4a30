"""Exception taxonomy shared across the library.

CLI exit codes map onto these: ConfigurationError -> 2, DataError and
FormatError -> 3, NumericError -> 4.
"""


class QinnError(Exception):
    """Base class for all library errors."""


class DimensionError(QinnError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigurationError(QinnError):
    """An option, spec, or circuit description is invalid."""


class CapacityError(ConfigurationError):
    """A combination pool is too small for the requested fan-in."""


class DataError(QinnError):
    """Dataset contents violate a precondition (labels, counts, values)."""


class FormatError(DataError):
    """A binary file does not match its declared format."""


class GraphStateError(QinnError):
    """The compute graph or optimizer is in a state that forbids the call."""


class NumericError(QinnError):
    """A computation produced non-finite values (training divergence)."""
