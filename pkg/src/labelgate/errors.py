"""Exception types shared across the package.

Every raised error carries enough context in its message to identify the
offending value, file line, or state transition without a debugger.
"""


class ConfigurationError(ValueError):
    """A config object or argument violates its documented constraints."""


class StateError(RuntimeError):
    """An operation was called on an object whose state does not permit it."""


class ShapeError(ValueError):
    """An array argument has the wrong dimensionality or length."""


class NumericError(ArithmeticError):
    """A numeric precondition failed (NaN/inf input, zero-norm vector, ...)."""


class ParseError(ValueError):
    """A structured text file is malformed; the message names the line."""


class FormatError(ValueError):
    """A file declares an unknown magic string or unsupported version."""


class InputError(ValueError):
    """An input collection is unusable (empty, mismatched, incomplete)."""


class SampleNotFoundError(KeyError):
    """A referenced sample id does not exist in the corpus at hand."""
