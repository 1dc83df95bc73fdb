"""Exception types shared across the package.

The command-line front end maps these onto stable exit codes: usage and
configuration problems exit 1, malformed or insufficient data exits 2,
and numerical failures (overflow, NaN, singular scaling) exit 3.
"""


class TomographyError(Exception):
    """Base class for errors raised by this package."""


class UsageError(TomographyError):
    """Invalid arguments, flags, or configuration (CLI exit code 1)."""


class DataError(TomographyError):
    """Malformed, inconsistent, or insufficient input data (CLI exit code 2)."""


class NumericalError(TomographyError):
    """Overflow, non-finite intermediate, or singular scaling (CLI exit code 3)."""


class PatternOverflowError(NumericalError):
    """A pattern recursion overflowed the floating-point range."""
