"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
data/parse errors exit 2, numerical failures exit 3.
"""


class AffectRegError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(AffectRegError, ValueError):
    """An argument violates a documented precondition."""


class DataFormatError(AffectRegError):
    """A file does not match its documented grammar.

    Messages carry ``path:line`` context whenever a line is known.
    """


class ConvergenceError(AffectRegError):
    """A numerical routine failed to converge and was configured fatal."""
