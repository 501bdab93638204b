"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, DataError
exits 2, NumericalError exits 3.
"""


class MorphkitError(Exception):
    """Base class for all package-specific errors."""


class DataError(MorphkitError):
    """Invalid or inconsistent input data (empty sentence, bad file, ...)."""


class ShapeError(MorphkitError):
    """Tensor operation received incompatible shapes."""


class NumericalError(MorphkitError):
    """Non-finite values or a diverging optimization run."""
