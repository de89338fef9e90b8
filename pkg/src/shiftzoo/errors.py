"""Exception types shared across the package."""


class ShiftZooError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(ShiftZooError, ValueError):
    """Bad input: malformed files, inconsistent manifests, out-of-range values.

    The CLI maps this to exit code 2.
    """


class NumericalError(ShiftZooError, RuntimeError):
    """Degenerate numerical state: failed factorization, non-finite loss.

    The CLI maps this to exit code 1.
    """
