"""Error types shared across the package."""


class CDMBDError(Exception):
    """Base class for package errors."""


class ValidationError(CDMBDError, ValueError):
    """Bad input shape, range or configuration."""


class InstabilityError(CDMBDError, ArithmeticError):
    """A dynamics block has spectral radius >= 1."""


class EmptyBlanketError(CDMBDError, ValueError):
    """Operation needs a non-empty blanket; keep the previous blanket mean."""


class NonConvergenceError(CDMBDError, ArithmeticError):
    """Multipliers are not at a dual fixed point."""
