"""Exception types shared across the package.

Two failure families map onto the CLI exit codes: bad inputs
(ValidationError -> exit 2) and numerical breakdowns during fitting or
covariance estimation (NumericalError -> exit 3).
"""


class ValidationError(ValueError):
    """Malformed or dimensionally inconsistent input."""


class NumericalError(RuntimeError):
    """Numerical failure: singular Hessian past the ridge fallback,
    non-finite likelihood, or an uninvertible covariance factor."""
