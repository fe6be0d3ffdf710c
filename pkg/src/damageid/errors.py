"""Exception hierarchy.

Validation problems (bad configuration, inputs outside the admissible sets)
derive from :class:`ValueError`; numerical failures derive from
:class:`RuntimeError`. The CLI maps the former to exit status 1 and the
latter to exit status 2.
"""


class DamageIdError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DamageIdError, ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DomainError(DamageIdError, ValueError):
    """Input outside the admissible set of an operator."""


class NumericalError(DamageIdError, RuntimeError):
    """A numerical kernel failed (non-convergent Newton, singular factorization)."""


class ConvergenceError(NumericalError):
    """An outer iteration did not converge; ``history`` holds its update norms."""

    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)
