"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined.

    ``param`` names the offending parameter (dotted path for nested configs)
    so that callers such as the CLI can report where validation failed.
    """

    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param

    def __str__(self):
        msg = super().__str__()
        return f"{self.param}: {msg}" if self.param else msg


class NumericalError(ArithmeticError):
    """A numerical procedure failed (factorization, blow-up, ...)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InsufficientDataError(RuntimeError):
    """Monte-Carlo budget too small for the requested estimate.

    ``details`` carries whatever partial information is available, e.g. the
    ratios that need more trials or the census that had no usable levels.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details
