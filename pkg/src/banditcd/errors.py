"""Exception types shared across the library."""


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InternalConsistencyError(RuntimeError):
    """A quantity violated an invariant by more than floating-point noise."""


class StaleProposalError(RuntimeError):
    """An update proposal was applied after the solver state had moved on."""


class NumericalFailureError(RuntimeError):
    """Non-finite values showed up in the solver loop."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BudgetExceededError(RuntimeError):
    """An iterative reference solve ran out of budget.

    Carries the best certificate found: ``certificate = (x, f_value, gap)``
    with the optimum bracketed in ``[f_value - gap, f_value]``.
    """

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ScaleGuardError(RuntimeError):
    """A dense brute-force oracle was asked to run on a too-large instance."""
