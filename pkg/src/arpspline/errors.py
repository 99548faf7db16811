"""Exception hierarchy shared by every module."""


class ArpsplineError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_record(self):
        return {"error": self.kind, "message": str(self)}


class ConfigurationError(ArpsplineError, ValueError):
    """Invalid model or basis configuration.

    ``problems`` holds every violation found, not only the first.
    """

    kind = "configuration"

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        super().__init__(message)

    def to_record(self):
        rec = super().to_record()
        rec["problems"] = self.problems
        return rec


class DomainError(ArpsplineError, ValueError):
    kind = "domain"


class DataError(ArpsplineError, ValueError):
    kind = "data"


class ShapeError(ArpsplineError, ValueError):
    kind = "shape"


class FactorizationError(ArpsplineError, ArithmeticError):
    """Cholesky failed; ``pivot`` is the 0-based index of the failing pivot."""

    kind = "factorization"

    def __init__(self, pivot):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {pivot} failed)")

    def to_record(self):
        rec = super().to_record()
        rec["pivot"] = self.pivot
        return rec


class SamplerError(ArpsplineError, RuntimeError):
    """MCMC failure, tagged with the iteration and the last good state."""

    kind = "sampler"

    def __init__(self, message, iteration=None, state=None):
        self.iteration = iteration
        self.state = state
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)

    def to_record(self):
        rec = super().to_record()
        rec["iteration"] = self.iteration
        if self.state is not None:
            rec["state"] = self.state.to_dict()
        return rec


class DiagnosticsError(ArpsplineError, RuntimeError):
    kind = "diagnostics"
