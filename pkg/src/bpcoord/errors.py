"""Exception types shared across the solver library."""


class BpcoordError(Exception):
    """Base class for all library errors."""


class ConfigurationError(BpcoordError):
    """A problem instance or solver configuration is malformed."""


class EvaluationError(BpcoordError):
    """A utility evaluator returned a non-finite value."""

    def __init__(self, link: int, message: str = ""):
        self.link = link
        super().__init__(message or f"utility evaluation failed for link {link}")


class OracleInfeasibleError(BpcoordError):
    """An enumeration oracle would exceed its configured budget."""
