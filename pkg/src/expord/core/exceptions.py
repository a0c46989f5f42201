"""Custom exceptions for expord."""


class ExpordError(Exception):
    """Base exception for expord errors."""

    pass


class HistoryError(ExpordError):
    """Invalid history segment or segment operation."""

    pass


class ConeError(ExpordError):
    """Error in an exponential-ordering cone operation."""

    pass


class CoefficientError(ExpordError):
    """Invalid quasi-periodic coefficient or calculus request."""

    pass


class ModelError(ExpordError):
    """Inconsistent Nicholson model or unsupported model operation."""

    pass


class IntegrationError(ExpordError):
    """Error while integrating a delay system."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class ScenarioError(ExpordError):
    """Error reading or validating a scenario file."""

    def __init__(
        self,
        message: str,
        line: int | None = None,
        column: int | None = None,
        key: str | None = None,
    ):
        super().__init__(message)
        self.line = line
        self.column = column
        self.key = key

    def __str__(self) -> str:
        message = super().__str__()
        if self.line is not None:
            return f"{message} (line {self.line}, column {self.column})"
        if self.key:
            return f"{message} (at '{self.key}')"
        return message


class ReportError(ExpordError):
    """Error writing report artifacts."""

    pass


class VerificationError(ExpordError):
    """Invalid input to an empirical verification."""

    pass
