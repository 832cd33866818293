"""Exception hierarchy shared by every module."""


class HCUBError(Exception):
    """Base class; ``error_class`` is what the CLI prints on failure."""

    error_class = "error"


class InvalidArgumentError(HCUBError, ValueError):
    error_class = "invalid-argument"


class UnknownContextError(HCUBError, KeyError):
    error_class = "unknown-context"

    def __str__(self) -> str:
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class InvalidObservationError(InvalidArgumentError):
    error_class = "invalid-observation"


class ConsistencyError(HCUBError, RuntimeError):
    error_class = "internal-consistency"


class FeedbackError(HCUBError, RuntimeError):
    error_class = "feedback-failure"


class ConfigError(HCUBError, ValueError):
    """Config parse or validation failure, tagged with the offending field path."""

    error_class = "config-error"

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if field:
            prefix += f"{field}: "
        if line is not None:
            prefix = f"line {line}: " + prefix
        super().__init__(prefix + message)


class LogFormatError(HCUBError, ValueError):
    error_class = "log-format"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
