"""
Exception hierarchy shared by the filter, the I/O layer and the CLI
"""


class LocalizationError(Exception):
    """Base class for every error raised by the localization engine"""


class InvalidInputError(LocalizationError, ValueError):
    """Input violates a precondition (non-finite value, unsorted stream, ...)"""


class NumericalDegeneracyError(LocalizationError, ArithmeticError):
    """A matrix the filter must factor is singular or not positive definite"""


class LogParseError(InvalidInputError):
    """Malformed log row"""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class LogValidationError(InvalidInputError):
    """Log parsed but breaks an ordering rule"""


class PipelineError(LocalizationError):
    """A pipeline stage failed; `cause` holds the original exception"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class UsageError(InvalidInputError):
    """Command line arguments could not be parsed"""
