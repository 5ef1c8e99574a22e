class InvalidParameterError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class NonConvergenceError(RuntimeError):
    """Raised when an iterative procedure exceeds its cap without settling."""


class ParseError(ValueError):
    """Raised for malformed input files; carries the offending line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
