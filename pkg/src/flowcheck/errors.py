class FlowcheckError(Exception):
    """Base class for every error flowcheck raises on purpose."""


class ParseError(FlowcheckError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")


class DuplicatePointError(ParseError):
    """A program point was annotated on outputs to two different channels."""


class UnboundVariableError(FlowcheckError):
    """A store does not bind every variable the program mentions."""


class ExecutionPointError(FlowcheckError):
    """The run terminates before the requested number of steps."""


class PolicyFileError(FlowcheckError):
    pass


class AttackerFileError(FlowcheckError):
    pass


class ApproximationError(FlowcheckError):
    """An output point of the typing has no entry in the policy approximation."""


class CacheMissError(FlowcheckError):
    pass


class StaleCacheError(FlowcheckError):
    pass
