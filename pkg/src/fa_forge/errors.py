"""Exception hierarchy shared by every fa_forge module."""


class FaForgeError(Exception):
    """Base class; ``code`` is a stable machine-readable tag."""

    code = "error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class DagError(FaForgeError):
    code = "dag-error"


class DuplicateIdError(DagError):
    code = "duplicate-id"


class MalformedParamsError(DagError):
    code = "malformed-params"


class UnknownIdError(DagError):
    code = "unknown-id"


class CycleError(DagError):
    code = "would-create-cycle"


class DecodeError(FaForgeError):
    """JSON could not be parsed; carries the 1-based line and column."""

    code = "parse-error"

    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SchemaViolation(FaForgeError):
    """Well-formed JSON that does not fit the expected schema."""

    code = "schema-violation"

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class PlanError(FaForgeError):
    code = "plan-error"


class BackendError(FaForgeError):
    code = "backend-unavailable"


class CryptoError(FaForgeError):
    code = "crypto-error"


class ExecutionError(FaForgeError):
    code = "execution-error"

    def __init__(self, message, code=None, node_id=None, epsilon_sensitive=False):
        super().__init__(message, code)
        self.node_id = node_id
        self.epsilon_sensitive = epsilon_sensitive


class CalcError(FaForgeError):
    code = "calc-error"


class DataError(FaForgeError):
    code = "data-error"

    def __init__(self, message, code=None, row=None):
        super().__init__(message, code)
        self.row = row
