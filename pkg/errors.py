"""
Error types shared by every dslda module.

Validation problems (bad input, bad flags) derive from ValidationError and
numerical failures from NumericalError; the CLI maps the two families to
exit codes 1 and 2.
"""


class DsldaError(Exception):
    """Base class for all dslda errors."""

    code = "DsldaError"

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


# ---------- Validation errors ----------

class ValidationError(DsldaError, ValueError):
    code = "ValidationError"


class EmptyInput(ValidationError):
    code = "EmptyInput"


class DimensionMismatch(ValidationError):
    code = "DimensionMismatch"


class BetaOutOfRange(ValidationError):
    code = "BetaOutOfRange"


class NonPositiveDiagonal(ValidationError):
    code = "NonPositiveDiagonal"


class SingleClassData(ValidationError):
    code = "SingleClassData"


class InvalidSpec(ValidationError):
    code = "InvalidSpec"


class UnmappedCode(ValidationError):
    code = "UnmappedCode"


class MalformedDate(ValidationError):
    code = "MalformedDate"


class EmptyConfusion(ValidationError):
    code = "EmptyConfusion"


class InsufficientData(ValidationError):
    code = "InsufficientData"


class InvalidConfig(ValidationError):
    code = "InvalidConfig"


# ---------- Numerical errors ----------

class NumericalError(DsldaError, ArithmeticError):
    code = "NumericalError"


class NotPositiveDefinite(NumericalError):
    code = "NotPositiveDefinite"


class NotConverged(NumericalError):
    code = "NotConverged"


class DegenerateDirection(NumericalError):
    code = "DegenerateDirection"
