"""Exception hierarchy with stable machine-readable codes."""

from __future__ import annotations


class CrossfitError(Exception):
    """Base class; ``code`` is surfaced verbatim in CLI error JSON."""

    code = "CROSSFIT_ERROR"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": str(self)}
        if self.details:
            out["details"] = self.details
        return out


class InvalidSpecError(CrossfitError, ValueError):
    code = "INVALID_SPEC"


class DomainError(CrossfitError, ValueError):
    code = "DOMAIN_ERROR"


class ShapeError(CrossfitError, ValueError):
    code = "SHAPE_MISMATCH"


class NotSymmetricError(CrossfitError, ValueError):
    code = "NOT_SYMMETRIC"


class EmptySampleError(CrossfitError, ValueError):
    code = "EMPTY_SAMPLE"


class PlanError(CrossfitError, ValueError):
    code = "PLAN_ERROR"


class SingularGramError(CrossfitError, ArithmeticError):
    code = "SINGULAR_GRAM"


class SingularMatrixError(CrossfitError, ArithmeticError):
    code = "SINGULAR_H"


class UnsupportedError(CrossfitError, NotImplementedError):
    code = "UNSUPPORTED"


class DataError(CrossfitError, ValueError):
    code = "DATA_ERROR"


class ConfigError(CrossfitError, ValueError):
    code = "CONFIG_ERROR"


class RateGridError(CrossfitError, ValueError):
    code = "RATE_GRID_TOO_SMALL"
