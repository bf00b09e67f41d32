from __future__ import annotations
from typing import List, Optional


class ThermoplastError(Exception):
    reason = "error"
    exit_code = 1

    def __init__(self, message: str, *, detail: Optional[dict] = None):
        super().__init__(message)
        self.detail = detail or {}

    def payload(self) -> dict:
        return {"status": self.reason, "message": str(self), **self.detail}


class ConfigInvalid(ThermoplastError, ValueError):
    reason = "config-invalid"
    exit_code = 2

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid configuration",
                         detail={"violations": self.violations})


class DimensionMismatch(ValueError):
    pass


class FieldShapeError(ValueError):
    pass


class MeshError(ValueError):
    pass


class SolverFailure(ThermoplastError, RuntimeError):
    reason = "solver-failure"
    exit_code = 3


class LinearSolverError(SolverFailure):
    pass


class InnerIterationError(SolverFailure):
    """Plastic-strain iteration did not contract within max_iter, even after dt halving."""


class OracleNewtonError(SolverFailure):
    pass


class NotConverged(ThermoplastError):
    reason = "not-converged"
    exit_code = 4
