from typing import Any, Dict, Optional


class KeffError(Exception):
    """
    Base class for every failure raised by the solver package.

    Subclasses add context attributes; ``to_record`` renders them in the
    ``{"status": "error", "error": {...}}`` shape written by the CLI.
    """

    error_type = "keff_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self) -> Dict[str, Any]:
        error: Dict[str, Any] = {"type": self.error_type, "message": self.message}
        for key, value in self.details.items():
            if value is not None:
                error[key] = value
        return {"status": "error", "error": error}


class ConfigurationError(KeffError, ValueError):
    """Invalid problem configuration. ``field_path`` names the offending key."""

    error_type = "configuration_error"

    def __init__(self, message: str, field_path: Optional[str] = None):
        super().__init__(message, field_path=field_path)
        self.field_path = field_path

    def __str__(self) -> str:
        if self.field_path:
            return f"{self.field_path}: {self.message}"
        return self.message


class MaterialLibraryError(ConfigurationError):
    error_type = "material_library_error"


class AssemblyError(KeffError, ValueError):
    error_type = "assembly_error"


class ContractViolationError(KeffError, ValueError):
    error_type = "contract_violation"


class SolverError(KeffError, ArithmeticError):
    """Linear solve failed: singular, ill-conditioned or residual too large."""

    error_type = "solver_error"

    def __init__(self, message: str, condition_estimate: Optional[float] = None,
                 residual: Optional[float] = None):
        super().__init__(message, condition_estimate=condition_estimate, residual=residual)
        self.condition_estimate = condition_estimate
        self.residual = residual


class DegenerateProblemError(KeffError, ArithmeticError):
    error_type = "degenerate_problem"


class RankDeficiencyError(DegenerateProblemError):
    error_type = "rank_deficiency"


class NonConvergenceError(KeffError, RuntimeError):
    """
    Iteration budget exhausted.

    ``history`` is the ConvergenceHistory so far and ``result`` the last
    iterate (a dense flux or a LowRankState) so callers can still inspect it.
    """

    error_type = "non_convergence"

    def __init__(self, message: str, history: Any = None, result: Any = None,
                 k_eff: Optional[float] = None):
        iterations = getattr(history, "iterations", None)
        super().__init__(message, iterations=iterations, k_eff=k_eff)
        self.history = history
        self.result = result
        self.k_eff = k_eff


class ConstructionError(KeffError, ValueError):
    error_type = "construction_error"


class MeasurementError(KeffError, ValueError):
    error_type = "measurement_error"


class DiagnosticDisabledError(KeffError, LookupError):
    error_type = "diagnostic_disabled"
