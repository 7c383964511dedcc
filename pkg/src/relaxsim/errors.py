"""Exception types raised across the package."""


class RelaxsimError(Exception):
    """Base class; carries a short machine-readable ``code``."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ParameterError(RelaxsimError, ValueError):
    code = "invalid-parameter"


class UndefinedDeltaError(ParameterError):
    code = "undefined-delta"


class DimensionError(RelaxsimError, ValueError):
    code = "dimension-mismatch"


class IntegrationDiverged(RelaxsimError, FloatingPointError):
    code = "integration-diverged"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def to_dict(self):
        out = super().to_dict()
        out["diagnostics"] = self.diagnostics
        return out


class ResolutionError(RelaxsimError, ValueError):
    code = "under-resolved-grid"


class CFLError(RelaxsimError, ValueError):
    code = "cfl-violation"


class SupportError(RelaxsimError, ValueError):
    code = "support-mismatch"


class PositivityError(RelaxsimError, FloatingPointError):
    code = "positivity-failure"


class TruncationError(RelaxsimError, ValueError):
    code = "truncation"


class SolverFault(RelaxsimError, FloatingPointError):
    code = "solver-fault"


class UnsupportedError(RelaxsimError, NotImplementedError):
    code = "unsupported"


class ConfigError(RelaxsimError, ValueError):
    code = "config"

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key

    def to_dict(self):
        out = super().to_dict()
        out["key"] = self.key
        return out
