"""Exception hierarchy shared by every module.

Each error carries a short machine-readable ``code`` so the command line
front end can emit a structured error report.
"""


class LabError(Exception):
    code = "lab_error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"error": self.code, "message": str(self), "details": self.details}


class DomainError(LabError):
    code = "domain_error"


class ZeroModeError(LabError):
    code = "zero_mode_error"


class GridError(LabError):
    code = "grid_error"


class InputError(LabError):
    code = "input_error"


class DivergenceError(LabError):
    code = "divergence_error"

    def __init__(self, message, diagnostics=None, **details):
        super().__init__(message, **details)
        self.diagnostics = diagnostics


class NoConvergenceError(LabError):
    code = "no_convergence"

    def __init__(self, message, diagnostics=None, **details):
        super().__init__(message, **details)
        self.diagnostics = diagnostics


class OracleError(LabError):
    code = "oracle_error"


class ThresholdAmbiguous(LabError):
    code = "threshold_ambiguous"


class FitUnreliable(LabError):
    code = "fit_unreliable"


class HypothesisError(LabError):
    code = "hypothesis_error"


class ConfigError(LabError):
    code = "config_error"
