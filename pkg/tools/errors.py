"""
Exception hierarchy for the scoring-rule tools.

Library code raises these; the experiment runner turns them into
``{"success": False, "error": ...}`` result dicts.
"""


class ScoringRulesError(ValueError):
    """Base class for every error raised by the tools package."""


class DensityError(ScoringRulesError):
    """Invalid density parameters or non-finite density derivatives."""


class KernelError(ScoringRulesError):
    """Invalid kernel or profile arguments."""


class ScoreError(ScoringRulesError):
    """A scoring rule could not be evaluated at a point."""


class EngineError(ScoringRulesError):
    """An expectation engine failed (unsupported dimension, non-finite integrand, ...)."""


class SureModelError(ScoringRulesError):
    """The Gaussian shift model or a shift estimator is misconfigured."""


class CrossValidationError(ScoringRulesError):
    """Cross-validation inputs are unusable (too few samples, bad grid, ...)."""


class ConfigError(ScoringRulesError):
    """An experiment configuration failed validation."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
