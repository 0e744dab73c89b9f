"""Exception hierarchy shared by all gslab modules."""


class GSLabError(Exception):
    """Base class for all gslab errors."""


class InvalidNFunctionError(GSLabError):
    """Input fails the N-function requirements (convexity, limits, monotonicity)."""


class UnboundedInverseError(GSLabError):
    """Bracket expansion failed: the evaluator stays below the requested value."""


class EmptyDomainError(GSLabError):
    """Grid construction produced no interior nodes."""


class InvalidDensityError(GSLabError):
    """Perturbation density is negative or non-finite at an interior node."""


class ConvergenceFailureError(GSLabError):
    """An iterative solver stagnated before reaching its tolerance."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class SupercriticalMeasureError(GSLabError):
    """Hardy constant exceeds one; the perturbed form is indefinite."""


class NearSingularError(GSLabError):
    """Operator too close to singular for a direct solve; use the subcritical ladder."""


class NoSolutionError(GSLabError):
    """The shifted operator is indefinite; the requested equation has no solution."""


class ConstantsInvalidError(GSLabError):
    """A constants bundle failed one of its defining inequalities."""

    def __init__(self, message, inequality=None, worst_probe=None):
        super().__init__(message)
        self.inequality = inequality
        self.worst_probe = worst_probe


class TheoremViolationError(GSLabError):
    """A proved comparison bound failed numerically; indicates a bug upstream."""


class InternalInconsistencyError(GSLabError):
    """Solver output violates a structural invariant (sign, symmetry, positivity)."""


class ConfigError(GSLabError):
    """Scenario configuration failed validation."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
