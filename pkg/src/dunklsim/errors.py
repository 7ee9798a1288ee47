"""Exception types shared across the package."""

from __future__ import annotations


class DunklSimError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(DunklSimError, ValueError):
    """A constructor or operation received an out-of-range parameter."""


class OutsideChamberError(DunklSimError, ValueError):
    """The singular drift (or another chamber-only quantity) was evaluated
    at a point not strictly inside the Weyl chamber."""


class RootSystemValidationError(DunklSimError, ValueError):
    """A candidate root system violates one or more axioms.

    Attributes
    ----------
    violations : list[str]
        One human-readable entry per violated axiom, each naming the
        offending root or pair of roots.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid root system: " + "; ".join(self.violations))


class ContractViolationError(DunklSimError, ValueError):
    """A step-size/truncation combination violates the contraction
    condition h < eps^2 / L where L is the drift's Lipschitz scale."""


class ConvergenceFailureError(DunklSimError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    Carries the last iterate so callers can diagnose near-wall stalls.
    """

    def __init__(self, message: str, last_iterate=None, residual: float | None = None,
                 iterations: int | None = None, path_index: int | None = None,
                 step_index: int | None = None):
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations
        self.path_index = path_index
        self.step_index = step_index
        super().__init__(message)


class ConfigurationError(DunklSimError, ValueError):
    """A run configuration violates a numeric precondition."""


class ConfigSchemaError(DunklSimError, ValueError):
    """A config document does not match the documented schema.

    Attributes
    ----------
    field : str
        Dotted path of the offending field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
