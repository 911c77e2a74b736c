"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or dimensionally inconsistent input."""


class DegenerateMapError(ValueError):
    """Reduction map is rank deficient (L L* numerically singular)."""


class EvaluationError(RuntimeError):
    """A model callback produced non-finite values.

    Carries the offending input as ``witness`` when available.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class BlowUpError(RuntimeError):
    """Trajectory left the finite range during integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class GeometryError(RuntimeError):
    """A state left its admissible set (moment set membership violated)."""


class UnsupportedConfigurationError(ValueError):
    """Requested configuration is outside the supported envelope."""


class NonConvergenceError(RuntimeError):
    """An iterative solve ran out of iterations; diagnostics attached."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
