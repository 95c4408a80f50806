"""Exception taxonomy shared by all modules.

CLI exit-code mapping: ParameterError -> 2 (configuration error),
everything else derived from NumericalError -> 3 (numerical abort).
"""


class BrwplabError(Exception):
    """Base class for package errors."""


class ParameterError(BrwplabError, ValueError):
    """Invalid argument or configuration value."""


class NumericalError(BrwplabError, RuntimeError):
    """Base class for aborts detected during numerical evaluation."""


class TruncationError(NumericalError):
    """Quadrature grid too narrow: tail mass is not negligible."""


class DegenerateDensityError(NumericalError):
    """Density with zero/NaN mass or nonpositive values where positivity is required."""


class StepsizeError(NumericalError):
    """Laplace-approximation correction factor too small: proximal stepsize too large."""


class IsolatedParticleError(NumericalError):
    """A particle is so far from the ensemble that its density underflows."""


class EvaluationError(NumericalError):
    """Generic evaluation failure (degenerate denominator, excessive clamping, ...)."""
