"""Exception types shared across modules."""


class ConicYamabeError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(ConicYamabeError, ValueError):
    pass


class DivergentConstantError(ConicYamabeError, ValueError):
    """Raised when a radial integral diverges (n = 4 and the L^2 mass of U)."""


class DomainError(ConicYamabeError, ValueError):
    pass


class EvaluationError(ConicYamabeError, ArithmeticError):
    """A quadrature integrand produced a non-finite value."""


class FitError(ConicYamabeError, ValueError):
    pass


class ResolutionError(ConicYamabeError, RuntimeError):
    """Discrete solve did not reach the requested accuracy; try a finer grid."""


class IncompleteInputError(ConicYamabeError, ValueError):
    pass


class UnsupportedFamilyError(ConicYamabeError, ValueError):
    pass


class SpecFileError(ConicYamabeError, ValueError):
    """A link/deformation spec file could not be parsed or validated."""
