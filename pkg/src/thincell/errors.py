"""Exception hierarchy shared across the package."""


class ThinCellError(Exception):
    """Base class for all package errors."""


class DomainError(ThinCellError, ValueError):
    """An argument lies outside the domain of a physical quantity."""


class ValidationError(ThinCellError, ValueError):
    """Input data violates a structural contract (shape, grid, symmetry)."""


class DegenerateSpectrumError(ValidationError):
    """Spectrum has no usable lobe (flat, or no sign change)."""


class DegenerateFitError(ThinCellError, ArithmeticError):
    """Normal matrix of a least-squares problem is singular."""


class NumericError(ThinCellError, ArithmeticError):
    """A numerical routine (quadrature, integrator) failed to converge."""


class IntegrityError(NumericError):
    """A density matrix drifted away from a physical state."""


class StatisticsError(ThinCellError):
    """Not enough Monte Carlo events to form an estimate."""


class ConfigError(ThinCellError, ValueError):
    """Configuration file is malformed, incomplete or has unknown keys."""
