"""Nonlinear Faraday-Ramsey rotation in thin alkali-vapor cells.

Kinetic model of pump-to-probe transport, optical Bloch equations for the
F=2 -> F'=3 line, the resulting magnetic lineshape, a ballistic Monte Carlo
cross-check and least-squares fitting of measured spectra.
"""

__version__ = "0.1.0"

from .domain import RB87, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble, derive_thermal
from .errors import (
    ConfigError,
    DegenerateFitError,
    DegenerateSpectrumError,
    DomainError,
    IntegrityError,
    NumericError,
    StatisticsError,
    ThinCellError,
    ValidationError,
)
from .lineshape import LineshapeParams, LinewidthReport, Spectrum, full_lineshape, linewidth, nl_kernel, subtract_linear

__all__ = [
    "RB87",
    "AtomSpecies",
    "CellGeometry",
    "FieldConfig",
    "ThermalEnsemble",
    "derive_thermal",
    "LineshapeParams",
    "LinewidthReport",
    "Spectrum",
    "full_lineshape",
    "linewidth",
    "nl_kernel",
    "subtract_linear",
    "ConfigError",
    "DegenerateFitError",
    "DegenerateSpectrumError",
    "DomainError",
    "IntegrityError",
    "NumericError",
    "StatisticsError",
    "ThinCellError",
    "ValidationError",
]
