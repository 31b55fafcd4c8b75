"""Configuration types and derived thermal/magnetic quantities.

All quantities are SI. The types are frozen dataclasses so they can be shared
freely between threads and used as cache keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import AMU, HBAR, K_B, MU_B, RB87_MASS_AMU
from .errors import DomainError

__all__ = [
    "AtomSpecies",
    "CellGeometry",
    "ThermalEnsemble",
    "FieldConfig",
    "RB87",
    "derive_thermal",
    "gyromagnetic_ratio",
    "larmor",
    "replace",
]

# thin-cell linearization breaks down beyond this aspect ratio
MAX_ASPECT = 0.1


@dataclass(frozen=True)
class AtomSpecies:
    """Atomic constants for a closed F_g -> F_e = F_g + 1 transition.

    ``g_F`` is the Lande factor of the ground hyperfine level, ``g_e`` that of the
    excited level (only the Bloch-equation solver needs it).
    """

    name: str
    mass: float
    F_ground: int
    F_excited: int
    g_F: float
    Gamma_e: float
    sigma_SE: float = 1.9e-18
    g_e: float = 2.0 / 3.0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass!r}")
        if self.Gamma_e < 0:
            raise DomainError(f"Gamma_e must be non-negative, got {self.Gamma_e!r}")
        if self.sigma_SE < 0:
            raise DomainError(f"sigma_SE must be non-negative, got {self.sigma_SE!r}")
        if self.F_excited != self.F_ground + 1:
            raise DomainError(
                "only closed F -> F+1 transitions are supported "
                f"(got F_ground={self.F_ground}, F_excited={self.F_excited})"
            )


RB87 = AtomSpecies(
    name="Rb87",
    mass=RB87_MASS_AMU * AMU,
    F_ground=2,
    F_excited=3,
    g_F=0.5,
    Gamma_e=2 * math.pi * 6.0666e6,
    sigma_SE=1.9e-18,
    g_e=2.0 / 3.0,
)


@dataclass(frozen=True)
class CellGeometry:
    """Thin cell with a ring-shaped pump around a central probe beam.

    W is the cell thickness, L the pump-probe separation (inner ring radius),
    ``w_pu`` the ring width and ``R_pr`` the probe radius.
    """

    W: float
    L: float
    w_pu: float = 0.5e-3
    R_pr: float = 0.5e-3
    lateral_extent: float = 12e-3

    def __post_init__(self):
        if not (self.W > 0 and self.L > 0):
            raise DomainError(f"W and L must be positive (W={self.W!r}, L={self.L!r})")
        if self.W / self.L >= MAX_ASPECT:
            raise DomainError(
                f"thin-cell model needs W/L < {MAX_ASPECT}, got W/L = {self.W / self.L:.3g}"
            )
        if self.w_pu < 0 or self.R_pr < 0:
            raise DomainError("w_pu and R_pr must be non-negative")

    @property
    def alpha_max(self) -> float:
        return math.atan(self.W / self.L)

    @property
    def D(self) -> float:
        """Inner diameter of the pump ring."""
        return 2.0 * self.L


@dataclass(frozen=True)
class ThermalEnsemble:
    T: float
    n: float
    u: float
    v_p: float
    V_Rb: float


def derive_thermal(T: float, n: float, species: AtomSpecies = RB87) -> ThermalEnsemble:
    """Thermal speeds of a vapor at temperature ``T`` [K] and density ``n`` [m^-3].

    ``u = sqrt(kT/m)`` is the speed scale of the planar Maxwellian used by the
    kinetic model, ``v_p = sqrt(2kT/m)`` the most probable 3D speed and
    ``V_Rb = sqrt(4kT/(pi m))`` the collision speed entering spin exchange.
    """
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T!r}")
    if not n > 0:
        raise DomainError(f"number density must be positive, got {n!r}")
    kT_m = K_B * T / species.mass
    return ThermalEnsemble(
        T=T,
        n=n,
        u=math.sqrt(kT_m),
        v_p=math.sqrt(2.0 * kT_m),
        V_Rb=math.sqrt(4.0 * kT_m / math.pi),
    )


@dataclass(frozen=True)
class FieldConfig:
    """Magnetic fields, decoherence rate and lineshape amplitudes.

    ``B_parallel`` is the scanned component along the beams, ``B_perp`` the
    static transverse field, ``Gamma_coh`` the in-flight spin decoherence rate.
    """

    B_parallel: float = 0.0
    B_perp: float = 20e-6
    Gamma_coh: float = 0.0
    c1: float = 0.0
    c2: float = 1.0

    def __post_init__(self):
        if self.Gamma_coh < 0:
            raise DomainError(f"Gamma_coh must be non-negative, got {self.Gamma_coh!r}")

    @property
    def B_total(self) -> float:
        return math.hypot(self.B_parallel, self.B_perp)


def gyromagnetic_ratio(species: AtomSpecies = RB87) -> float:
    """gamma = g_F mu_B / hbar in rad s^-1 T^-1."""
    return species.g_F * MU_B / HBAR


def larmor(B, species: AtomSpecies = RB87):
    """Larmor angular frequency gamma*B; accepts scalars or arrays."""
    gamma = gyromagnetic_ratio(species)
    if np.ndim(B) == 0:
        return gamma * float(B)
    return gamma * np.asarray(B, dtype=float)

