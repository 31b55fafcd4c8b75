"""Angular-momentum algebra: spin matrices, 3-j symbols, ground-state moments.

Basis ordering throughout the package is ascending magnetic number,
``m = -F, ..., +F``, and density matrices are stored as ``rho[i, j] = <i|rho|j>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "SpinMatrices",
    "GroundStateMoments",
    "ladder_coefficient",
    "spin_matrices",
    "wigner_3j",
    "expectation_F",
    "alignment",
]


def _twice(x, what: str) -> int:
    """Return 2*x as an int, raising if x is not a multiple of 1/2."""
    t = 2 * x
    r = round(t)
    if abs(t - r) > 1e-9:
        raise DomainError(f"{what}={x!r} is not a multiple of 1/2")
    return int(r)


def ladder_coefficient(F, m) -> float:
    """<F, m+1| F_+ |F, m> = sqrt(F(F+1) - m(m+1)), for -F <= m <= F-1."""
    tF, tm = _twice(F, "F"), _twice(m, "m")
    if tF < 0 or (tF - tm) % 2 or tm < -tF or tm > tF - 2:
        raise DomainError(f"m={m!r} outside [-F, F-1] for F={F!r}")
    # in doubled units: 4*(F(F+1) - m(m+1)) = tF(tF+2) - tm(tm+2)
    return 0.5 * sqrt(tF * (tF + 2) - tm * (tm + 2))


@dataclass(frozen=True, eq=False)
class SpinMatrices:
    F: float
    Fx: np.ndarray
    Fy: np.ndarray
    Fz: np.ndarray
    Fplus: np.ndarray
    Fminus: np.ndarray

    @property
    def dim(self) -> int:
        return self.Fz.shape[0]

    @property
    def m_values(self) -> np.ndarray:
        return np.real(np.diag(self.Fz))


@lru_cache(maxsize=None)
def _spin_matrices(tF: int) -> SpinMatrices:
    dim = tF + 1
    m = (np.arange(dim) * 2 - tF) / 2.0
    Fplus = np.zeros((dim, dim), dtype=complex)
    for i in range(dim - 1):
        Fplus[i + 1, i] = ladder_coefficient(tF / 2, m[i])
    Fminus = Fplus.conj().T
    Fz = np.diag(m).astype(complex)
    Fx = 0.5 * (Fplus + Fminus)
    Fy = -0.5j * (Fplus - Fminus)
    for a in (Fx, Fy, Fz, Fplus, Fminus):
        a.setflags(write=False)
    return SpinMatrices(tF / 2, Fx, Fy, Fz, Fplus, Fminus)


def spin_matrices(F) -> SpinMatrices:
    """Cartesian and ladder spin matrices for spin ``F`` (cached, read-only)."""
    tF = _twice(F, "F")
    if tF < 0:
        raise DomainError(f"F must be non-negative, got {F!r}")
    return _spin_matrices(tF)


@lru_cache(maxsize=4096)
def _wigner_3j_doubled(j1, j2, j3, m1, m2, m3) -> float:
    if m1 + m2 + m3 != 0:
        return 0.0
    if (j1 + j2 + j3) % 2:
        return 0.0
    if j3 > j1 + j2 or j3 < abs(j1 - j2):
        return 0.0
    # half-integer arithmetic: everything below is an integer after halving
    a = [(j1 + j2 - j3) // 2, (j1 - j2 + j3) // 2, (-j1 + j2 + j3) // 2]
    big = (j1 + j2 + j3) // 2 + 1
    prefactor_sq = Fraction(factorial(a[0]) * factorial(a[1]) * factorial(a[2]), factorial(big))
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        prefactor_sq *= factorial((j + m) // 2) * factorial((j - m) // 2)

    t1 = (j3 - j2 + m1) // 2
    t2 = (j3 - j1 - m2) // 2
    t3 = (j1 + j2 - j3) // 2
    t4 = (j1 - m1) // 2
    t5 = (j2 + m2) // 2
    kmin = max(0, -t1, -t2)
    kmax = min(t3, t4, t5)
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        denom = (
            factorial(k)
            * factorial(t1 + k)
            * factorial(t2 + k)
            * factorial(t3 - k)
            * factorial(t4 - k)
            * factorial(t5 - k)
        )
        total += Fraction((-1) ** k, denom)
    if total == 0:
        return 0.0
    phase = -1 if ((j1 - j2 - m3) // 2) % 2 else 1
    value_sq = prefactor_sq * total * total
    sign = phase * (1 if total > 0 else -1)
    return sign * sqrt(value_sq)


def wigner_3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3-j symbol by the Racah single sum in exact rational arithmetic."""
    js = [_twice(j, "j") for j in (j1, j2, j3)]
    ms = [_twice(m, "m") for m in (m1, m2, m3)]
    for tj, tm in zip(js, ms):
        if tj < 0 or abs(tm) > tj or (tj - tm) % 2:
            raise DomainError(f"invalid quantum numbers {(j1, j2, j3, m1, m2, m3)!r}")
    return _wigner_3j_doubled(*js, *ms)


@dataclass(frozen=True)
class GroundStateMoments:
    Fx_exp: float
    Fy_exp: float
    Fz_exp: float
    alignment: float


def _check_hermitian(rho: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"density block must be square, got shape {rho.shape}")
    dev = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if dev > tol:
        raise ValidationError(f"density block is not Hermitian (max deviation {dev:.3g})")
    return rho


def alignment(rho: np.ndarray) -> float:
    """<3 F_z^2 - F^2> of a (2F+1)-dimensional density block."""
    rho = np.asarray(rho)
    tF = rho.shape[0] - 1
    m = (np.arange(tF + 1) * 2 - tF) / 2.0
    pops = np.real(np.diag(rho))
    FF1 = tF * (tF + 2) / 4.0
    return float(3.0 * np.dot(m * m, pops) - FF1 * pops.sum())


def expectation_F(rho: np.ndarray, N: float = 1.0) -> GroundStateMoments:
    """Macroscopic spin moments from a ground-manifold density block.

    Written as sums over neighbouring coherences weighted by the ladder
    coefficient, which is numerically identical to ``N * tr(rho F_i)``.
    """
    rho = _check_hermitian(rho)
    dim = rho.shape[0]
    F = (dim - 1) / 2.0
    m = np.arange(dim) - F
    A = np.array([ladder_coefficient(F, mm) for mm in m[:-1]])
    up = np.diagonal(rho, offset=1)  # <m|rho|m+1>
    down = np.diagonal(rho, offset=-1)  # <m+1|rho|m>
    Fx = np.sum(A / 2 * (down + up))
    Fy = np.sum(A / 2j * (up - down))
    Fz = np.sum(m * np.diag(rho))
    return GroundStateMoments(
        Fx_exp=float(N * Fx.real),
        Fy_exp=float(N * Fy.real),
        Fz_exp=float(N * Fz.real),
        alignment=N * alignment(rho),
    )
