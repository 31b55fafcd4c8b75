"""Thin-cell kinetic theory.

Wall collisions destroy spin coherence, so only atoms flying almost parallel to
the walls carry polarization from the pump ring to the probe. This module holds
the angular acceptance, the planar speed distribution, the resulting marginal
of the across-cell velocity component v_par (closed form and a quadrature
oracle), and the flux / spin-exchange bookkeeping.

Naming: "v_par" is the velocity component along the beams, i.e. across the thin
dimension of the cell. Its distribution is called the *longitudinal marginal*
here, although it is sometimes labelled a transverse distribution elsewhere.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .domain import AtomSpecies, CellGeometry, ThermalEnsemble, RB87
from .errors import NumericError

SQRT_PI = math.sqrt(math.pi)

__all__ = [
    "AngularDistribution",
    "FluxReport",
    "angular_norm",
    "angular_density",
    "eta",
    "marginal_shape",
    "longitudinal_marginal",
    "longitudinal_marginal_numeric",
    "maxwell_speed_density",
    "flux_report",
    "mass_fraction_below",
]


def angular_norm(geometry: CellGeometry, N_pu: float = 1.0) -> float:
    """Constant A such that 2 * int_0^{W/L} A (W - L a) da = N_pu."""
    return N_pu * geometry.L / geometry.W**2


@dataclass(frozen=True)
class AngularDistribution:
    geometry: CellGeometry
    A_norm: float
    alpha_max: float

    @classmethod
    def for_geometry(cls, geometry: CellGeometry, N_pu: float = 1.0):
        return cls(geometry, angular_norm(geometry, N_pu), geometry.alpha_max)

    def __call__(self, alpha, linearized: bool = True):
        return angular_density(alpha, self.geometry, linearized, A=self.A_norm)


def angular_density(alpha, geometry: CellGeometry, linearized: bool = False, A: float | None = None):
    """Number of atoms per unit direction angle that can reach the probe.

    The exact form is ``A (W - L tan|alpha|)``, the thin-cell form
    ``A (W - L |alpha|)``; both are clamped to zero past their cutoff.
    """
    if A is None:
        A = angular_norm(geometry)
    a = np.abs(np.asarray(alpha, dtype=float))
    W, L = geometry.W, geometry.L
    if linearized:
        f = A * (W - L * a)
    else:
        with np.errstate(invalid="ignore"):
            f = np.where(a < math.pi / 2, A * (W - L * np.tan(np.minimum(a, math.pi / 2 - 1e-12))), 0.0)
    f = np.maximum(f, 0.0)
    return float(f) if np.ndim(alpha) == 0 else f


def eta(v_par, geometry: CellGeometry, ensemble: ThermalEnsemble):
    """Ratio of mean planar transit time L/u to wall-to-wall time W/|v_par|."""
    return geometry.L * np.abs(v_par) / (geometry.W * ensemble.u)


def marginal_shape(x):
    """(1/pi) exp(-x^2) - x erfc(x) / sqrt(pi), the marginal as a function of eta."""
    x = np.asarray(x, dtype=float)
    # scaled erfc keeps the bracket O(1/x^2) instead of underflowing
    g = np.exp(-x * x) * (1.0 / math.pi - x * special.erfcx(x) / SQRT_PI)
    g = np.maximum(g, 0.0)
    return float(g) if g.ndim == 0 else g


def _marginal_scale(geometry, ensemble, normalized, A):
    if normalized:
        # int g(eta(v)) dv over the real line = (W u / L) / (2 sqrt(pi))
        return 2.0 * SQRT_PI * geometry.L / (geometry.W * ensemble.u)
    if A is None:
        A = angular_norm(geometry)
    return SQRT_PI * A * geometry.W / 2.0


def longitudinal_marginal(v_par, geometry: CellGeometry, ensemble: ThermalEnsemble,
                          normalized: bool = True, A: float | None = None):
    """Closed-form distribution of v_par among atoms that reach the probe.

    With ``normalized`` the density integrates to one over v_par; otherwise the
    raw prefactor ``sqrt(pi) A W / 2`` is applied.
    """
    return _marginal_scale(geometry, ensemble, normalized, A) * marginal_shape(eta(v_par, geometry, ensemble))


def longitudinal_marginal_numeric(v_par, geometry: CellGeometry, ensemble: ThermalEnsemble,
                                  normalized: bool = True, A: float | None = None,
                                  rtol: float = 1e-9):
    """Quadrature of acceptance x planar speed density over the speed.

    ``int_{v_min}^inf A (W - L v_par / v) f_MB(v) dv`` with ``v_min = L v_par / W``.
    Serves as the oracle for :func:`longitudinal_marginal`.
    """
    if A is None:
        A = angular_norm(geometry)
    W, L, u = geometry.W, geometry.L, ensemble.u

    def one(vp):
        vp = abs(float(vp))
        v_min = L * vp / W

        def integrand(v):
            return A * (W - L * vp / v) * maxwell_speed_density(v, ensemble, normalized=False)

        # integrand vanishes beyond ~40 u; split at the peak for robustness
        lo = v_min
        hi = v_min + 40.0 * u
        mid = max(lo, u / math.sqrt(2))
        pieces = [(lo, mid), (mid, hi)] if mid > lo else [(lo, hi)]
        total = 0.0
        for a, b in pieces:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=rtol, limit=200)
                except integrate.IntegrationWarning as exc:
                    raise NumericError(
                        f"marginal quadrature did not converge at v_par={vp!r} on [{a:.6g}, {b:.6g}]: {exc}"
                    ) from exc
            total += val
        return total

    vals = np.array([one(v) for v in np.atleast_1d(v_par)], dtype=float)
    if normalized:
        vals *= _marginal_scale(geometry, ensemble, True, None) / _marginal_scale(geometry, ensemble, False, A)
    return float(vals[0]) if np.ndim(v_par) == 0 else vals


def maxwell_speed_density(v, ensemble: ThermalEnsemble, normalized: bool = True):
    """Planar Maxwellian ``pi^-1/2 (v/u^2) exp(-v^2/u^2)``.

    The raw form integrates to ``1/(2 sqrt(pi))``; ``normalized`` multiplies by
    ``2 sqrt(pi)``.
    """
    u = ensemble.u
    v = np.asarray(v, dtype=float)
    f = np.where(v >= 0, v / (SQRT_PI * u * u) * np.exp(-(v * v) / (u * u)), 0.0)
    if normalized:
        f = 2.0 * SQRT_PI * f
    return float(f) if f.ndim == 0 else f


def mass_fraction_below(v_cut: float, geometry: CellGeometry, ensemble: ThermalEnsemble) -> float:
    """Fraction of the normalized marginal with |v_par| < v_cut."""
    x = geometry.L * v_cut / (geometry.W * ensemble.u)
    val, _ = integrate.quad(marginal_shape, 0.0, x, epsabs=0, epsrel=1e-12, limit=200)
    return min(1.0, 4.0 * SQRT_PI * val)


@dataclass(frozen=True)
class FluxReport:
    V_pu: float
    N_pu: float
    R_es: float
    N_exp: float
    F_meas: float
    lambda_SE: float
    R_SE: float

    def to_dict(self) -> dict:
        return asdict(self)


def flux_report(geometry: CellGeometry, ensemble: ThermalEnsemble, species: AtomSpecies = RB87) -> FluxReport:
    """Pumped volume, atom number, coherent flux and spin-exchange scales.

    The spin-exchange rate is ``sqrt(2) V_Rb / lambda_SE`` (collision speed over
    mean free path).
    """
    W, L = geometry.W, geometry.L
    V_pu = 2.0 * math.pi * L * geometry.w_pu * W
    N_pu = ensemble.n * V_pu
    R_es = geometry.R_pr * W / (2.0 * math.pi * L * L)
    N_exp = R_es * N_pu
    F_meas = N_exp * ensemble.v_p / L
    if species.sigma_SE > 0:
        lam = 1.0 / (math.sqrt(2.0) * ensemble.n * species.sigma_SE)
        R_SE = math.sqrt(2.0) * ensemble.V_Rb / lam
    else:
        lam, R_SE = math.inf, 0.0
    return FluxReport(V_pu, N_pu, min(R_es, 1.0), N_exp, F_meas, lam, R_SE)
