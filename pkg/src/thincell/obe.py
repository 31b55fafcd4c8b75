"""Optical Bloch equations for a closed F_g -> F_e = F_g + 1 transition.

The 12-level Rb-87 D2 system (F_g = 2, F_e = 3) is the default. The state is
ordered ``[g_-Fg .. g_+Fg, e_-Fe .. e_+Fe]``. Hamiltonians are expressed in
angular-frequency units (H / hbar, rad/s) in the frame rotating at the laser
frequency, so only the detuning survives from the optical energies.

The master equation is

    d rho / dt = -i [H, rho] - (Gamma/2) {P_e, rho} + Gamma * R[rho_ee]

where ``R`` feeds the ground manifold from the excited block with 3-j weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .constants import C_LIGHT, HBAR, MU_B
from .domain import RB87, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble
from .errors import DomainError, IntegrityError, NumericError
from .spin import GroundStateMoments, expectation_F, spin_matrices, wigner_3j

__all__ = [
    "PulseSequence",
    "HamiltonianParts",
    "RotationResult",
    "Trajectory",
    "SequenceResult",
    "dipole_matrices",
    "build_hamiltonian",
    "repopulation_tensor",
    "repopulation_rates",
    "liouvillian",
    "evolve",
    "density_diagnostics",
    "check_density",
    "unpolarized_ground",
    "run_sequence",
    "faraday_rotation",
    "field_basis_coherences",
    "precession_frequency",
]

PHASES = ("pump", "dark", "probe")


@dataclass(frozen=True)
class PulseSequence:
    """Rectangular pump / dark / probe timing and light parameters.

    Rabi frequencies and detuning are angular (rad/s). ``polarization`` is
    the angle of the linear light polarization from the x axis.
    """

    T1: float
    T2: float
    Omega_pu: float
    Omega_pr: float
    detuning: float = 0.0
    probe_duration: float | None = None
    polarization: float = 0.0

    def __post_init__(self):
        if self.T1 < 0 or self.T2 < 0 or (self.probe_duration is not None and self.probe_duration < 0):
            raise DomainError("pulse durations must be non-negative")
        if self.Omega_pu < 0 or self.Omega_pr < 0:
            raise DomainError("Rabi frequencies must be non-negative")
        if self.Omega_pu > 0 and not self.Omega_pr < self.Omega_pu:
            raise DomainError("probe Rabi frequency must be below the pump's")

    @property
    def t_probe(self) -> float:
        return self.T1 if self.probe_duration is None else self.probe_duration

    @classmethod
    def from_geometry(cls, geometry: CellGeometry, ensemble: ThermalEnsemble,
                      Omega_pu: float = 2 * math.pi * 50e6, Omega_pr: float = 2 * math.pi * 2e6,
                      beam_diameter: float = 0.5e-3, **kw) -> "PulseSequence":
        """Times of flight at the most probable speed: through a beam, then across the gap."""
        v = ensemble.v_p
        T1 = beam_diameter / v
        T2 = max(geometry.L - beam_diameter, 0.0) / v
        return cls(T1=T1, T2=T2, Omega_pu=Omega_pu, Omega_pr=Omega_pr, **kw)


@dataclass(frozen=True, eq=False)
class HamiltonianParts:
    """Hermitian pieces of H/hbar: detuning offsets, Zeeman term, light coupling."""

    H0: np.ndarray
    HB: np.ndarray
    V: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.H0 + self.HB + self.V


@dataclass(frozen=True)
class RotationResult:
    alignment: float
    theta: float
    phi_F: float


def _dims(species: AtomSpecies):
    ng = 2 * species.F_ground + 1
    ne = 2 * species.F_excited + 1
    return ng, ne


@lru_cache(maxsize=None)
def _dipole(Fg: int, Fe: int):
    ng, ne = 2 * Fg + 1, 2 * Fe + 1
    out = {}
    for q in (-1, 0, 1):
        d = np.zeros((ne, ng))
        for i, me in enumerate(range(-Fe, Fe + 1)):
            for j, mg in enumerate(range(-Fg, Fg + 1)):
                w = wigner_3j(Fe, 1, Fg, -me, q, mg)
                if w:
                    d[i, j] = (-1) ** (Fe - me) * math.sqrt(2 * Fe + 1) * w
        d.setflags(write=False)
        out[q] = d
    return out


def dipole_matrices(species: AtomSpecies = RB87) -> dict:
    """Reduced dipole components ``d_q[e, g] = <F_e m_e | d_q | F_g m_g>``.

    Normalized so that ``sum_q d_q d_q^T`` is the excited-state identity; the
    entries equal the Clebsch-Gordan coefficients <F_g m_g; 1 q | F_e m_e>.
    """
    return _dipole(species.F_ground, species.F_excited)


def build_hamiltonian(fields: FieldConfig, pulse: PulseSequence, phase: str,
                      species: AtomSpecies = RB87) -> HamiltonianParts:
    """H/hbar for one phase of the sequence (``pump``, ``dark`` or ``probe``).

    The quantization axis z is along the beams, so ``B_parallel`` enters as a
    z field and ``B_perp`` as an x field.
    """
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}, got {phase!r}")
    ng, ne = _dims(species)
    n = ng + ne
    Sg = spin_matrices(species.F_ground)
    Se = spin_matrices(species.F_excited)
    gam_g = species.g_F * MU_B / HBAR
    gam_e = species.g_e * MU_B / HBAR
    Bz, Bx = fields.B_parallel, fields.B_perp

    H0 = np.zeros((n, n), dtype=complex)
    H0[ng:, ng:] = -pulse.detuning * np.eye(ne)
    HB = np.zeros((n, n), dtype=complex)
    HB[:ng, :ng] = gam_g * (Bz * Sg.Fz + Bx * Sg.Fx)
    HB[ng:, ng:] = gam_e * (Bz * Se.Fz + Bx * Se.Fx)

    V = np.zeros((n, n), dtype=complex)
    Omega = {"pump": pulse.Omega_pu, "probe": pulse.Omega_pr, "dark": 0.0}[phase]
    if Omega:
        d = dipole_matrices(species)
        phi = pulse.polarization
        # linear polarization at angle phi as spherical components
        c_plus = -np.exp(-1j * phi) / math.sqrt(2)
        c_minus = np.exp(1j * phi) / math.sqrt(2)
        Veg = (Omega / 2.0) * (c_plus * d[1] + c_minus * d[-1])
        V[ng:, :ng] = Veg
        V[:ng, ng:] = Veg.conj().T
    return HamiltonianParts(H0, HB, V)


@lru_cache(maxsize=None)
def _repop_tensor(Fg: int, Fe: int) -> np.ndarray:
    ng, ne = 2 * Fg + 1, 2 * Fe + 1
    R = np.zeros((ng, ng, ne, ne))
    for a, k in enumerate(range(-Fg, Fg + 1)):
        for b, kp in enumerate(range(-Fg, Fg + 1)):
            for p in (-1, 0, 1):
                for i, q in enumerate(range(-Fe, Fe + 1)):
                    w1 = wigner_3j(Fg, 1, Fe, -k, p, q)
                    if not w1:
                        continue
                    for j, qp in enumerate(range(-Fe, Fe + 1)):
                        w2 = wigner_3j(Fe, 1, Fg, -qp, -p, kp)
                        if w2:
                            R[a, b, i, j] += (-1) ** ((p - k - qp) % 2) * (2 * Fe + 1) * w1 * w2
    R.setflags(write=False)
    return R


def repopulation_tensor(species: AtomSpecies = RB87) -> np.ndarray:
    """Coefficients ``R[k, k', q, q']`` of spontaneous-emission feeding (per unit Gamma)."""
    return _repop_tensor(species.F_ground, species.F_excited)


def repopulation_rates(rho_ee: np.ndarray, Gamma_e: float | None = None,
                       species: AtomSpecies = RB87) -> np.ndarray:
    """Ground-block source term fed by decay of the excited block ``rho_ee``."""
    if Gamma_e is None:
        Gamma_e = species.Gamma_e
    R = repopulation_tensor(species)
    return Gamma_e * np.einsum("abij,ij->ab", R, np.asarray(rho_ee, dtype=complex))


def liouvillian(H: np.ndarray, Gamma_e: float, species: AtomSpecies = RB87) -> np.ndarray:
    """Superoperator acting on the row-major vectorization of rho."""
    ng, ne = _dims(species)
    n = ng + ne
    I = np.eye(n)
    Pe = np.zeros((n, n))
    Pe[ng:, ng:] = np.eye(ne)
    Lsup = -1j * (np.kron(H, I) - np.kron(I, H.T))
    if Gamma_e:
        Lsup = Lsup - 0.5 * Gamma_e * (np.kron(Pe, I) + np.kron(I, Pe))
        R = repopulation_tensor(species)
        rows = (np.arange(ng)[:, None] * n + np.arange(ng)[None, :]).ravel()
        cols = ((ng + np.arange(ne))[:, None] * n + (ng + np.arange(ne))[None, :]).ravel()
        Lsup[np.ix_(rows, cols)] += Gamma_e * R.reshape(ng * ng, ne * ne)
    return Lsup


def density_diagnostics(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity defect and smallest eigenvalue of rho."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity": herm,
        "min_eigenvalue": float(evals.min()),
    }


def check_density(rho: np.ndarray, tol: float = 1e-6) -> None:
    diag = density_diagnostics(rho)
    if diag["trace_error"] > tol or diag["hermiticity"] > tol or diag["min_eigenvalue"] < -tol:
        raise IntegrityError(f"density matrix left the physical set: {diag}")


def evolve(rho0: np.ndarray, parts: HamiltonianParts, duration: float, Gamma_e: float,
           species: AtomSpecies = RB87, t_eval=None, rtol: float = 1e-8, atol: float = 1e-12,
           method: str = "RK45"):
    """Integrate the master equation for ``duration`` seconds.

    Returns ``(rho_final, times, states)``; ``states`` has shape
    ``(len(times), n, n)`` and is only populated when ``t_eval`` is given.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[0]
    check_density(rho0)
    if duration < 0:
        raise DomainError("duration must be non-negative")
    if duration == 0:
        times = np.zeros(0) if t_eval is None else np.asarray(t_eval, dtype=float)
        states = np.repeat(rho0[None], len(times), axis=0)
        return rho0.copy(), times, states

    Lsup = liouvillian(parts.total, Gamma_e, species)

    def rhs(_t, y):
        return Lsup @ y

    sol = solve_ivp(rhs, (0.0, duration), rho0.ravel(), method=method, rtol=rtol, atol=atol,
                    t_eval=t_eval)
    if sol.status != 0:
        raise NumericError(f"master-equation integration failed: {sol.message}")
    rho = sol.y[:, -1].reshape(n, n)
    # integration error is not exactly Hermitian; keep the stored state symmetric
    rho = 0.5 * (rho + rho.conj().T)
    check_density(rho)
    if t_eval is None:
        return rho, sol.t, np.zeros((0, n, n), dtype=complex)
    states = sol.y.T.reshape(-1, n, n)
    return rho, sol.t, states


def unpolarized_ground(species: AtomSpecies = RB87) -> np.ndarray:
    ng, ne = _dims(species)
    rho = np.zeros((ng + ne, ng + ne), dtype=complex)
    rho[:ng, :ng] = np.eye(ng) / ng
    return rho


def faraday_rotation(alignment, theta, kappa: float, omega_L, L_sep: float):
    """Rotation angle ``kappa * alignment * (omega_L L / 2c) * sin(2 theta)``.

    ``kappa`` converts alignment to the index-of-refraction difference and is
    supplied by the caller.
    """
    return kappa * np.asarray(alignment) * (np.asarray(omega_L) * L_sep / (2.0 * C_LIGHT)) * np.sin(2.0 * np.asarray(theta))


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    phase: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray
    Fz: np.ndarray
    alignment: np.ndarray
    states: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SequenceResult:
    trajectory: Trajectory
    moments: dict
    rotation: RotationResult
    rho_final: np.ndarray
    omega_L: float


def run_sequence(pulse: PulseSequence, fields: FieldConfig, rho0: np.ndarray | None = None,
                 species: AtomSpecies = RB87, samples_per_phase: int = 200,
                 rtol: float = 1e-8, atol: float = 1e-12, kappa: float = 1.0,
                 L_sep: float = 4e-3, theta: float | None = None,
                 keep_states: bool = False) -> SequenceResult:
    """Pump for T1, precess in the dark for T2, then probe.

    Ground-state moments are sampled ``samples_per_phase`` times per phase.
    The rotation uses the alignment averaged over the probe window and, unless
    given, ``theta = omega_L * (T1 + T2) mod pi`` (pump centre to probe centre).
    """
    ng, _ = _dims(species)
    rho = unpolarized_ground(species) if rho0 is None else np.asarray(rho0, dtype=complex)
    durations = {"pump": pulse.T1, "dark": pulse.T2, "probe": pulse.t_probe}
    t_offset = 0.0
    ts, labels, moms, states = [], [], [], []
    worst = {"trace_error": 0.0, "hermiticity": 0.0, "min_eigenvalue": 1.0}
    phase_moments = {}
    for ph in PHASES:
        dur = durations[ph]
        parts = build_hamiltonian(fields, pulse, ph, species)
        t_eval = np.linspace(0.0, dur, samples_per_phase) if dur > 0 else None
        rho, t, st = evolve(rho, parts, dur, species.Gamma_e, species, t_eval=t_eval, rtol=rtol, atol=atol)
        for k in range(len(t)):
            s = 0.5 * (st[k] + st[k].conj().T)
            d = density_diagnostics(st[k])
            worst["trace_error"] = max(worst["trace_error"], d["trace_error"])
            worst["hermiticity"] = max(worst["hermiticity"], d["hermiticity"])
            worst["min_eigenvalue"] = min(worst["min_eigenvalue"], d["min_eigenvalue"])
            ts.append(t_offset + t[k])
            labels.append(ph)
            moms.append(expectation_F(s[:ng, :ng]))
            if keep_states:
                states.append(st[k])
        phase_moments[ph] = expectation_F(rho[:ng, :ng])
        t_offset += dur

    phase_arr = np.array(labels)
    al = np.array([m.alignment for m in moms])
    traj = Trajectory(
        t=np.array(ts),
        phase=phase_arr,
        Fx=np.array([m.Fx_exp for m in moms]),
        Fy=np.array([m.Fy_exp for m in moms]),
        Fz=np.array([m.Fz_exp for m in moms]),
        alignment=al,
        states=np.array(states) if keep_states else None,
        diagnostics=worst,
    )
    gam = species.g_F * MU_B / HBAR
    omega_L = gam * fields.B_total
    if theta is None:
        theta = (omega_L * (pulse.T1 + pulse.T2)) % math.pi
    probe = phase_arr == "probe"
    al_probe = float(al[probe].mean()) if probe.any() else phase_moments["dark"].alignment
    phi = float(faraday_rotation(al_probe, theta, kappa, omega_L, L_sep))
    return SequenceResult(traj, phase_moments, RotationResult(al_probe, theta, phi), rho, omega_L)


def field_basis_coherences(states: np.ndarray, fields: FieldConfig, species: AtomSpecies = RB87,
                           delta_m: int = 1, index: int = 0) -> np.ndarray:
    """Ground coherence <m+dm|rho|m> in the eigenbasis of the ground Zeeman term.

    ``index`` selects m counted from the lowest sublevel. In that basis the
    free evolution is a pure phase exp(-i dm omega_L t).
    """
    ng, _ = _dims(species)
    Sg = spin_matrices(species.F_ground)
    Hz = fields.B_parallel * Sg.Fz + fields.B_perp * Sg.Fx
    _, U = np.linalg.eigh(Hz)
    gg = states[:, :ng, :ng]
    rot = np.einsum("ia,tij,jb->tab", U.conj(), gg, U)
    return rot[:, index + delta_m, index]


def precession_frequency(t: np.ndarray, coherence: np.ndarray) -> float:
    """Angular frequency from a least-squares fit of the unwrapped phase."""
    phase = np.unwrap(np.angle(coherence))
    slope, _ = np.polyfit(np.asarray(t) - t[0], phase, 1)
    return float(-slope)

