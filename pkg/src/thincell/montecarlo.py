"""Ballistic Monte Carlo for pump-to-probe transport in a thin cell.

Atoms start uniformly in the annular pump volume, fly in straight lines, die at
the first wall contact and count when their in-plane path enters the probe
disc. The accumulated transit times give a stochastic estimate of the Ramsey
kernel that is independent of the analytic reduction.

Random numbers are keyed by (seed, sample index): sample ``i`` always consumes
the eight 64-bit Philox words at counter ``2 i`` under key ``seed``. Any batch
decomposition, and any number of worker threads, therefore sees the same
numbers for the same atom, and results are reduced in sample order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .domain import RB87, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble
from .errors import StatisticsError, ValidationError
from .kinetics import marginal_shape
from .lineshape import Spectrum, kernel_omega

__all__ = [
    "VELOCITY_MODES",
    "CounterRNG",
    "McConfig",
    "Histogram",
    "McResult",
    "sample_initial",
    "transit",
    "run_transport",
    "mc_lineshape",
    "marginal_chi_square",
]

# "physical": isotropic 3D Maxwell-Boltzmann, each component N(0, kT/m).
# "planar": the kinetic model's ensemble -- in-plane speed with density
#   proportional to exp(-v^2/u^2) and v_z ~ N(0, u^2/2). Once the wall filter
#   selects near-planar flights, arrivals follow the planar Maxwellian
#   (2 v/u^2) exp(-v^2/u^2) that the analytic kernel assumes.
VELOCITY_MODES = ("physical", "planar")
WORDS_PER_SAMPLE = 8
_TO_UNIT = 2.0**-53


class CounterRNG:
    """Uniform variates addressed by (seed, sample index)."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        self.seed = seed

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """(count, 8) array of doubles in [0, 1) for samples start..start+count-1."""
        bg = np.random.Philox(key=self.seed, counter=2 * int(start))
        raw = bg.random_raw(WORDS_PER_SAMPLE * int(count)).reshape(count, WORDS_PER_SAMPLE)
        return (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT


@dataclass(frozen=True)
class McConfig:
    geometry: CellGeometry
    ensemble: ThermalEnsemble
    n_samples: int = 10_000_000
    seed: int = 0
    batch_size: int = 1_000_000
    velocity_mode: str = "planar"
    species: AtomSpecies = RB87
    n_bins: int = 40

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValidationError(f"n_samples must be positive, got {self.n_samples!r}")
        if self.batch_size <= 0:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size!r}")
        if self.velocity_mode not in VELOCITY_MODES:
            raise ValidationError(f"velocity_mode must be one of {VELOCITY_MODES}, got {self.velocity_mode!r}")
        if self.n_bins < 1:
            raise ValidationError("n_bins must be at least 1")
        CounterRNG(self.seed)


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True, eq=False)
class McResult:
    n_samples: int
    n_arrivals: int
    arrival_fraction: float
    arrival_fraction_stderr: float
    transit_time_histogram: Histogram
    v_parallel_histogram: Histogram
    spectrum_estimate: Spectrum | None
    transit_times: np.ndarray = field(repr=False)
    v_parallel: np.ndarray = field(repr=False)
    seed: int = 0


def _normals(u1, u2):
    # Box-Muller; 1 - u1 lies in (0, 1] so the log is finite
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2)


def sample_initial(rng: CounterRNG, geometry: CellGeometry, ensemble: ThermalEnsemble,
                   start: int = 0, count: int = 1, velocity_mode: str = "physical",
                   species: AtomSpecies = RB87):
    """Start positions (count, 3) and velocities (count, 3) for a run of samples.

    Positions are uniform in the annulus L <= r <= L + w_pu, 0 <= z <= W, with
    the cell axis at the origin. Velocity components are in m/s.
    """
    U = rng.uniforms(start, count)
    L, w, W = geometry.L, geometry.w_pu, geometry.W
    r = np.sqrt(L * L + U[:, 0] * ((L + w) ** 2 - L * L))
    phi = 2 * math.pi * U[:, 1]
    pos = np.column_stack([r * np.cos(phi), r * np.sin(phi), W * U[:, 2]])

    if velocity_mode == "physical":
        sigma = ensemble.u  # sqrt(kT/m)
        n1, n2 = _normals(U[:, 3], U[:, 4])
        n3, _ = _normals(U[:, 5], U[:, 6])
        vel = sigma * np.column_stack([n1, n2, n3])
    elif velocity_mode == "planar":
        s = ensemble.u / math.sqrt(2.0)
        n1, n2 = _normals(U[:, 3], U[:, 4])
        speed = s * np.abs(n1)
        psi = 2 * math.pi * U[:, 5]
        vel = np.column_stack([speed * np.cos(psi), speed * np.sin(psi), s * n2])
    else:
        raise ValidationError(f"unknown velocity mode {velocity_mode!r}")
    return pos, vel


def transit(position, velocity, geometry: CellGeometry):
    """Straight-line flight to the probe disc or a wall.

    Returns ``(arrived, t)`` arrays; ``t`` is the time at which the in-plane
    path first enters the disc of radius R_pr (NaN for wall deaths and misses).
    Accepts a single state or stacked (n, 3) arrays.
    """
    p = np.atleast_2d(np.asarray(position, dtype=float))
    v = np.atleast_2d(np.asarray(velocity, dtype=float))
    vpl2 = v[:, 0] ** 2 + v[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        # in-plane ray x(t) = p + v t; solve |x|^2 = R^2 in t
        b = (p[:, 0] * v[:, 0] + p[:, 1] * v[:, 1]) / vpl2
        c = (p[:, 0] ** 2 + p[:, 1] ** 2 - geometry.R_pr**2) / vpl2
        disc = b * b - c
        t = -b - np.sqrt(disc)
    hits = (vpl2 > 0) & (disc >= 0) & (t > 0)
    z_end = p[:, 2] + v[:, 2] * np.where(hits, t, 0.0)
    alive = (z_end >= 0.0) & (z_end <= geometry.W)
    arrived = hits & alive
    t = np.where(arrived, t, np.nan)
    if np.ndim(position) == 1:
        return bool(arrived[0]), float(t[0])
    return arrived, t


def _batch(mc: McConfig, rng: CounterRNG, start: int, count: int):
    pos, vel = sample_initial(rng, mc.geometry, mc.ensemble, start, count, mc.velocity_mode, mc.species)
    arrived, t = transit(pos, vel, mc.geometry)
    return t[arrived], vel[arrived, 2]


def run_transport(mc: McConfig, threads: int | None = None):
    """Transit times and v_parallel of all arriving atoms, in sample order."""
    rng = CounterRNG(mc.seed)
    starts = list(range(0, mc.n_samples, mc.batch_size))
    counts = [min(mc.batch_size, mc.n_samples - s) for s in starts]
    if threads is not None and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda sc: _batch(mc, rng, *sc), zip(starts, counts)))
    else:
        parts = [_batch(mc, rng, s, c) for s, c in zip(starts, counts)]
    t = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    vz = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    return t, vz


def _histogram(x, n_bins, lo=None, hi=None):
    if x.size == 0:
        edges = np.linspace(0.0, 1.0, n_bins + 1)
        return Histogram(edges, np.zeros(n_bins, dtype=np.int64))
    lo = float(np.min(x)) if lo is None else lo
    hi = float(np.max(x)) if hi is None else hi
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64))


def mc_lineshape(B_grid, mc: McConfig, fields: FieldConfig = FieldConfig(), threads: int | None = None) -> McResult:
    """Monte Carlo estimate of the Ramsey kernel, mean +- stderr per grid point.

    Pass ``B_grid=None`` to collect transport statistics only.
    """
    t, vz = run_transport(mc, threads)
    n_arr = t.size
    if n_arr == 0:
        raise StatisticsError(
            f"no atoms reached the probe out of {mc.n_samples} samples; increase n_samples"
        )
    p = n_arr / mc.n_samples
    p_err = math.sqrt(p * (1.0 - p) / mc.n_samples) if mc.n_samples > 1 else math.inf

    spectrum = None
    if B_grid is not None:
        B_grid = np.asarray(B_grid, dtype=float)
        mean = np.empty(B_grid.size)
        err = np.empty(B_grid.size)
        damp = np.exp(-fields.Gamma_coh * t)
        for i, B in enumerate(B_grid):
            w = kernel_omega(B, fields.B_perp, mc.species)
            y = np.sin(2.0 * w * t) * damp
            mean[i] = y.mean()
            err[i] = y.std(ddof=1) / math.sqrt(n_arr) if n_arr > 1 else math.inf
        meta = {
            "component": "nonlinear",
            "strategy": "montecarlo",
            "seed": mc.seed,
            "n_samples": mc.n_samples,
            "velocity_mode": mc.velocity_mode,
            "W": mc.geometry.W,
            "L": mc.geometry.L,
            "B_perp": fields.B_perp,
            "Gamma_coh": fields.Gamma_coh,
        }
        spectrum = Spectrum(B_grid, mean, err, meta)

    vmax = mc.geometry.W / mc.geometry.L * mc.ensemble.u * 4.0
    return McResult(
        n_samples=mc.n_samples,
        n_arrivals=n_arr,
        arrival_fraction=p,
        arrival_fraction_stderr=p_err,
        transit_time_histogram=_histogram(t, mc.n_bins, 0.0),
        v_parallel_histogram=_histogram(vz, mc.n_bins, -vmax, vmax),
        spectrum_estimate=spectrum,
        transit_times=t,
        v_parallel=vz,
        seed=mc.seed,
    )


def marginal_chi_square(result: McResult, geometry: CellGeometry, ensemble: ThermalEnsemble,
                        n_bins: int = 12, min_expected: float = 5.0):
    """Pearson chi-square of arrival |v_parallel| against the analytic marginal.

    Bins are equiprobable under the model (so every expected count is equal),
    with the count reduced until each bin expects at least ``min_expected``.
    Returns ``(statistic, p_value, n_bins_used)``.
    """
    x = np.abs(result.v_parallel)
    n = x.size
    k = max(2, min(n_bins, int(n // min_expected)))
    if n < 2 * min_expected:
        raise StatisticsError(f"only {n} arrivals; too few for a chi-square test")
    # cdf of |eta| under the normalized shape: 4 sqrt(pi) int_0^eta g
    def cdf(e):
        val, _ = integrate.quad(marginal_shape, 0.0, e, epsabs=0, epsrel=1e-12, limit=200)
        return 4.0 * math.sqrt(math.pi) * val

    targets = np.arange(1, k) / k
    eta_edges = [optimize.brentq(lambda e, q=q: cdf(e) - q, 0.0, 20.0, xtol=1e-14) for q in targets]
    scale = geometry.W * ensemble.u / geometry.L
    v_edges = np.concatenate([[0.0], np.array(eta_edges) * scale, [np.inf]])
    observed, _ = np.histogram(x, bins=v_edges)
    expected = np.full(k, n / k)
    stat, pval = stats.chisquare(observed, expected)
    return float(stat), float(pval), k
