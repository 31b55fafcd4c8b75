"""Least-squares fit of the lineshape model ``c1 gamma B + c2 K(B; Gamma)``.

The model is linear in (c1, c2), so the default algorithm profiles them out
(variable projection) and minimizes the profiled residual over log Gamma, and
optionally a B-axis offset, with a damped Gauss-Newton / Levenberg-Marquardt
iteration. A log-spaced scan over Gamma supplies the starting bracket. A full
three-parameter trust-region fit (scipy) is the fallback when the profiled
iteration breaks down numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .domain import RB87, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble, gyromagnetic_ratio
from .errors import DegenerateFitError, ValidationError
from .lineshape import LineshapeParams, Spectrum, kernel_values

__all__ = ["FitProblem", "FitResult", "separable_linear_solve", "fit_lineshape", "model_values"]

# condition-number ceiling for the column-normalized 2x2 normal matrix
_COLLINEAR_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Data plus the fixed physical model it is fitted against.

    ``Gamma_init`` of None requests the log-grid scan over ``Gamma_bounds``.
    Per-point ``data.stderr`` switches to weighted least squares.
    """

    data: Spectrum
    geometry: CellGeometry
    ensemble: ThermalEnsemble
    B_perp: float = 0.0
    species: AtomSpecies = RB87
    fit_offset: bool = False
    Gamma_init: float | None = None
    B_offset_init: float = 0.0
    Gamma_bounds: tuple[float, float] = (1e1, 1e7)
    n_scan: int = 25
    max_iter: int = 100
    xtol: float = 1e-10
    gtol: float = 1e-12
    kernel_tol: float = 1e-10
    strategy: str = "speed-average"
    threads: int | None = None

    def __post_init__(self):
        n_free = 3 + int(self.fit_offset)
        if len(self.data) < n_free + 3:
            raise ValidationError(
                f"need at least {n_free + 3} data points for {n_free} free parameters, got {len(self.data)}"
            )
        lo, hi = self.Gamma_bounds
        if not (0 < lo < hi):
            raise ValidationError(f"Gamma_bounds must satisfy 0 < lo < hi, got {self.Gamma_bounds!r}")
        if self.data.stderr is not None and np.any(self.data.stderr <= 0):
            raise ValidationError("weights need strictly positive stderr")

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("c1", "c2", "Gamma_coh") + (("B_offset",) if self.fit_offset else ())


@dataclass(frozen=True, eq=False)
class FitResult:
    estimates: dict
    stderr: dict
    residual_norm: float
    initial_residual_norm: float
    converged: bool
    iterations: int
    gamma_identifiable: bool = True
    method: str = "varpro"
    message: str = ""
    residuals: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "estimates": dict(self.estimates),
            "stderr": dict(self.stderr),
            "residual_norm": self.residual_norm,
            "initial_residual_norm": self.initial_residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "gamma_identifiable": self.gamma_identifiable,
            "method": self.method,
            "message": self.message,
        }


def separable_linear_solve(data, K_values, omega_values, weights=None):
    """Least-squares (c1, c2) for ``data ~ c1 omega + c2 K`` at fixed kernel.

    Columns are scaled to unit norm before the 2x2 normal equations are solved,
    so the collinearity test is independent of their physical units.
    """
    y = np.asarray(data, dtype=float)
    a = np.asarray(omega_values, dtype=float)
    b = np.asarray(K_values, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        y, a, b = y * w, a * w, b * w
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateFitError("a basis column is identically zero")
    an, bn = a / na, b / nb
    cross = float(an @ bn)
    det = 1.0 - cross * cross
    if det < _COLLINEAR_RCOND:
        raise DegenerateFitError(f"kernel and linear baseline are collinear on this grid (|cos| = {abs(cross):.15f})")
    ra, rb = float(an @ y), float(bn @ y)
    c1n = (ra - cross * rb) / det
    c2n = (rb - cross * ra) / det
    return c1n / na, c2n / nb


def model_values(B, c1, c2, Gamma, geometry, ensemble, B_perp=0.0, B_offset=0.0, species=RB87,
                 strategy="speed-average", tol=1e-10, threads=None):
    """Forward model on grid ``B`` (the offset shifts the field axis)."""
    Bs = np.asarray(B, dtype=float) - B_offset
    params = LineshapeParams(geometry, ensemble, FieldConfig(B_perp=B_perp, Gamma_coh=Gamma),
                             species, strategy, tol=tol)
    return c1 * gyromagnetic_ratio(species) * Bs + c2 * kernel_values(Bs, params, threads)


class _Profile:
    """Profiled residual as a function of theta = (log Gamma[, B_offset])."""

    def __init__(self, pb: FitProblem):
        self.pb = pb
        self.y = pb.data.values
        self.B = pb.data.B
        self.w = None if pb.data.stderr is None else 1.0 / pb.data.stderr
        self.gamma = gyromagnetic_ratio(pb.species)
        self.n_eval = 0

    def kernel(self, Gamma, B0):
        pb = self.pb
        params = LineshapeParams(pb.geometry, pb.ensemble, FieldConfig(B_perp=pb.B_perp, Gamma_coh=Gamma),
                                 pb.species, pb.strategy, tol=pb.kernel_tol)
        self.n_eval += 1
        return kernel_values(self.B - B0, params, pb.threads)

    def unpack(self, theta):
        return math.exp(theta[0]), (theta[1] if self.pb.fit_offset else 0.0)

    def solve(self, theta):
        Gamma, B0 = self.unpack(theta)
        K = self.kernel(Gamma, B0)
        om = self.gamma * (self.B - B0)
        c1, c2 = separable_linear_solve(self.y, K, om, self.w)
        r = self.y - c1 * om - c2 * K
        if self.w is not None:
            r = r * self.w
        return r, c1, c2, K, om

    def residual(self, theta):
        return self.solve(theta)[0]


def _fd_steps(pb: FitProblem, scale_B: float):
    # balance truncation (h^2) against kernel noise (tol/h)
    h_log = max(1e-5, pb.kernel_tol ** (1.0 / 3.0))
    steps = [h_log]
    if pb.fit_offset:
        steps.append(h_log * scale_B)
    return np.array(steps)


def _jacobian(fun, theta, steps):
    cols = []
    for k, h in enumerate(steps):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        cols.append((fun(tp) - fun(tm)) / (2 * h))
    return np.column_stack(cols)


def _varpro(pb: FitProblem, prof: _Profile, theta0: np.ndarray, steps: np.ndarray):
    theta = theta0.copy()
    r = prof.residual(theta)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    message = "maximum iterations exceeded"
    it = 0
    for it in range(1, pb.max_iter + 1):
        J = _jacobian(prof.residual, theta, steps)
        g = J.T @ r
        if np.linalg.norm(g) < pb.gtol * max(1.0, cost):
            converged, message = True, "gradient norm below tolerance"
            break
        A = J.T @ J
        accepted = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-300), -g)
            cand = theta + step
            r_new = prof.residual(cand)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                theta, r, lam = cand, r_new, max(lam / 10.0, 1e-12)
                accepted = True
                small = np.all(np.abs(step) <= pb.xtol * np.maximum(1.0, np.abs(theta)) * _units(pb, steps))
                cost = cost_new
                break
            lam *= 10.0
            if np.all(np.abs(step) <= pb.xtol * np.maximum(1.0, np.abs(theta)) * _units(pb, steps)):
                break
        if not accepted:
            converged, message = True, "no further decrease within step tolerance"
            break
        if small:
            converged, message = True, "relative step below tolerance"
            break
    return theta, r, converged, it, message


def _units(pb, steps):
    # offset is in tesla: compare its step to the field scale, not to 1
    u = np.ones(len(steps))
    if pb.fit_offset:
        u[1] = steps[1] / steps[0]
    return u


def _covariance(prof: _Profile, theta, c1, c2, r):
    """Full-parameter covariance from the Jacobian normal matrix."""
    pb = prof.pb
    Gamma, B0 = prof.unpack(theta)
    K = prof.kernel(Gamma, B0)
    om = prof.gamma * (prof.B - B0)
    h = max(1e-5, pb.kernel_tol ** (1.0 / 3.0))
    dK_dlogG = (prof.kernel(Gamma * math.exp(h), B0) - prof.kernel(Gamma * math.exp(-h), B0)) / (2 * h)
    cols = [om, K, c2 * dK_dlogG / Gamma]
    if pb.fit_offset:
        hB = h * _field_scale(pb)
        dK_dB0 = (prof.kernel(Gamma, B0 + hB) - prof.kernel(Gamma, B0 - hB)) / (2 * hB)
        cols.append(-c1 * prof.gamma + c2 * dK_dB0)
    J = np.column_stack(cols)
    if prof.w is not None:
        J = J * prof.w[:, None]
    dof = max(1, J.shape[0] - J.shape[1])
    s2 = 1.0 if prof.w is not None else float(r @ r) / dof
    JTJ = J.T @ J
    try:
        cov = s2 * np.linalg.inv(JTJ)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(J.shape[1], np.inf)
    return se


def _field_scale(pb: FitProblem) -> float:
    return pb.ensemble.u / (gyromagnetic_ratio(pb.species) * pb.geometry.L)


def _fallback_trf(pb: FitProblem, prof: _Profile, theta0):
    gamma = prof.gamma

    def resid(p):
        c1, c2, logG = p[0], p[1], p[2]
        B0 = p[3] if pb.fit_offset else 0.0
        K = prof.kernel(math.exp(logG), B0)
        r = prof.y - c1 * gamma * (prof.B - B0) - c2 * K
        return r if prof.w is None else r * prof.w

    r0, c1, c2, _, _ = prof.solve(theta0)
    p0 = [c1, c2, theta0[0]] + ([theta0[1]] if pb.fit_offset else [])
    sol = optimize.least_squares(resid, p0, method="trf", xtol=pb.xtol, gtol=pb.gtol, max_nfev=50 * pb.max_iter)
    theta = np.array([sol.x[2]] + ([sol.x[3]] if pb.fit_offset else []))
    return theta, sol


def fit_lineshape(problem: FitProblem) -> FitResult:
    """Fit (c1, c2, Gamma_coh[, B_offset]) to ``problem.data``."""
    pb = problem
    prof = _Profile(pb)
    scale_B = _field_scale(pb)
    steps = _fd_steps(pb, scale_B)
    names = pb.param_names
    y_w = prof.y if prof.w is None else prof.y * prof.w

    # starting point: log-grid scan over Gamma (offset held at its initial value)
    if pb.Gamma_init is not None:
        if not pb.Gamma_init > 0:
            raise ValidationError("Gamma_init must be positive")
        theta0 = np.array([math.log(pb.Gamma_init)] + ([pb.B_offset_init] if pb.fit_offset else []))
    else:
        lo, hi = pb.Gamma_bounds
        grid = np.geomspace(lo, hi, pb.n_scan)
        costs = []
        for G in grid:
            th = np.array([math.log(G)] + ([pb.B_offset_init] if pb.fit_offset else []))
            r = prof.residual(th)
            costs.append(float(r @ r))
        theta0 = np.array([math.log(grid[int(np.argmin(costs))])] + ([pb.B_offset_init] if pb.fit_offset else []))
    r_init, c1_0, c2_0, _, _ = prof.solve(theta0)
    init_norm = float(np.linalg.norm(r_init))

    # null / flat profile: Gamma has no handle on the data
    data_norm = float(np.linalg.norm(y_w))
    J0 = _jacobian(prof.residual, theta0, steps[:1].copy() if not pb.fit_offset else steps)
    if data_norm == 0.0 or np.linalg.norm(J0[:, 0]) <= 1e-12 * max(data_norm, 1e-300):
        Gamma, B0 = prof.unpack(theta0)
        est = {"c1": float(c1_0), "c2": float(c2_0), "Gamma_coh": float(Gamma)}
        se = {"c1": math.nan, "c2": math.nan, "Gamma_coh": math.inf}
        if pb.fit_offset:
            est["B_offset"], se["B_offset"] = B0, math.inf
        return FitResult(est, se, init_norm, init_norm, True, 0, gamma_identifiable=False,
                         message="profiled objective is flat in Gamma", residuals=r_init)

    method = "varpro"
    try:
        theta, r, converged, iters, message = _varpro(pb, prof, theta0, steps)
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError("non-finite iterate")
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        theta, sol = _fallback_trf(pb, prof, theta0)
        converged, iters, message, method = bool(sol.success), int(sol.nfev), f"fallback after {exc}: {sol.message}", "trf"

    r, c1, c2, _, _ = prof.solve(theta)
    Gamma, B0 = prof.unpack(theta)
    se_vec = _covariance(prof, theta, c1, c2, r)
    est = {"c1": float(c1), "c2": float(c2), "Gamma_coh": float(Gamma)}
    if pb.fit_offset:
        est["B_offset"] = float(B0)
    se = dict(zip(names, map(float, se_vec)))
    return FitResult(est, se, float(np.linalg.norm(r)), init_norm, converged, iters,
                     gamma_identifiable=bool(np.isfinite(se["Gamma_coh"])), method=method,
                     message=message, residuals=r)
