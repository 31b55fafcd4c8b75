import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thincell.domain import RB87, gyromagnetic_ratio
from thincell.errors import DegenerateFitError, ValidationError
from thincell.fit import FitProblem, FitResult, fit_lineshape, model_values, separable_linear_solve
from thincell.lineshape import Spectrum, auto_grid, natural_field_scale

GAMMA = gyromagnetic_ratio(RB87)
TRUE = {"c1": 0.3, "c2": 1.5, "Gamma_coh": 2.0e4}


@pytest.fixture(scope="module")
def grid(cell5, ensemble):
    return auto_grid(cell5, ensemble, span=4.0, n_points=61)


@pytest.fixture(scope="module")
def clean(grid, cell5, ensemble):
    return model_values(grid, TRUE["c1"], TRUE["c2"], TRUE["Gamma_coh"], cell5, ensemble)


@pytest.fixture(scope="module")
def kernel_at_truth(grid, cell5, ensemble):
    return model_values(grid, 0.0, 1.0, TRUE["Gamma_coh"], cell5, ensemble)


# --- separable linear step -------------------------------------------------

def test_separable_pure_linear(grid, kernel_at_truth):
    omega = GAMMA * grid
    c1, c2 = separable_linear_solve(3.0 * omega, kernel_at_truth, omega)
    assert c1 == pytest.approx(3.0, rel=1e-12)
    # the spurious kernel contribution is at round-off relative to the data
    assert abs(c2) * np.abs(kernel_at_truth).max() < 1e-12 * np.abs(3.0 * omega).max()


def test_separable_pure_kernel(grid, kernel_at_truth):
    c1, c2 = separable_linear_solve(kernel_at_truth, kernel_at_truth, GAMMA * grid)
    assert c2 == pytest.approx(1.0, rel=1e-12)
    assert abs(c1 * GAMMA * grid).max() < 1e-12


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=30)
def test_separable_recovers_random_mix(grid, kernel_at_truth, a, b):
    omega = GAMMA * grid
    c1, c2 = separable_linear_solve(a * omega + b * kernel_at_truth, kernel_at_truth, omega)
    scale = max(abs(a), abs(b), 1.0)
    assert abs(c1 - a) <= 1e-10 * scale
    assert abs(c2 - b) <= 1e-10 * scale


def test_separable_weights_do_not_bias_exact_data(grid, kernel_at_truth, rng):
    omega = GAMMA * grid
    w = rng.uniform(0.2, 5.0, grid.size)
    c1, c2 = separable_linear_solve(2.0 * omega - 0.5 * kernel_at_truth, kernel_at_truth, omega, w)
    assert c1 == pytest.approx(2.0, rel=1e-11)
    assert c2 == pytest.approx(-0.5, rel=1e-11)


def test_separable_collinear_raises(grid):
    omega = GAMMA * grid
    with pytest.raises(DegenerateFitError, match="collinear"):
        separable_linear_solve(omega, 2.0 * omega, omega)


def test_separable_zero_column_raises(grid, kernel_at_truth):
    with pytest.raises(DegenerateFitError, match="zero"):
        separable_linear_solve(kernel_at_truth, np.zeros_like(grid), GAMMA * grid)


# --- nonlinear fit -------------------------------------------------------

def _problem(grid, values, cell, ens, **kw):
    return FitProblem(Spectrum(grid, values), cell, ens, **kw)


def test_noiseless_recovery(grid, clean, cell5, ensemble):
    res = fit_lineshape(_problem(grid, clean, cell5, ensemble))
    assert isinstance(res, FitResult) and res.converged and res.gamma_identifiable
    for k, v in TRUE.items():
        assert res.estimates[k] == pytest.approx(v, rel=1e-6), k
        assert type(res.estimates[k]) is float
    assert res.residual_norm <= res.initial_residual_norm
    assert res.residual_norm < 1e-9 * np.linalg.norm(clean)
    # converged noiseless residuals sit below ten times the kernel quadrature tolerance
    assert np.max(np.abs(res.residuals)) < 10 * 1e-10


def test_amplitude_rescaling_invariance(grid, clean, cell5, ensemble):
    a = fit_lineshape(_problem(grid, clean, cell5, ensemble))
    b = fit_lineshape(_problem(grid, 7.0 * clean, cell5, ensemble))
    assert b.estimates["c1"] == pytest.approx(7.0 * a.estimates["c1"], rel=1e-8)
    assert b.estimates["c2"] == pytest.approx(7.0 * a.estimates["c2"], rel=1e-8)
    assert b.estimates["Gamma_coh"] == pytest.approx(a.estimates["Gamma_coh"], rel=1e-8)


def test_zero_data_flags_unidentifiable_gamma(grid, cell5, ensemble):
    res = fit_lineshape(_problem(grid, np.zeros_like(grid), cell5, ensemble))
    assert res.estimates["c1"] == 0.0 and res.estimates["c2"] == 0.0
    assert not res.gamma_identifiable
    assert math.isinf(res.stderr["Gamma_coh"])


def test_iteration_cap_reports_nonconvergence(grid, clean, cell5, ensemble):
    res = fit_lineshape(_problem(grid, clean, cell5, ensemble, Gamma_init=1e6, max_iter=1))
    assert not res.converged
    assert res.iterations <= 1
    assert res.residual_norm <= res.initial_residual_norm


def test_weighted_fit_is_consistent(grid, clean, cell5, ensemble, rng):
    sigma = np.full(grid.size, 0.01 * np.abs(clean).max())
    noisy = clean + sigma * rng.standard_normal(grid.size)
    res = fit_lineshape(FitProblem(Spectrum(grid, noisy, sigma), cell5, ensemble))
    assert res.converged
    for k, v in TRUE.items():
        se = res.stderr[k]
        assert 0 < se < math.inf
        assert abs(res.estimates[k] - v) < 5 * se, k
    # chi-square per degree of freedom near one for correctly scaled weights
    dof = grid.size - 3
    assert 0.5 < res.residual_norm**2 / dof < 1.6


def test_offset_recovery(grid, cell5, ensemble):
    b0 = 0.05 * natural_field_scale(cell5, ensemble)
    data = model_values(grid, TRUE["c1"], TRUE["c2"], TRUE["Gamma_coh"], cell5, ensemble, B_offset=b0)
    res = fit_lineshape(_problem(grid, data, cell5, ensemble, fit_offset=True))
    assert res.converged
    assert res.estimates["B_offset"] == pytest.approx(b0, rel=1e-6)
    assert res.estimates["Gamma_coh"] == pytest.approx(TRUE["Gamma_coh"], rel=1e-6)
    assert set(res.to_dict()["estimates"]) == {"c1", "c2", "Gamma_coh", "B_offset"}


def test_to_dict_is_plain(grid, clean, cell5, ensemble):
    d = fit_lineshape(_problem(grid, clean, cell5, ensemble)).to_dict()
    assert set(d) >= {"estimates", "stderr", "converged", "iterations", "gamma_identifiable"}
    assert "residuals" not in d


@pytest.mark.parametrize("n, offset", [(5, False), (6, True)])
def test_too_few_points(cell5, ensemble, n, offset):
    B = np.linspace(-1e-6, 1e-6, n)
    with pytest.raises(ValidationError, match="at least"):
        FitProblem(Spectrum(B, np.ones(n)), cell5, ensemble, fit_offset=offset)


def test_nonpositive_stderr_rejected(cell5, ensemble):
    B = np.linspace(-1e-6, 1e-6, 10)
    err = np.ones(10)
    err[3] = 0.0
    with pytest.raises(ValidationError, match="stderr"):
        FitProblem(Spectrum(B, np.ones(10), err), cell5, ensemble)


@pytest.mark.parametrize("bounds", [(0.0, 1e3), (1e4, 1e3)])
def test_bad_bounds_rejected(cell5, ensemble, bounds):
    B = np.linspace(-1e-6, 1e-6, 10)
    with pytest.raises(ValidationError, match="Gamma_bounds"):
        FitProblem(Spectrum(B, np.ones(10)), cell5, ensemble, Gamma_bounds=bounds)


def test_input_spectrum_not_mutated(grid, clean, cell5, ensemble):
    spec = Spectrum(grid, clean.copy())
    before = spec.values.copy()
    fit_lineshape(FitProblem(spec, cell5, ensemble))
    np.testing.assert_array_equal(spec.values, before)
