import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from thincell.domain import RB87, CellGeometry, derive_thermal, replace
from thincell.kinetics import (
    AngularDistribution,
    angular_density,
    angular_norm,
    eta,
    flux_report,
    longitudinal_marginal,
    longitudinal_marginal_numeric,
    marginal_shape,
    mass_fraction_below,
    maxwell_speed_density,
)


@pytest.mark.parametrize("W", [5e-6, 30e-6])
def test_linearized_acceptance_normalizes_to_N(W):
    g = CellGeometry(W=W, L=4e-3)
    A = angular_norm(g, N_pu=3.0)
    val, _ = integrate.quad(lambda a: angular_density(a, g, linearized=True, A=A), -g.alpha_max * 1.01,
                            g.alpha_max * 1.01, points=[-W / g.L, 0.0, W / g.L], epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(3.0, rel=1e-10)


def test_acceptance_forms_agree_at_small_angle(cell5):
    a = np.linspace(0, 0.9 * cell5.alpha_max, 50)
    exact = angular_density(a, cell5)
    lin = angular_density(a, cell5, linearized=True)
    # tan(a) - a = a^3/3: relative gap of order (W/L)^2
    np.testing.assert_allclose(exact, lin, rtol=1e-5, atol=1e-12 * lin.max())
    assert angular_density(2 * cell5.alpha_max, cell5) == 0.0
    assert angular_density(-0.5 * cell5.alpha_max, cell5) == angular_density(0.5 * cell5.alpha_max, cell5)


def test_angular_distribution_wrapper(cell5):
    d = AngularDistribution.for_geometry(cell5, N_pu=2.0)
    assert d(0.0) == pytest.approx(2.0 * cell5.L / cell5.W**2 * cell5.W)


def test_speed_density_normalization(ensemble):
    val, _ = integrate.quad(lambda v: maxwell_speed_density(v, ensemble), 0, 40 * ensemble.u, epsrel=1e-12)
    assert val == pytest.approx(1.0, rel=1e-10)
    raw, _ = integrate.quad(lambda v: maxwell_speed_density(v, ensemble, normalized=False), 0, 40 * ensemble.u)
    assert raw == pytest.approx(1 / (2 * math.sqrt(math.pi)), rel=1e-10)
    assert maxwell_speed_density(-1.0, ensemble) == 0.0


def test_marginal_shape_endpoints():
    assert marginal_shape(0.0) == pytest.approx(1 / math.pi)
    # the bracket cancels to O(1/x^2) at large eta; erfcx keeps it non-negative
    big = marginal_shape(np.array([10.0, 30.0, 1e3]))
    assert np.all(big >= 0) and np.all(big < 1e-40)


@given(st.floats(0.0, 6.0), st.floats(0.0, 6.0))
def test_marginal_shape_monotone(x1, x2):
    lo, hi = sorted((x1, x2))
    assert marginal_shape(hi) <= marginal_shape(lo) + 1e-16


@pytest.mark.parametrize("W", [5e-6, 30e-6])
def test_marginal_is_normalized(W, ensemble):
    g = CellGeometry(W=W, L=4e-3)
    scale = W * ensemble.u / g.L
    val, _ = integrate.quad(lambda v: longitudinal_marginal(v, g, ensemble), 0, 30 * scale, epsabs=0, epsrel=1e-12,
                            limit=200)
    assert 2 * val == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("W", [5e-6, 30e-6])
@pytest.mark.parametrize("normalized", [True, False])
def test_closed_form_matches_quadrature(W, normalized, ensemble):
    g = CellGeometry(W=W, L=4e-3)
    v = np.linspace(0, 4, 41) * W * ensemble.u / g.L
    cf = longitudinal_marginal(v, g, ensemble, normalized=normalized)
    num = longitudinal_marginal_numeric(v, g, ensemble, normalized=normalized)
    assert np.max(np.abs(cf - num)) / np.max(np.abs(num)) < 1e-8


def test_marginal_even_in_v(cell5, ensemble):
    v = np.linspace(0.1, 5, 7)
    np.testing.assert_allclose(longitudinal_marginal(v, cell5, ensemble), longitudinal_marginal(-v, cell5, ensemble))


def test_eta_definition(cell5, ensemble):
    assert eta(2.0, cell5, ensemble) == pytest.approx(cell5.L * 2.0 / (cell5.W * ensemble.u))


def test_mass_fraction_limits(cell5, ensemble):
    assert mass_fraction_below(0.0, cell5, ensemble) == 0.0
    assert mass_fraction_below(1e3, cell5, ensemble) == pytest.approx(1.0, abs=1e-12)
    f1 = mass_fraction_below(0.05, cell5, ensemble)
    f2 = mass_fraction_below(0.1, cell5, ensemble)
    assert 0 < f1 < f2 < 1


def test_flux_report_5um(cell5, ensemble):
    r = flux_report(cell5, ensemble)
    assert r.V_pu == pytest.approx(2 * math.pi * 4e-3 * 0.5e-3 * 5e-6)
    assert r.N_pu == pytest.approx(2e19 * r.V_pu)
    assert r.R_es == pytest.approx(0.5e-3 * 5e-6 / (2 * math.pi * 16e-6))
    assert r.F_meas == pytest.approx(r.N_exp * ensemble.v_p / 4e-3)
    assert r.to_dict()["N_pu"] == r.N_pu


def test_spin_exchange_scales_with_density(cell5):
    lo = flux_report(cell5, derive_thermal(393.15, 1e19))
    hi = flux_report(cell5, derive_thermal(393.15, 4e19))
    assert hi.lambda_SE == pytest.approx(lo.lambda_SE / 4)
    assert hi.R_SE == pytest.approx(4 * lo.R_SE)


def test_zero_cross_section(cell5, ensemble):
    r = flux_report(cell5, ensemble, replace(RB87, sigma_SE=0.0))
    assert math.isinf(r.lambda_SE) and r.R_SE == 0.0


def test_escape_fraction_capped():
    g = CellGeometry(W=90e-6, L=1e-3, R_pr=0.5)
    assert flux_report(g, derive_thermal(300, 1e18)).R_es == 1.0
