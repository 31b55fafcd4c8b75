import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sympy.physics.wigner import wigner_3j as sympy_3j

from thincell.errors import DomainError, ValidationError
from thincell.spin import alignment, expectation_F, ladder_coefficient, spin_matrices, wigner_3j

SPINS = [0.5, 1, 1.5, 2, 3]


@pytest.mark.parametrize("F", SPINS)
def test_commutation_relations(F):
    S = spin_matrices(F)
    comm = S.Fx @ S.Fy - S.Fy @ S.Fx
    np.testing.assert_allclose(comm, 1j * S.Fz, atol=1e-13)
    cas = S.Fx @ S.Fx + S.Fy @ S.Fy + S.Fz @ S.Fz
    np.testing.assert_allclose(cas, F * (F + 1) * np.eye(S.dim), atol=1e-12)


@pytest.mark.parametrize("F", SPINS)
def test_ladder_raises_m(F):
    S = spin_matrices(F)
    # Fz F+ - F+ Fz = F+
    np.testing.assert_allclose(S.Fz @ S.Fplus - S.Fplus @ S.Fz, S.Fplus, atol=1e-13)
    assert not S.Fx.flags.writeable


def test_ladder_coefficient_values():
    assert ladder_coefficient(2, -2) == pytest.approx(2.0)
    assert ladder_coefficient(2, 0) == pytest.approx(np.sqrt(6))
    assert ladder_coefficient(0.5, -0.5) == pytest.approx(1.0)
    for bad in (2, 3, -3, 0.25):
        with pytest.raises(DomainError):
            ladder_coefficient(2, bad)


def _all_3j(j1, j2, j3):
    for m1, m2 in itertools.product(np.arange(-j1, j1 + 1), np.arange(-j2, j2 + 1)):
        m3 = -(m1 + m2)
        if abs(m3) <= j3:
            yield m1, m2, m3


@pytest.mark.parametrize("js", [(3, 1, 2), (2, 1, 1), (1.5, 1, 0.5), (2, 2, 2), (3, 2, 1), (2.5, 1.5, 1)])
def test_3j_matches_sympy(js):
    from sympy import Rational

    def R(x):
        return Rational(int(round(2 * x)), 2)

    for ms in _all_3j(*js):
        ref = float(sympy_3j(*(R(x) for x in js), *(R(m) for m in ms)))
        assert wigner_3j(*js, *ms) == pytest.approx(ref, abs=1e-14)


@pytest.mark.parametrize("j1,j2,j3", [(3, 1, 2), (2, 1, 1), (1, 1, 1)])
def test_3j_orthogonality(j1, j2, j3):
    # sum_{m1,m2} (2 j3 + 1) 3j^2 = 1 for fixed m3
    for m3 in np.arange(-j3, j3 + 1):
        s = sum(
            (2 * j3 + 1) * wigner_3j(j1, j2, j3, m1, -m3 - m1, m3) ** 2
            for m1 in np.arange(-j1, j1 + 1)
            if abs(-m3 - m1) <= j2
        )
        assert s == pytest.approx(1.0, abs=1e-13)


def test_3j_selection_rules():
    assert wigner_3j(2, 1, 3, 1, 0, 0) == 0.0
    assert wigner_3j(1, 1, 3, 0, 0, 0) == 0.0
    with pytest.raises(DomainError):
        wigner_3j(1, 1, 1, 2, -2, 0)


def _random_density(dim, gen):
    X = gen.normal(size=(dim, dim)) + 1j * gen.normal(size=(dim, dim))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_expectation_matches_trace(seed, F):
    gen = np.random.default_rng(seed)
    S = spin_matrices(F)
    rho = _random_density(S.dim, gen)
    mom = expectation_F(rho, N=1.0)
    assert mom.Fx_exp == pytest.approx(np.trace(rho @ S.Fx).real, abs=1e-12)
    assert mom.Fy_exp == pytest.approx(np.trace(rho @ S.Fy).real, abs=1e-12)
    assert mom.Fz_exp == pytest.approx(np.trace(rho @ S.Fz).real, abs=1e-12)
    F2 = S.Fx @ S.Fx + S.Fy @ S.Fy + S.Fz @ S.Fz
    assert mom.alignment == pytest.approx(np.trace(rho @ (3 * S.Fz @ S.Fz - F2)).real, abs=1e-11)


def test_expectation_scales_with_N(rng):
    rho = _random_density(5, rng)
    a, b = expectation_F(rho, 1.0), expectation_F(rho, 7.0)
    assert b.Fx_exp == pytest.approx(7 * a.Fx_exp)
    assert b.alignment == pytest.approx(7 * a.alignment)


def test_alignment_of_pure_states():
    rho = np.zeros((5, 5))
    rho[2, 2] = 1.0  # m = 0
    assert alignment(rho) == pytest.approx(-6.0)
    rho = np.eye(5) / 5
    assert alignment(rho) == pytest.approx(0.0, abs=1e-14)


def test_coherence_sign_convention():
    # |psi> = (|m=0> + |m=1>)/sqrt2 has <Fx> = A/2 with A = sqrt(6)
    psi = np.zeros(5, complex)
    psi[2] = psi[3] = 1 / np.sqrt(2)
    mom = expectation_F(np.outer(psi, psi.conj()))
    assert mom.Fx_exp == pytest.approx(np.sqrt(6) / 2)
    assert mom.Fy_exp == pytest.approx(0.0, abs=1e-15)
    # relative phase +i on m=1: <F+> = -iA/2, <F-> = +iA/2, so <Fy> = -A/2
    psi[3] = 1j / np.sqrt(2)
    mom = expectation_F(np.outer(psi, psi.conj()))
    assert mom.Fy_exp == pytest.approx(-np.sqrt(6) / 2)


def test_non_hermitian_rejected():
    rho = np.eye(5, dtype=complex) / 5
    rho[0, 1] = 0.1
    with pytest.raises(ValidationError):
        expectation_F(rho)
