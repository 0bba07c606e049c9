import numpy as np
import pytest
from scipy.integrate import quad

from lamicur import catalog
from lamicur.currents import (
    Smooth, bump_fn, closedness_defect, compute_energy, compute_mass, energy_report, fubini, function_battery, harmonicity_defect, one_form_battery,
    positivity_certificate, pushforward, random_unitaries, regularize, shear_matrix,
)
from lamicur.geometry import OMEGA_UNIT


def _u(s):
    return np.exp(-1.0 / (s * (1 - s)))


def _du(s):
    return _u(s) * (1 - 2 * s) / (s * (1 - s)) ** 2


@pytest.fixture(scope="module")
def product():
    return catalog.product_current().potential


def test_fubini_smooth_mass_is_one():
    m = compute_mass(Smooth(OMEGA_UNIT))
    assert m.unit == pytest.approx(1.0, rel=1e-7)
    assert m.raw == pytest.approx(2 * np.pi, rel=1e-7)


def test_fubini_report_is_trivial():
    r = energy_report(fubini())
    assert (r.mass_unit, r.energy, r.q_self, r.identity_residual) == (1.0, 0.0, 1.0, 0.0)


def test_product_energy_matches_radial_oracle(product):
    # E = 4 (pi/2 int t u'(t)^2 dt)^2 and mass = 2 pi A with A = 2 int s u'(s)^2 ds
    A = 2 * quad(lambda s: s * _du(s) ** 2, 0, 1, epsabs=1e-14, epsrel=1e-12)[0]
    assert product.c == pytest.approx(2 * np.pi * A, rel=1e-10)
    e = compute_energy(product)
    assert e.value == pytest.approx(np.pi**2 * A**2, rel=1e-6)


def test_product_q_ratio_is_one_half(product):
    r = energy_report(product)
    assert r.q_over_mass2 == pytest.approx(0.5, abs=1e-6)
    assert r.identity_residual <= 4 * r.error_estimates["combined"] + 1e-15


def test_perturbed_energy_is_quadratic_in_eps():
    e1 = compute_energy(catalog.perturbed_fubini(eps=0.1, check=False)).value
    e2 = compute_energy(catalog.perturbed_fubini(eps=0.2, check=False)).value
    assert e1 > 0
    assert e2 / e1 == pytest.approx(4.0, rel=1e-6)


def test_unitary_pushforward_fixes_omega():
    U = random_unitaries(1, 0.5, seed=3)[0]
    assert np.allclose(U.conj().T @ U, np.eye(3), atol=1e-12)
    T = pushforward(Smooth(OMEGA_UNIT), "matrix", U)
    P = np.array([[0.1 + 0.2j, -0.3], [1.5, 0.7j]])
    assert np.allclose(T.T.H(P), OMEGA_UNIT.H(P), atol=1e-12)


def test_regularized_omega_is_omega():
    R = regularize(Smooth(OMEGA_UNIT), n=4, delta=0.1)
    P = np.array([[0.4, 0.2 - 0.1j]])
    assert np.allclose(R.T.H(P), OMEGA_UNIT.H(P), atol=1e-12)


def test_shear_matrix():
    M = shear_matrix(0.25)
    assert np.allclose(M @ np.array([1, 2, 3]), [1, 2.25, 3])


def test_endomorphism_keeps_mass():
    T = pushforward(fubini(), "endomorphism", d=3)
    assert compute_mass(T).unit == 1.0


def test_fubini_harmonicity_defect_small():
    d = harmonicity_defect(fubini(), function_battery(3, 1, seed=0))
    assert d["defect"] < 1e-8


def test_fubini_positivity_certified():
    assert positivity_certificate(fubini()).certified


def test_bump_values():
    b = bump_fn((0.1, 0.0), 0.5)
    assert float(b(0.1 + 0j, 0j)) == pytest.approx(1.0)
    assert float(b(0.7 + 0j, 0j)) == 0.0


def test_energy_requires_potential():
    with pytest.raises(TypeError):
        compute_energy(Smooth(OMEGA_UNIT))


@pytest.mark.slow
def test_linear_foliation_current_is_closed():
    T = catalog.resolve("example2.4:alpha=1.618")
    cd = closedness_defect(T, one_form_battery(3, seed=43, singular_points=list(T.singular_points)))
    assert cd["defect"] < 1e-6
    assert compute_energy(T).value < 1e-8


@pytest.mark.slow
def test_product_current_is_harmonic_away_from_poles(product):
    bat = function_battery(2, 0, seed=42, singular_points=list(product.singular_points))
    assert harmonicity_defect(product, bat)["defect"] < 1e-6

