import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lamicur.geometry import (
    CHARTS, FS_RAW_VOLUME, OMEGA_RAW, OMEGA_UNIT, P2, AnalyticScalarField, ChartPoint, FubiniStudy,
    HomogeneousPoint, abs2, chart_transition, ddbar, fs_potential, fs_raw_H, from_homogeneous,
    projective_map, projectively_equal, richardson_check, to_homogeneous, wedge_density, wedge_pair,
)

coord = st.floats(-3, 3, allow_nan=False)
cplx = st.builds(complex, coord, coord)


@settings(max_examples=50, deadline=None)
@given(cplx, cplx, st.sampled_from(CHARTS), st.sampled_from(CHARTS))
def test_chart_round_trip(u, v, src, dst):
    P = np.array([[u, v]])
    Z = to_homogeneous(P, src)
    W = to_homogeneous(chart_transition(P, src, dst), dst)
    if np.all(np.isfinite(W)):
        assert projectively_equal(Z[0], W[0], tol=1e-9)
    back = from_homogeneous(Z, src)
    assert np.allclose(back, P)


@settings(max_examples=30, deadline=None)
@given(cplx, cplx, cplx, cplx.filter(lambda z: abs(z) > 1e-3))
def test_projective_equality_is_scale_invariant(a, b, c, lam):
    Z = np.array([a, b, c])
    if not np.any(np.abs(Z) > 1e-6):
        return
    assert projectively_equal(Z, lam * Z, tol=1e-9)
    assert HomogeneousPoint(tuple(Z)) == HomogeneousPoint(tuple(lam * Z))


def test_origin_is_not_a_point():
    with pytest.raises(ValueError):
        HomogeneousPoint((0, 0, 0))


def test_best_chart_has_large_coordinate():
    p = HomogeneousPoint((1e-3, 5.0, 0.2))
    assert p.best_chart() == "w=1"
    cp = ChartPoint("t=1", 1 + 1j, 2.0).to("z=1").to("t=1")
    assert cp.u == pytest.approx(1 + 1j) and cp.v == pytest.approx(2.0)


def test_abs2_gradient_vanishes_at_zero():
    g = jax.grad(lambda x: abs2(x[0] + 1j * x[1]))(jnp.zeros(2))
    assert np.all(np.asarray(g) == 0)


def test_levi_matrix_of_simple_potentials():
    P = np.array([[0.3 + 0.1j, -0.2j], [1.0, 2.0]])
    H = ddbar(AnalyticScalarField(lambda u, v: abs2(u) + 3 * abs2(v), real=True)).H(P)
    assert np.allclose(H, np.diag([1.0, 3.0])[None])


@settings(max_examples=20, deadline=None)
@given(cplx, cplx)
def test_fs_closed_form_matches_autodiff(u, v):
    P = np.array([[u, v]])
    assert np.allclose(fs_potential.jet(P)["levi"], fs_raw_H(P), atol=1e-12)


def test_richardson_check_small_for_polynomial():
    f = AnalyticScalarField(lambda u, v: u**2 * v + 3 * u, "poly")
    assert richardson_check(f, np.array([[0.2 + 0.1j, 0.4]])) < 1e-6


def test_wedge_density_is_symmetric():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 2, 2)) + 1j * rng.normal(size=(5, 2, 2))
    B = rng.normal(size=(5, 2, 2)) + 1j * rng.normal(size=(5, 2, 2))
    assert np.allclose(wedge_density(A, B), wedge_density(B, A))


def test_fs_volume_against_radial_oracle():
    # density of omega_raw ^ omega_raw is 8 / (1 + r^2)^3; the unit sphere in C^2 has area 2 pi^2
    radial, _ = quad(lambda r: 8 * r**3 / (1 + r**2) ** 3, 0, np.inf)
    oracle = 2 * np.pi**2 * radial
    r = wedge_pair(OMEGA_RAW, OMEGA_RAW, P2)
    assert r.value == pytest.approx(oracle, rel=1e-6)
    assert FS_RAW_VOLUME == pytest.approx(oracle, rel=1e-12)


def test_unit_normalisation():
    assert FubiniStudy("unit-mass").factor == pytest.approx(1 / (2 * np.pi))
    r = wedge_pair(OMEGA_UNIT, OMEGA_UNIT, P2)
    assert r.value == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError):
        FubiniStudy("other")


def test_fs_form_is_unitary_invariant():
    U = np.linalg.qr(np.array([[1, 2j, 0], [0.5, 1, 1j], [0, 1, 3]], dtype=complex))[0]
    F = projective_map(U)
    P = np.array([[0.2 + 0.3j, -0.1], [0.5j, 0.4 - 0.2j]])
    assert np.allclose(OMEGA_RAW.pullback(F).H(P), OMEGA_RAW.H(P), atol=1e-12)
