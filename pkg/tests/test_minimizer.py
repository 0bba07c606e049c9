import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamicur import minimizer as mz

# Cartesian midpoint rule in R^4 (64 points per axis) on hand-derived dbar coefficients
# of the first two default basis forms; the 48-point rule agrees to 1e-6.
G00_ORACLE = 3.1919089003633734
G01_ORACLE = 0.13476872485203698j


@pytest.fixture(scope="module")
def two_form_gram():
    slc = mz.CurrentSlice(mz.default_basis(2), 1.0)
    return mz.assemble_gram(slc)


@pytest.mark.slow
def test_gram_matches_grid_oracle(two_form_gram):
    G = two_form_gram.G
    assert two_form_gram.converged
    assert G[0, 0] == pytest.approx(G00_ORACLE, abs=1e-5)
    assert G[0, 1] == pytest.approx(G01_ORACLE, abs=1e-5)
    assert G[1, 0] == pytest.approx(np.conj(G01_ORACLE), abs=1e-5)


@pytest.mark.slow
def test_gram_is_hermitian_psd(two_form_gram):
    assert two_form_gram.hermitian_residual < 1e-12
    assert two_form_gram.min_eigenvalue > 0
    assert two_form_gram.mass_check < 1e-6


def test_disjoint_supports_give_zero():
    far = [mz.bump_form((0, 0), 0.3), mz.bump_form((2.0, 0), 0.3, slot=1)]
    assert not mz._balls_overlap(far[0].support, far[1].support)
    assert mz._gram_entry(far[0], far[1], mz.GRAM_SPEC)[0] == 0.0


def test_unconstrained_minimum_is_zero():
    G = np.diag([1.0, 2.0, 3.0])
    res = mz.minimize_quadratic(G, mz.linear_constraints(m=3), n_starts=3)
    assert np.allclose(res.theta, 0, atol=1e-8)
    assert res.certificate == "unique"


def test_equality_on_diagonal_gram():
    G = np.diag([2.0, 1.0])
    res = mz.minimize_quadratic(G, mz.linear_constraints([[1.0, 0.0]], [1.0]), n_starts=4)
    assert res.theta == pytest.approx([1.0, 0.0], abs=1e-8)
    assert res.energy == pytest.approx(2.0, abs=1e-12)
    assert res.Q_self == pytest.approx(1.0 - 4.0)


def test_rank_deficient_gram_reports_nullspace():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    cert, ev, Z = mz.restricted_certificate(G, np.zeros((0, 2)))
    assert cert == "degenerate-with-nullspace"
    assert Z.shape == (2, 1)
    assert np.allclose(G @ Z, 0, atol=1e-12)


def test_constraint_can_lift_degeneracy():
    G = np.diag([1.0, 0.0])
    cert, _, _ = mz.restricted_certificate(G, np.array([[0.0, 1.0]]))
    assert cert == "unique"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.floats(0.1, 3.0))
def test_concavity_probe_identity(a, b, c):
    rng = np.random.default_rng(1)
    M = rng.normal(size=(3, 3))
    G = M @ M.T
    p = mz.concavity_probe(np.array(a), np.array(b), G, c)
    assert p["residual"] <= 1e-10 * (1 + abs(p["half_energy"]))
    assert p["probe"] >= -1e-12


def test_q_self():
    assert mz.q_self(np.array([1.0]), np.array([[0.25]]), 2.0) == pytest.approx(3.5)


def test_default_basis_limit():
    with pytest.raises(ValueError):
        mz.default_basis(5)


def test_infeasible_equalities_raise():
    cd = mz.linear_constraints([[1.0, 0.0], [1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(mz.InfeasibleSliceError):
        mz.feasibility(cd)


@pytest.mark.slow
def test_positivity_samples_constrain_theta():
    slc = mz.CurrentSlice(mz.default_basis(1), 1.0)
    cd = mz.constraint_data(slc)
    # a huge coefficient breaks positivity somewhere on the support
    x = mz.project(np.array([1e3]), cd)
    assert cd.min_eigenvalues(x).min() >= -1e-9
    assert abs(x[0]) < 1e3
