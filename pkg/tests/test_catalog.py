import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamicur import catalog
from lamicur.currents import Potential, Smooth


@pytest.mark.parametrize("cid", catalog.CATALOG_IDS)
def test_catalog_ids_resolve(cid):
    T = catalog.resolve(cid)
    assert isinstance(T, (Potential, Smooth))


def test_unknown_id():
    with pytest.raises(KeyError):
        catalog.resolve("nope:x=1")


def test_bump_profile_derivative_consistent():
    assert catalog.BumpProfile().fd_mismatch() < 1e-6


def test_radial_potential_two_evaluations_agree():
    U = catalog.RadialLogPotential(catalog.BumpProfile())
    for z in (0.2, 0.55, 0.9):
        assert U(z) == pytest.approx(U.direct(z), abs=1e-8)
    assert U(3.0) == pytest.approx(U.A * np.log(3.0))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0))
def test_radial_potential_is_monotone(r):
    U = _potential()
    assert U(r) <= U(min(1.0, r + 0.05)) + 1e-12


_CACHE = {}


def _potential():
    if "U" not in _CACHE:
        _CACHE["U"] = catalog.RadialLogPotential(catalog.BumpProfile())
    return _CACHE["U"]


def test_degenerate_examples_have_vanishing_determinant():
    rows = [ex.check(100) for ex in catalog.degenerate_ma_examples()]
    for r in rows:
        assert r["degenerate"] != r["control"]


def test_slab_hypotheses_for_re_w():
    h = catalog.slab_hypotheses(catalog.rho_rew())
    assert h["max_det_levi"] < 1e-12 and h["max_mixed"] < 1e-12


@pytest.mark.parametrize("kind,kw", [("affine-C1", {"c": 2.0}), ("rough-Holder", {"kappa": 1.5}), ("unknown", {})])
def test_motion_rejects_bad_parameters(kind, kw):
    with pytest.raises(ValueError):
        catalog.model_motion(kind, **kw)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_rough_motion_fixes_the_base_plaque(t, x, y):
    m = catalog.model_motion("rough-Holder")
    z = complex(x, y)
    # |f_t(z)| = |t|^(1 + kappa Re z)
    assert abs(m(t, z)) == pytest.approx(t ** (1 + 0.5 * x), rel=1e-10)


def test_positivity_threshold_scales_inversely():
    t1 = catalog.positivity_threshold(catalog.radial_bidisc_S(40.0), tol=1e-7)
    t2 = catalog.positivity_threshold(catalog.radial_bidisc_S(80.0), tol=1e-7)
    assert 0 < t2 < t1 < 10
    assert t1 / t2 == pytest.approx(2.0, rel=1e-5)


def test_perturbed_beyond_threshold_flags_failure():
    S = catalog.radial_bidisc_S(80.0)
    assert "positivity_failure" not in catalog.perturbed_fubini(S, 0.5).meta
    assert "positivity_failure" in catalog.perturbed_fubini(S, 1.5).meta
