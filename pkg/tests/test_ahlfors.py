import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lamicur import ahlfors
from lamicur.currents import TestFunction, bump_fn
from lamicur.geometry import AnalyticScalarField


def test_line_disc_mass_against_radial_oracle():
    # the line w = 0 pulls omega_unit back to |dx|^2 / (pi (1 + |x|^2)^2), weighted by log(r/|x|)
    Phi = ahlfors.line_map()
    for r in (0.3, 0.7, 0.95):
        oracle = quad(lambda s: np.log(r / s) * s / (1 + s * s) ** 2, 0, r)[0] / np.pi
        assert float(ahlfors.mass(Phi, r).value) == pytest.approx(oracle, rel=1e-8)


def test_line_boundary_length():
    Phi = ahlfors.line_map()
    r = 0.6
    assert float(ahlfors.boundary_length(Phi, r).value) == pytest.approx(2 * np.pi * r * np.sqrt(2) / (1 + r * r), rel=1e-9)


def test_defect_identity_single_bump():
    Phi = ahlfors.flat_map()
    f = TestFunction(AnalyticScalarField(bump_fn((0.5, 0.0), 0.6), "b", real=True), (0.5, 0.0), 0.6)
    d = ahlfors.defect_identity(Phi, 0.5, f)
    assert abs(d["lhs"]) > 1e-3
    assert d["residual"] < 1e-7


def test_schedule_is_increasing_below_r_max():
    s = ahlfors.default_schedule(0.99, 12)
    assert s == sorted(s) and s[-1] < 0.99 and s[0] == 0.5


@pytest.mark.parametrize("name", ["line", "flat", "half-plane", "strip"])
def test_catalog_maps_are_holomorphic(name):
    assert ahlfors.catalog_maps()[name].cr_residual() < 1e-10


def test_disc_map_validates_radius():
    with pytest.raises(ValueError):
        ahlfors.DiscMap(lambda x: (x, x), "bad", r_max=1.5)


@settings(max_examples=10, deadline=None)
@given(st.floats(1.5, 4.0))
def test_flat_map_plaque_radii(lam):
    h = ahlfors.hyperbolicity_radii(ahlfors.flat_map(lam, (0.0,)))
    # the plaque |lam x| < 1 is the disc of radius 1/lam
    assert h["r_x"] == pytest.approx(1 / lam, rel=1e-5)
    assert h["R_x"] == pytest.approx(1 / lam, rel=1e-5)
    assert h["koebe"] >= 1


def test_exhaustion_of_bounded_disc_converges():
    p = ahlfors.exhaustion(ahlfors.line_map(), [0.5, 0.75, 1 - 2.0**-8, 1 - 2.0**-9, 1 - 2.0**-10])
    assert not p.divergent
    assert p.converged
    assert p.A == sorted(p.A)
    text = p.to_csv().splitlines()
    assert text[0].startswith("r,A,ell,pairing_1") and len(text) == 6


def test_exhaustion_rejects_radius_outside():
    with pytest.raises(ValueError):
        ahlfors.exhaustion(ahlfors.line_map(), [0.5, 1.2])
