import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamicur import lamination
from lamicur.catalog import model_motion


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=0.8), max_size=5), st.complex_numbers(min_magnitude=1.5, max_magnitude=3))
def test_winding_counts_roots_inside(inside, outside):
    roots = np.array(list(inside) + [outside])

    def g(rows, z):
        return np.prod(z[:, None] - roots[None, :], axis=1)[None, :]

    N, step = lamination._winding(g, 0.9 + 0.0123, strict=False)
    if np.isfinite(step[0]):
        assert int(N[0]) == len(inside)


def test_affine_pair_intersects_once_near_shear_root():
    box = lamination.make_box("affine-C1", n=4)
    a, b = box.alphas[0], box.alphas[1]
    eps = 0.1 * abs(b - a)
    rec = lamination.count_intersections(box, a, b, eps)
    assert rec.count <= 1
    for (z, _w), mult in rec.points:
        assert abs(box.motion(b, z) + eps * z - box.motion(a, z)) < 1e-8
        assert mult == 1


def test_diagonal_pair_has_root_at_origin():
    box = lamination.make_box("affine-C1", n=3)
    a = box.alphas[4]
    rec = lamination.count_intersections(box, a, a, 1e-3)
    assert rec.count == 1
    assert abs(rec.points[0][0][0]) < 1e-10


def test_affine_sweep_constant():
    s = lamination.intersection_sweep("affine-C1", [1e-1, 1e-3], n=6)
    assert s["constant"] and s["N_hat"] == 1


def test_log_fit_exact_line():
    x = np.array([1.0, 2.0, 3.0])
    A, b, r2 = lamination._log_fit(x, 2 * x + 1)
    assert (A, b, r2) == pytest.approx((2.0, 1.0, 1.0))
    assert np.isnan(lamination._log_fit(x, np.ones(3))[2])


def test_records_csv_header():
    box = lamination.make_box("affine-C1", n=2)
    rec = lamination.count_intersections(box, box.alphas[0], box.alphas[0], 0.01)
    text = lamination.records_to_csv([rec]).splitlines()
    assert text[0] == "alpha,beta,eps,N,points" and len(text) == 2


def test_blaschke_constant_is_four_fifths():
    assert lamination.blaschke_constant() == pytest.approx(0.8, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=0.5), min_size=1, max_size=8))
def test_blaschke_bound(zeros):
    zeros = [z for z in zeros if abs(z) <= 0.5]
    if not zeros:
        return
    G = lamination.disc_grid(0.5, 12, 48)
    assert np.abs(lamination.blaschke(zeros)(G)).max() <= 0.8 ** len(zeros) + 1e-12


@pytest.mark.parametrize("n", [3, 8, 64])
def test_circle_energy_closed_form(n):
    # brute force over pairs with an independent product formula
    a = np.exp(2j * np.pi * np.arange(n) / n)
    direct = sum(np.log(abs(a[i] - a[j])) for i in range(n) for j in range(n) if i != j) / n**2
    assert direct == pytest.approx(lamination.circle_energy_exact(n), abs=1e-12)
    e = lamination.transverse_energy(alphas=a, weights=np.ones(n))["energy"]
    assert e == pytest.approx(direct, abs=1e-12)


def test_point_mass_energy_rejected():
    with pytest.raises(ValueError):
        lamination.transverse_energy(alphas=[0.1, 0.1], weights=[1, 1])


def test_refinement_trend_flags_geometric_atoms():
    out = lamination.transverse_energy(alphas=[0.1, 0.2], weights=[1, 1], refine=lamination.geometric_atoms,
                                       levels=[8, 16, 32, 64])
    assert out["divergent"]
    rng = np.random.default_rng(0)
    pts = rng.random((256, 2))
    ok = lamination.transverse_energy(alphas=[0.1, 0.2], weights=[1, 1],
                                      refine=lambda n: (pts[:n, 0] + 1j * pts[:n, 1], np.ones(n)),
                                      levels=[32, 64, 128, 256])
    assert not ok["divergent"]


def test_bers_royden_affine():
    r = lamination.bers_royden_check(model_motion("affine-C1"), n=10)
    assert np.isfinite(r["K_best"])
    r2 = lamination.bers_royden_check(model_motion("affine-C1"), K=r["K_best"] * 1.001, n=10)
    assert r2["n_violations"] == 0


def test_wedge_zero_for_well_separated_atoms():
    box = lamination.make_box("affine-C1", "random", 30, seed=1)
    g = lamination.geometric_wedge(box, 1e-6)
    assert g["value"] == 0.0 and g["pairs_hit"] == 0


def test_sqrt_eta_property_small_sample():
    assert lamination.sqrt_eta_property(50)["violations"] == 0
