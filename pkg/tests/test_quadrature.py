import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from lamicur.quadrature import QuadratureSpec, gauss_legendre, integrate_1d, integrate_box, integrate_tensor


def test_box_exponential_matches_closed_form():
    f = lambda X: np.exp(X[:, 0] + 2 * X[:, 1])  # noqa: E731
    r = integrate_box(f, [0, 0], [1, 1])
    exact = (np.e - 1) * (np.exp(2) - 1) / 2
    assert r.converged
    assert abs(r.value - exact) < 1e-9 * exact


def test_1d_log_singularity_at_endpoint():
    r = integrate_1d(lambda x: np.log(x), 0.0, 1.0)
    assert abs(r.value + 1.0) < 1e-8


def test_1d_breakpoint_kink():
    r = integrate_1d(lambda x: np.abs(x - 0.3), 0.0, 1.0, breakpoints=[0.3])
    assert abs(r.value - (0.3**2 + 0.7**2) / 2) < 1e-12


def test_tensor_gaussian_4d():
    f = lambda X: np.exp(-np.sum(X**2, axis=1))  # noqa: E731
    r = integrate_tensor(f, [-1] * 4, [1] * 4)
    exact = (np.sqrt(np.pi) * erf(1.0)) ** 4
    assert abs(r.value - exact) < 1e-10


def test_gauss_legendre_weights_sum_to_length():
    x, w = gauss_legendre(12, -2.0, 3.0)
    assert np.all((x > -2) & (x < 3))
    assert w.sum() == pytest.approx(5.0, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_polynomials_integrated_exactly(c):
    # degree <= 2 in each variable: the 7-point Kronrod rule is exact
    def f(X):
        x, y = X[:, 0], X[:, 1]
        return c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x**2 + c[5] * y**2 * x**2

    exact = c[0] * 1 + c[1] / 2 + c[2] / 2 + c[3] / 4 + c[4] / 3 + c[5] / 9
    r = integrate_box(f, [0, 0], [1, 1])
    assert abs(r.value - exact) < 1e-12 * (1 + np.abs(c).sum())


@pytest.mark.parametrize("kw", [{"method": "nope"}, {"rel_tol": 0.0}, {"abs_tol": -1.0},
                                {"singularity_policy": "ignore"}])
def test_spec_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        QuadratureSpec(**kw)


def test_result_unpacks_to_value_and_error():
    value, err = integrate_box(lambda X: np.ones(len(X)), [0], [2])
    assert value == pytest.approx(2.0)
    assert err >= 0
