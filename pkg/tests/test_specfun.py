import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumannlab import specfun

# frozen from a 30-digit ascending-series evaluation
H0_AT_1 = complex("0.765197686557966551449717526103+0.0882569642156769579829267660236j")
B0 = math.sqrt(math.pi) / 2


def _mp_hankel(n, x):
    mp.mp.dps = 30
    return complex(mp.besselj(n, x) + 1j * mp.bessely(n, x))


def test_h0_at_one_frozen():
    assert abs(specfun.hankel1(0, 1.0) - H0_AT_1) <= 1e-14
    assert abs(_mp_hankel(0, 1.0) - H0_AT_1) <= 1e-15


@given(st.floats(1e-6, 1e4))
def test_hankel_matches_mpmath(x):
    for n in (0, 1):
        ref = _mp_hankel(n, x)
        assert abs(specfun.hankel1(n, x) - ref) <= 1e-12 * abs(ref)


def test_h1_is_minus_h0_derivative():
    x, d = 2.0, 1e-2
    c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    pts = x + d * np.arange(-3, 4)
    deriv = (c * specfun.hankel1(0, pts)).sum() / d
    assert abs(specfun.hankel1(1, x) + deriv) < 1e-9


@pytest.mark.parametrize("x", [0.1, 1.0, 10.0, 500.0])
def test_wronskian_points(x):
    assert specfun.wronskian_defect(x) <= 1e-10


def test_small_argument_divergence():
    y0 = specfun.bessel_y(0, np.array([1e-3, 1e-5]))
    assert y0[1] < y0[0] < 0
    x = 1e-5
    assert abs(specfun.bessel_y(1, x) / (-2 / (math.pi * x)) - 1) < 1e-6


def test_large_argument_envelope():
    x = 5e3
    for n in (0, 1):
        assert abs(abs(specfun.hankel1(n, x)) / math.sqrt(2 / (math.pi * x)) - 1) < 1e-4


def test_series_asymptotic_overlap():
    xs = np.linspace(8, 12, 41)
    for n in (0, 1):
        a, b = specfun.hankel1_series(n, xs), specfun.hankel1_integral(n, xs)
        assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-11


def test_nonpositive_argument():
    with pytest.raises(specfun.NonPositiveArgument):
        specfun.hankel1(0, 0.0)
    with pytest.raises(specfun.NonPositiveArgument):
        specfun.conormal_b(-1.0)


def test_b_reconstructs_h1_at_10():
    assert abs(specfun.hankel1_from_b(10.0) - _mp_hankel(1, 10.0)) <= 1e-9


def test_b_leading_coefficient_and_rate():
    assert abs(specfun.conormal_b_coefficients(1)[0] - B0) < 1e-15
    xs = np.array([50.0, 100.0, 200.0])
    err = np.abs(specfun.conormal_b(xs) - B0)
    order = -np.polyfit(np.log(xs), np.log(err), 1)[0]
    assert order >= 0.95


def test_b_tends_to_gamma_three_halves():
    # the 1/x correction: x * (b(x) - b0) approaches the first coefficient
    b1 = specfun.conormal_b_coefficients(2)[1]
    x = 1e4
    assert abs(x * (specfun.conormal_b(x) - B0) - b1) < 1e-3 * abs(b1)


@given(st.floats(0.05, 1e3))
def test_b_upper_bound(x):
    assert abs(specfun.conormal_b(x)) <= specfun.conormal_b_upper_bound(x) + 1e-12


@given(st.floats(0.5, 200.0))
def test_b_matches_mpmath_quadrature(x):
    mp.mp.dps = 20
    f = lambda t: mp.exp(-t) * mp.sqrt(t) * mp.sqrt(1 + 0.5j * t / x)
    ref = complex(mp.quad(f, [0, 1, 10, mp.inf]))
    assert abs(specfun.conormal_b(x) - ref) <= 1e-10


def test_selftest_keys():
    res = specfun.selftest()
    assert res["wronskian_max_defect"] <= 1e-10
    assert res["overlap_max_rel_diff"] <= 1e-11
