import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from neumannlab import eig, geom, scaling

property_test = pytest.mark.property
SQUARE = geom.unit_square()

# frozen: int over the quarter disc of radius 1/4 at the origin of 2 cos^2(2 pi x)
CORNER_MASS_2_0 = 0.0579816146867


# --- ball mass --------------------------------------------------------------


def test_corner_mass_oracle():
    ref = integrate.quad(lambda x: 2 * math.cos(2 * math.pi * x) ** 2 * math.sqrt(0.0625 - x * x), 0, 0.25, epsabs=1e-14)[0]
    assert abs(ref - CORNER_MASS_2_0) < 1e-12
    m = eig.square_mode(2, 0)
    assert abs(scaling.ball_mass(m, [0.0, 0.0], 0.25) - CORNER_MASS_2_0) <= 1e-3 * (CORNER_MASS_2_0 + m.h)


@pytest.mark.parametrize("mode", [eig.square_mode(3, 2), eig.disc_mode(4, 2)])
def test_full_ball_is_unit_mass(mode):
    c = mode.domain.centroid
    assert abs(scaling.ball_mass(mode, c, 2 * mode.domain.diameter) - 1) <= 1e-3


def test_solver_mode_full_mass():
    m = eig.refine_mode(SQUARE, (7.0, 7.1))[0]
    assert abs(scaling.ball_mass(m, [0.3, 0.6], 2.0) - 1) <= 1e-3


def test_ball_errors():
    m = eig.square_mode(5, 0)
    with pytest.raises(scaling.CenterOutside):
        scaling.ball_mass(m, [1.5, 0.5], 0.2)
    with pytest.raises(scaling.RadiusTooSmallForMesh):
        scaling.ball_mass(m, [0.5, 0.5], 1e-4)


@property_test
@settings(max_examples=10)
@given(st.floats(0.15, 1.6), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_ball_mass_monotone(r, x, y):
    m = eig.square_mode(4, 1)
    a = scaling.ball_mass(m, [x, y], r)
    b = scaling.ball_mass(m, [x, y], r * 1.3)
    assert b >= a - 1e-3 * (a + m.h)


# --- restriction ------------------------------------------------------------


@pytest.mark.parametrize("mm", [1, 4, 9])
def test_square_edge_restriction_is_one(mm):
    m = eig.square_mode(mm, 0)
    assert abs(scaling.restriction_norm(m, 0) - 1) < 1e-6


def test_disc_whispering_restriction():
    m = eig.disc_mode(30, 1)
    kappa = special.jnp_zeros(30, 1)[0]
    radial = 0.5 * (1 - (30 / kappa) ** 2) * special.jv(30, kappa) ** 2
    ref = abs(special.jv(30, kappa)) / math.sqrt(radial)
    assert abs(scaling.boundary_norm(m) - ref) < 1e-8 * ref


def test_empty_window():
    m = eig.square_mode(3, 0)
    assert scaling.restriction_norm(m, 0, (0.4, 0.4)) == 0.0
    with pytest.raises(scaling.BadWindow):
        scaling.restriction_norm(m, 0, (0.5, 2.0))
    with pytest.raises(scaling.BadWindow):
        scaling.restriction_norm(m, 0, "middle")


@property_test
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6, unique=True), st.integers(1, 12), st.integers(0, 12))
def test_restriction_partition(cuts, mm, nn):
    m = eig.square_mode(mm, nn)
    pts = [0.0] + sorted(cuts) + [1.0]
    parts = [scaling.restriction_norm(m, 0, (a, b)) for a, b in zip(pts[:-1], pts[1:])]
    full = scaling.restriction_norm(m, 0)
    assert abs(math.sqrt(sum(p * p for p in parts)) - full) < 1e-12


@property_test
def test_boundary_norm_sobolev_bound():
    ladder = [eig.square_mode(mm, nn) for mm, nn in [(3, 1), (5, 2), (8, 3), (12, 5), (17, 4), (25, 7)]]
    samples = [(m.h, scaling.boundary_norm(m)) for m in ladder]
    C = scaling.uniform_constant(samples, 0.5)
    assert all(v <= C * h**-0.5 for h, v in samples)
    # a single constant: every mode sits within a factor 4 of it
    assert min(v * h**0.5 for h, v in samples) > C / 4


# --- fits -------------------------------------------------------------------


def test_exact_power_law():
    h = np.geomspace(1e-3, 1e-1, 9)
    fit = scaling.fit_exponent(list(zip(h, h**0.5)))
    assert abs(fit.slope - 0.5) < 1e-12 and abs(fit.r2 - 1) < 1e-12


def test_oscillating_power_law():
    h = 1 / np.linspace(20, 2000, 4000)
    v = h**0.5 * (2 + np.sin(1 / h))
    fit = scaling.fit_exponent(list(zip(h, v)))
    assert abs(fit.envelope_slope - 0.5) <= 0.05
    assert abs(fit.slope - 0.5) <= 0.1


def test_fit_errors():
    with pytest.raises(scaling.TooFewSamples):
        scaling.fit_exponent([(0.1, 1.0), (0.01, 2.0), (0.001, 3.0)])
    with pytest.raises(scaling.DegenerateSpan):
        scaling.fit_exponent([(0.1, 1.0), (0.11, 2.0), (0.12, 3.0), (0.13, 1.0)])


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_fit_recovers_any_exponent(a, c):
    h = np.geomspace(1e-3, 1e-1, 6)
    fit = scaling.fit_exponent(list(zip(h, c * h**a)))
    assert abs(fit.slope - a) < 1e-9
    assert abs(fit.growth + a) < 1e-9


# --- commutator audit -------------------------------------------------------


def test_rellich_square_mid_edge():
    m = eig.square_mode(3, 0)
    a = scaling.rellich_check(m, 0.5, delta=0.5)
    assert np.isfinite(a.lhs) and np.isfinite(a.ratio) and a.ratio > 0
    assert not a.corner


def test_rellich_macroscopic():
    m = eig.square_mode(3, 0)
    a = scaling.rellich_check(m, 0.5, delta=0.0)
    assert np.isfinite(a.ratio) and 0 < a.ratio < 10


def test_rellich_corner_runs():
    m = eig.square_mode(6, 1)
    a = scaling.rellich_check(m, 0.0, delta=0.5)
    assert a.corner and np.isfinite(a.ratio)


def test_rellich_needs_certified_mode():
    m = eig.square_mode(3, 0)
    raw = eig.EigenMode(m.k, m.mesh, m.trace, normalized=False)
    with pytest.raises(scaling.UncertifiedMode):
        scaling.rellich_check(raw, 0.5)


# --- experiments ------------------------------------------------------------


def test_nonconcentration_corner_square():
    modes = [eig.square_mode(mm, 0) for mm in (10, 14, 20, 28, 40, 60)]
    rep = scaling.run_experiment("nonconcentration", {"center": "corner:0", "deltas": [0.5]}, modes=modes)
    fit = rep.fits["mass_delta0.5"]
    assert fit.envelope_slope >= 1.0 - 0.05
    assert rep.verdicts["mass_delta0.5"] == "PASS"


def test_restriction_bounded_modes():
    modes = [eig.square_mode(mm, nn) for mm, nn in [(3, 1), (5, 2), (8, 3), (12, 5), (17, 4), (25, 7)]]
    rep = scaling.run_experiment("restriction", {"edge": 0}, modes=modes)
    assert abs(rep.fits["norm"].growth) < 0.05
    assert rep.verdicts["norm"] == "PASS"


def test_insufficient_modes():
    with pytest.raises(scaling.InsufficientModes):
        scaling.run_experiment("restriction", {"edge": 0}, modes=[])
