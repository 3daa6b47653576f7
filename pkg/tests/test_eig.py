import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumannlab import bie, eig, geom

SQUARE = geom.unit_square()
DISC = geom.unit_disc()

# frozen Bessel-derivative roots (mpmath, 20 digits)
JP_11 = 1.8411837813406593
JP_02 = 3.8317059702075125


def test_scan_square_candidates():
    scan = eig.scan_spectrum(SQUARE, (3.0, 10.0), 0.05)
    assert (scan.sigma >= 0).all()
    centers = [0.5 * (a + b) for a, b in scan.candidates]
    for k in (math.pi, math.pi * math.sqrt(2), 2 * math.pi, math.pi * math.sqrt(5), math.pi * math.sqrt(8), 3 * math.pi):
        assert min(abs(c - k) for c in centers) < 0.06


def test_scan_disc_candidates():
    scan = eig.scan_spectrum(DISC, (1.0, 5.0), 0.05)
    centers = [0.5 * (a + b) for a, b in scan.candidates]
    assert min(abs(c - JP_11) for c in centers) < 0.06
    assert min(abs(c - JP_02) for c in centers) < 0.06


def test_empty_scan():
    scan = eig.scan_spectrum(SQUARE, (5.0, 5.0), 0.1)
    assert len(scan.k) == 0 and scan.candidates == []


def test_coarse_resolution_warns():
    with pytest.warns(eig.ResolutionWarning):
        eig.scan_spectrum(SQUARE, (30.0, 31.0), 0.5)
    with pytest.raises(eig.ResolutionTooCoarse):
        eig.scan_spectrum(SQUARE, (30.0, 31.0), 0.5, strict=True)


def test_refine_square_sqrt2():
    modes = eig.refine_mode(SQUARE, (4.4, 4.5))
    m = modes[0]
    assert abs(m.k - math.pi * math.sqrt(2)) < 1e-6
    ref = eig.square_mode(1, 1, mesh=m.mesh)
    w = m.mesh.weights
    v = ref.trace
    # symmetric maxima make the largest-sample gauge ambiguous; align the phase by projection
    c = np.sum(w * np.conj(v) * m.trace)
    u = m.trace * abs(c) / c
    err = math.sqrt(np.sum(w * np.abs(u - v) ** 2) / np.sum(w * np.abs(v) ** 2))
    assert err < 1e-3
    assert m.residuals["jumps"] <= 1e-5


def test_refine_disc_pair():
    modes = eig.refine_mode(DISC, (1.8, 1.9))
    assert len(modes) == 2 and all(m.cluster for m in modes)
    assert all(abs(m.k - JP_11) < 1e-7 for m in modes)


def test_no_dip():
    with pytest.raises(eig.NoDipInBracket):
        eig.refine_mode(SQUARE, (3.5, 4.0))


def test_closed_form_square_2_0():
    m = eig.closed_form_mode("square", 1.0, 1.0, 2, 0)
    assert abs(m.k - 2 * math.pi) < 1e-15
    x = np.array([[0.1, 0.3]])
    assert abs(m.field(x)[0] - math.sqrt(2) * math.cos(0.2 * math.pi)) < 1e-14
    assert abs(eig.interior_mass(m) - 1) < 1e-4


def test_closed_form_disc_radial():
    m = eig.closed_form_mode("disc", 0, 1)
    assert abs(m.k - JP_02) < 1e-12
    assert abs(eig.interior_mass(m) - 1) < 1e-4


def test_constant_mode_rejected():
    with pytest.raises(eig.BadIndices):
        eig.closed_form_mode("square", 1.0, 1.0, 0, 0)


def test_oracle_residuals_small():
    m = eig.square_mode(3, 1)
    m2 = eig.EigenMode(m.k, m.mesh, m.trace, True, provenance="oracle")
    res = eig.mode_residuals(m2)
    assert max(res["jumps"], res["pde"], res["neumann"]) < 1e-5


def test_noise_raises_jumps_residual():
    m = eig.square_mode(3, 1)
    op = bie.assemble_operator(m.mesh)
    rng = np.random.default_rng(1)
    noisy = m.trace * (1 + 0.01 * rng.standard_normal(m.mesh.n))
    assert op.jumps_residual(m.trace) < 1e-6
    assert op.jumps_residual(noisy) > 1e-3


@pytest.mark.property
def test_normalization_idempotent():
    m = eig.refine_mode(SQUARE, (6.2, 6.35))[0]
    again = eig.normalize(m, method="interior")
    assert np.linalg.norm(again.trace - m.trace) / np.linalg.norm(m.trace) < 1e-12 * 1e4
    third = eig.normalize(again, method="interior")
    assert np.linalg.norm(third.trace - again.trace) / np.linalg.norm(again.trace) < 1e-12


def test_normalization_unit_mass():
    m = eig.refine_mode(SQUARE, (7.0, 7.1))[0]
    assert abs(eig.interior_mass(m) - 1) < 1e-4


@given(st.floats(0, 2 * math.pi), st.integers(0, 40))
def test_gauge_fix(phase, idx):
    rng = np.random.default_rng(idx)
    u = rng.standard_normal(41) + 1j * rng.standard_normal(41)
    g = eig.gauge_fix(u * np.exp(1j * phase))
    i = int(np.argmax(np.abs(g)))
    assert abs(g[i].imag) < 1e-12 and g[i].real > 0
    assert np.allclose(g, eig.gauge_fix(u))


@pytest.mark.parametrize("K", [10.0, 20.0, 30.0])
def test_weyl_count_oracle(K):
    count = len(eig.square_spectrum(K))
    assert abs(count - eig.weyl_count(1.0, 4.0, K)) <= 0.1 * count


def test_half_ellipse_oracle_matches_solver():
    ref = eig.half_ellipse_spectrum(8.0, 9.0)[0]
    dom = geom.semi_ellipse()
    m = eig.refine_mode(dom, (ref.k - 0.01, ref.k + 0.01))[0]
    assert abs(m.k - ref.k) < 1e-7 * ref.k
    field = eig.half_ellipse_field(ref, m.mesh.points)
    c = np.vdot(field, m.trace) / np.vdot(field, field)
    assert np.linalg.norm(m.trace - c * field) / np.linalg.norm(m.trace) < 1e-4


def test_semi_ellipse_solver_mode_certified():
    dom = geom.semi_ellipse()
    ref = min(eig.half_ellipse_spectrum(39.5, 40.5), key=lambda e: abs(e.k - 40))
    m = eig.refine_mode(dom, (ref.k - 2e-3, ref.k + 2e-3), nodes_per_wavelength=8, polish=True)[0]
    assert m.residuals["jumps"] < 1e-5
    assert m.residuals["pde"] < 1e-3 * m.k**2
