import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from neumannlab import geom

SQUARE = geom.unit_square()
DISC = geom.unit_disc()
ELLIPSE = geom.semi_ellipse(2.0, 1.0)


def _polygon_cfg(vertices):
    n = len(vertices)
    return {"edges": [{"kind": "line", "start": list(vertices[i]), "end": list(vertices[(i + 1) % n])} for i in range(n)]}


# --- construction -----------------------------------------------------------


def test_square_has_four_right_corners():
    assert len(SQUARE.corners) == 4
    assert all(abs(c.angle - math.pi / 2) < 1e-12 for c in SQUARE.corners)


def test_semi_ellipse_has_two_right_corners():
    assert len(ELLIPSE.corners) == 2
    assert all(abs(c.angle - math.pi / 2) < 1e-10 for c in ELLIPSE.corners)


def test_reflex_pentagon_rejected():
    cfg = _polygon_cfg([(0, 0), (2, 0), (2, 2), (1, 0.5), (0, 2)])
    with pytest.raises(geom.NotConvex):
        geom.build_domain(cfg)


def test_open_chain_rejected():
    cfg = {"edges": [{"kind": "line", "start": [0, 0], "end": [1, 0]}, {"kind": "line", "start": [1, 0], "end": [1, 1]}, {"kind": "line", "start": [1, 1], "end": [0, 0.5]}]}
    with pytest.raises(geom.NotClosed):
        geom.build_domain(cfg)


def test_straight_angle_rejected():
    cfg = _polygon_cfg([(0, 0), (1, 0), (2, 0), (1, 1)])
    with pytest.raises(geom.DegenerateCorner):
        geom.build_domain(cfg)


def test_unknown_edge_kind():
    with pytest.raises(geom.BadEdgeData):
        geom.build_domain({"edges": [{"kind": "spline"}]})


def test_corner_angle_matches_one_sided_tangents():
    for d in (SQUARE, ELLIPSE, geom.regular_polygon(5)):
        for i, c in enumerate(d.corners):
            t_in = d.edges[c.incoming].d1(1.0)
            t_out = d.edges[c.outgoing].d1(0.0)
            t_in = t_in / np.linalg.norm(t_in)
            t_out = t_out / np.linalg.norm(t_out)
            between = math.acos(np.clip(-t_in @ t_out, -1, 1))
            assert abs(between - c.angle) < 1e-10


# --- boundary frames --------------------------------------------------------


def test_square_bottom_midpoint_frame():
    bp = geom.boundary_point(SQUARE, 0.5)
    assert np.allclose(bp.normal, [0, -1])
    assert bp.curvature == 0.0


def test_disc_curvature_one():
    for y in np.linspace(0.1, 6.0, 7):
        assert abs(geom.boundary_point(DISC, y).curvature - 1.0) < 1e-12


def test_semi_ellipse_top_point_frame():
    # arc starts at (2, 0); (0, 1) sits a quarter of the way around the full ellipse
    L0 = ELLIPSE.edge_lengths[0]
    y = L0 + ELLIPSE.edge_lengths[1] / 2
    bp = geom.boundary_point(ELLIPSE, y)
    assert np.allclose(bp.position, [0, 1], atol=1e-10)
    assert np.allclose(bp.normal, [0, 1], atol=1e-10)
    # independent finite-difference curvature of (2 cos t, sin t) at t = pi/2
    t, dt = math.pi / 2, 1e-4
    x = lambda s: np.array([2 * math.cos(s), math.sin(s)])
    d1 = (x(t + dt) - x(t - dt)) / (2 * dt)
    d2 = (x(t + dt) - 2 * x(t) + x(t - dt)) / dt**2
    kappa = abs(d1[0] * d2[1] - d1[1] * d2[0]) / np.linalg.norm(d1) ** 3
    assert abs(bp.curvature - kappa) < 1e-6
    assert abs(bp.curvature - 0.25) < 1e-10


def test_at_corner_needs_side():
    with pytest.raises(geom.AtCorner):
        geom.boundary_point(SQUARE, 1.0)
    before = geom.boundary_point(SQUARE, 1.0, side="before")
    after = geom.boundary_point(SQUARE, 1.0, side="after")
    assert np.allclose(before.tangent, [1, 0]) and np.allclose(after.tangent, [0, 1])


@given(st.floats(0.0, 1.0, exclude_max=True))
def test_frames_are_orthonormal_and_outward(u):
    for d in (SQUARE, DISC, ELLIPSE):
        y = u * d.length
        try:
            bp = geom.boundary_point(d, y)
        except geom.AtCorner:
            continue
        assert abs(np.linalg.norm(bp.tangent) - 1) < 1e-12
        assert abs(np.linalg.norm(bp.normal) - 1) < 1e-12
        assert abs(bp.tangent @ bp.normal) < 1e-12
        # outward: stepping along the normal leaves the domain
        assert not d.contains((bp.position + 1e-6 * bp.normal)[None])[0]
        # counterclockwise orientation: normal is tangent rotated by -pi/2
        assert np.allclose(bp.normal, [bp.tangent[1], -bp.tangent[0]])


# --- billiards --------------------------------------------------------------


def test_square_normal_bounce():
    q = geom.billiard_step(SQUARE, geom.PhaseSpacePoint(0, 0.5, 0.0))
    assert q.edge == 2 and abs(q.s - 0.5) < 1e-12 and abs(q.xi) < 1e-12


def test_square_diagonal_launch():
    q = geom.billiard_step(SQUARE, geom.PhaseSpacePoint(0, 0.25, math.cos(math.pi / 4)))
    assert q.edge == 1
    assert abs(q.s - 0.75) < 1e-12
    assert abs(q.xi - math.cos(math.pi / 4)) < 1e-12


@given(st.floats(0.0, 2 * math.pi), st.floats(0.05, math.pi - 0.05))
def test_disc_chord_rotation(y, theta):
    xi = math.cos(theta)
    q = geom.billiard_step(DISC, geom.PhaseSpacePoint(0, y, xi))
    assert abs(q.xi - xi) < 1e-10
    # chord subtends 2 theta about the center
    rot = (q.s - y) % (2 * math.pi)
    assert abs(rot - 2 * theta) < 1e-9 or abs(rot - 2 * theta - 2 * math.pi) < 1e-9


def test_glancing_launch_rejected():
    with pytest.raises(geom.GlancingLaunch):
        geom.billiard_step(SQUARE, geom.PhaseSpacePoint(0, 0.5, 1.0))


def test_corner_hit_reported():
    with pytest.raises(geom.CornerHit) as info:
        geom.billiard_step(SQUARE, geom.PhaseSpacePoint(0, 0.5, 0.5 / math.sqrt(1.25)))
    assert info.value.corner == 2


DOMAINS = [SQUARE, DISC, ELLIPSE, geom.regular_polygon(5), geom.regular_polygon(6)]


@given(st.integers(0, len(DOMAINS) - 1), st.floats(0.01, 0.99), st.floats(-0.95, 0.95))
def test_billiard_reversibility(di, u, xi):
    d = DOMAINS[di]
    j = int(np.searchsorted(d.offsets, u * d.length, side="right") - 1)
    s = u * d.length - d.offsets[j]
    p = geom.PhaseSpacePoint(j, s, xi)
    try:
        q = geom.billiard_step(d, p)
        back = geom.billiard_step(d, geom.time_reverse(q))
    except (geom.CornerHit, geom.GlancingLaunch, geom.AtCorner):
        assume(False)
    assert abs(q.xi) <= 1.0
    r = geom.time_reverse(back)
    assert abs(geom.local_arclength(d, r) - geom.local_arclength(d, p)) < 1e-9
    assert abs(r.xi - p.xi) < 1e-9


@given(st.integers(0, len(DOMAINS) - 1), st.floats(0.01, 0.99), st.floats(-0.95, 0.95))
def test_billiard_chord_inside(di, u, xi):
    d = DOMAINS[di]
    j = int(np.searchsorted(d.offsets, u * d.length, side="right") - 1)
    p = geom.PhaseSpacePoint(j, u * d.length - d.offsets[j], xi)
    try:
        q = geom.billiard_step(d, p)
    except (geom.CornerHit, geom.AtCorner):
        assume(False)
    a, b = geom.billiard_position(d, p), geom.billiard_position(d, q)
    mids = a + np.linspace(0.1, 0.9, 9)[:, None] * (b - a)
    assert d.contains(mids, tol=1e-9).all()


@given(st.lists(st.floats(0.0, 2 * math.pi), min_size=3, max_size=9, unique=True))
def test_polygon_angle_sum(angles):
    angles = sorted(angles)
    gaps = np.diff(angles + [angles[0] + 2 * math.pi])
    assume(gaps.min() > 0.05 and gaps.max() < math.pi - 0.05)
    verts = [(math.cos(a), math.sin(a)) for a in angles]
    d = geom.polygon(verts)
    n = len(verts)
    assert abs(sum(c.angle for c in d.corners) - (n - 2) * math.pi) < 1e-10


# --- admissibility ----------------------------------------------------------


def test_square_inadmissible():
    for j in range(4):
        reports = geom.check_admissible(SQUARE, j)
        assert len(reports) == 2
        assert all(not r.admissible and r.condition == "ii" for r in reports)


def test_semi_ellipse_flat_edge_inadmissible():
    reports = geom.check_admissible(ELLIPSE, 0)
    assert all(not r.admissible for r in reports)


def test_pentagon_admissibility_matches_trig_oracle():
    d = geom.regular_polygon(5)
    # oracle: the line from a corner at angle 4pi/5 off the edge, measured independently
    for j in range(5):
        for r in geom.check_admissible(d, j):
            c = d.corners[r.corner].position
            others = [o.position for i, o in enumerate(d.corners) if i != r.corner]
            e = d.edges[j]
            along = (e.end - e.start) / np.linalg.norm(e.end - e.start)
            if not np.allclose(c, e.start):
                along = -along
            inward = np.array([-(e.end - e.start)[1], (e.end - e.start)[0]])
            inward /= np.linalg.norm(inward)
            th = 4 * math.pi / 5
            dirn = math.cos(th) * along + math.sin(th) * inward
            expect = [o for o in others if abs(dirn[0] * (o - c)[1] - dirn[1] * (o - c)[0]) < 1e-9]
            assert (not expect) == r.admissible
            assert r.condition == "i"


def test_curved_edge_not_flat():
    with pytest.raises(geom.NotFlat):
        geom.check_admissible(ELLIPSE, 1)


@given(
    st.integers(0, 2),
    st.floats(0, 2 * math.pi),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    st.floats(0.2, 5.0),
)
def test_admissibility_rigid_motion_invariant(di, rot, shift, scale):
    d = [SQUARE, geom.regular_polygon(5), geom.polygon([(0, 0), (3, 0), (2.5, 1), (0.5, 1.5)])][di]
    moved = d.transformed(rotation=rot, shift=shift, scale=scale)
    for j in d.flat_edges():
        a = [r.admissible for r in geom.check_admissible(d, j)]
        b = [r.admissible for r in geom.check_admissible(moved, j)]
        assert a == b


def test_corner_report_classification():
    assert [c.kind for c in geom.corner_report(geom.regular_polygon(6))] == ["obtuse"] * 6
    hexa = geom.corner_report(geom.regular_polygon(6))
    assert all(abs(c.angle - 2 * math.pi / 3) < 1e-12 for c in hexa)
    assert [c.kind for c in geom.corner_report(SQUARE)] == ["acute"] * 4
    assert len(geom.corner_report(ELLIPSE)) == 2


def test_domain_json_roundtrip(tmp_path):
    import json

    p = tmp_path / "d.json"
    p.write_text(json.dumps(ELLIPSE.to_config()))
    d = geom.load_domain(p)
    assert d.fingerprint == ELLIPSE.fingerprint
    assert abs(d.area - math.pi) < 1e-9
