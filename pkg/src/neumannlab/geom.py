"""Piecewise-smooth convex planar domains: edges, corners, billiards, admissibility.

Edges are parametrized over sigma in [0, 1] and traversed counterclockwise.
The outward normal is the unit tangent rotated by -pi/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

ANGLE_TOL = 1e-12
CORNER_HIT_REL_TOL = 1e-9
ADMISSIBLE_TOL = 1e-9


class GeometryError(ValueError):
    pass


class NotClosed(GeometryError):
    pass


class NotConvex(GeometryError):
    pass


class DegenerateCorner(GeometryError):
    pass


class BadEdgeData(GeometryError):
    pass


class AtCorner(GeometryError):
    pass


class GlancingLaunch(GeometryError):
    pass


class NotFlat(GeometryError):
    pass


class CornerHit(Exception):
    """Raised by :func:`billiard_step` when the ray lands on a corner."""

    def __init__(self, corner: int, position: np.ndarray):
        super().__init__(f"ray hits corner {corner}")
        self.corner = corner
        self.position = position


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _rot_cw(v: np.ndarray) -> np.ndarray:
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# ---------------------------------------------------------------------------
# edges
# ---------------------------------------------------------------------------


class Edge:
    kind: str = "abstract"
    flat: bool = False

    def point(self, sigma) -> np.ndarray:
        raise NotImplementedError

    def d1(self, sigma) -> np.ndarray:
        raise NotImplementedError

    def d2(self, sigma) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict[str, Any]:
        raise NotImplementedError

    def ray_hits(self, origin: np.ndarray, direction: np.ndarray) -> list[tuple[float, float]]:
        """All (ray parameter tau, edge parameter sigma) with sigma in [0, 1]."""
        raise NotImplementedError

    def transformed(self, rotation: float, shift: Sequence[float], scale: float) -> "Edge":
        raise NotImplementedError

    # generic machinery -------------------------------------------------

    @property
    def start(self) -> np.ndarray:
        return self.point(0.0)

    @property
    def end(self) -> np.ndarray:
        return self.point(1.0)

    def speed(self, sigma) -> np.ndarray:
        return np.linalg.norm(self.d1(sigma), axis=-1)

    def curvature(self, sigma) -> np.ndarray:
        d1 = self.d1(sigma)
        d2 = self.d2(sigma)
        return _cross(d1, d2) / np.linalg.norm(d1, axis=-1) ** 3

    @cached_property
    def _arclength_table(self) -> tuple[np.ndarray, np.ndarray]:
        panels = 64
        edges = np.linspace(0.0, 1.0, panels + 1)
        cum = np.zeros(panels + 1)
        for i in range(panels):
            a, b = edges[i], edges[i + 1]
            s = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
            cum[i + 1] = cum[i] + 0.5 * (b - a) * np.sum(_GL_W * self.speed(s))
        return edges, cum

    @property
    def length(self) -> float:
        return float(self._arclength_table[1][-1])

    def arclength(self, sigma) -> np.ndarray:
        """Arclength from the start of the edge to parameter sigma."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        edges, cum = self._arclength_table
        panels = len(edges) - 1
        idx = np.clip((sigma * panels).astype(int), 0, panels - 1)
        a = edges[idx]
        # integrate from the panel start to sigma
        half = 0.5 * (sigma - a)
        nodes = half[:, None] * (_GL_X[None, :] + 1.0) + a[:, None]
        part = half * np.sum(_GL_W[None, :] * self.speed(nodes.ravel()).reshape(nodes.shape), axis=1)
        return cum[idx] + part

    def sigma_at(self, s) -> np.ndarray:
        """Inverse of :meth:`arclength` (Newton from a linear guess)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        sigma = np.clip(s / self.length, 0.0, 1.0)
        for _ in range(50):
            step = (self.arclength(sigma) - s) / self.speed(sigma)
            sigma = np.clip(sigma - step, 0.0, 1.0)
            if np.max(np.abs(step)) < 1e-15:
                break
        return sigma


@dataclass(eq=False)
class LineEdge(Edge):
    p0: np.ndarray
    p1: np.ndarray
    kind: str = field(default="line", init=False)
    flat: bool = field(default=True, init=False)

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        if self.p0.shape != (2,) or self.p1.shape != (2,) or np.linalg.norm(self.p1 - self.p0) <= 0:
            raise BadEdgeData("line edge needs two distinct 2D endpoints")

    def point(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return self.p0 + sigma[..., None] * (self.p1 - self.p0)

    def d1(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return np.broadcast_to(self.p1 - self.p0, sigma.shape + (2,)).copy()

    def d2(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return np.zeros(sigma.shape + (2,))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def arclength(self, sigma):
        return np.atleast_1d(np.asarray(sigma, dtype=float)) * self.length

    def sigma_at(self, s):
        return np.atleast_1d(np.asarray(s, dtype=float)) / self.length

    def ray_hits(self, origin, direction):
        e = self.p1 - self.p0
        den = _cross(direction, -e)
        if abs(den) < 1e-300:
            return []
        rhs = self.p0 - origin
        tau = _cross(rhs, -e) / den
        sigma = _cross(direction, rhs) / den
        return [(float(tau), float(sigma))]

    def to_config(self):
        return {"kind": "line", "start": self.p0.tolist(), "end": self.p1.tolist()}

    def transformed(self, rotation, shift, scale):
        return LineEdge(_transform(self.p0, rotation, shift, scale), _transform(self.p1, rotation, shift, scale))


@dataclass(eq=False)
class EllipticArcEdge(Edge):
    """Arc of the ellipse c + R(rot) (a cos th, b sin th), th from theta0 to theta1 (increasing)."""

    center: np.ndarray
    a: float
    b: float
    theta0: float
    theta1: float
    rotation: float = 0.0
    kind: str = field(default="elliptic-arc", init=False)
    flat: bool = field(default=False, init=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (2,) or not (self.a > 0 and self.b > 0):
            raise BadEdgeData("arc needs a 2D center and positive semi-axes")
        if not (self.theta1 > self.theta0) or self.theta1 - self.theta0 > 2 * math.pi + 1e-12:
            raise BadEdgeData("arc angles must increase (counterclockwise) by at most 2 pi")
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        self._R = np.array([[c, -s], [s, c]])

    @property
    def span(self) -> float:
        return self.theta1 - self.theta0

    def _theta(self, sigma):
        return self.theta0 + np.asarray(sigma, dtype=float) * self.span

    def point(self, sigma):
        th = self._theta(sigma)
        local = np.stack([self.a * np.cos(th), self.b * np.sin(th)], axis=-1)
        return self.center + local @ self._R.T

    def d1(self, sigma):
        th = self._theta(sigma)
        local = np.stack([-self.a * np.sin(th), self.b * np.cos(th)], axis=-1) * self.span
        return local @ self._R.T

    def d2(self, sigma):
        th = self._theta(sigma)
        local = np.stack([-self.a * np.cos(th), -self.b * np.sin(th)], axis=-1) * self.span**2
        return local @ self._R.T

    def ray_hits(self, origin, direction):
        o = (origin - self.center) @ self._R
        d = direction @ self._R
        o = o / np.array([self.a, self.b])
        d = d / np.array([self.a, self.b])
        A = d @ d
        B = 2 * (o @ d)
        C = o @ o - 1.0
        disc = B * B - 4 * A * C
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        # numerically stable roots
        q = -0.5 * (B + math.copysign(sq, B)) if B != 0 else -0.5 * sq
        roots = {q / A}
        if q != 0:
            roots.add(C / q)
        out = []
        for tau in roots:
            p = o + tau * d
            th = math.atan2(p[1], p[0])
            rel = (th - self.theta0) % (2 * math.pi)
            if rel > self.span + 1e-13 and 2 * math.pi - rel < 1e-13:
                rel -= 2 * math.pi
            out.append((float(tau), float(rel / self.span)))
        return out

    def to_config(self):
        cfg = {
            "kind": "elliptic-arc",
            "center": self.center.tolist(),
            "a": self.a,
            "b": self.b,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }
        if self.rotation:
            cfg["rotation"] = self.rotation
        return cfg

    def transformed(self, rotation, shift, scale):
        return EllipticArcEdge(
            _transform(self.center, rotation, shift, scale),
            self.a * scale,
            self.b * scale,
            self.theta0,
            self.theta1,
            self.rotation + rotation,
        )


class CircularArcEdge(EllipticArcEdge):
    def __init__(self, center, radius: float, theta0: float, theta1: float):
        super().__init__(center, radius, radius, theta0, theta1)
        self.kind = "circular-arc"

    @property
    def radius(self) -> float:
        return self.a

    @property
    def length(self) -> float:
        return self.a * self.span

    def arclength(self, sigma):
        return np.atleast_1d(np.asarray(sigma, dtype=float)) * self.length

    def sigma_at(self, s):
        return np.atleast_1d(np.asarray(s, dtype=float)) / self.length

    def to_config(self):
        return {
            "kind": "circular-arc",
            "center": self.center.tolist(),
            "radius": self.a,
            "theta0": self.theta0,
            "theta1": self.theta1,
        }

    def transformed(self, rotation, shift, scale):
        return CircularArcEdge(
            _transform(self.center, rotation, shift, scale),
            self.a * scale,
            self.theta0 + rotation,
            self.theta1 + rotation,
        )


@dataclass(eq=False)
class PolynomialEdge(Edge):
    """x(sigma) = sum cx[i] sigma^i, y(sigma) = sum cy[i] sigma^i."""

    cx: np.ndarray
    cy: np.ndarray
    kind: str = field(default="polynomial", init=False)
    flat: bool = field(default=False, init=False)

    def __post_init__(self):
        self.cx = np.trim_zeros(np.asarray(self.cx, dtype=float), "b")
        self.cy = np.trim_zeros(np.asarray(self.cy, dtype=float), "b")
        if self.cx.size == 0:
            self.cx = np.zeros(1)
        if self.cy.size == 0:
            self.cy = np.zeros(1)
        P = np.polynomial.polynomial
        self._px, self._py = P.Polynomial(self.cx), P.Polynomial(self.cy)
        self._dx, self._dy = self._px.deriv(), self._py.deriv()
        self._ddx, self._ddy = self._dx.deriv(), self._dy.deriv()
        probe = np.linspace(0, 1, 257)
        if np.min(self.speed(probe)) <= 1e-12:
            raise BadEdgeData("polynomial edge has a vanishing tangent")
        self.flat = bool(np.max(np.abs(self.curvature(probe))) < 1e-14)

    def point(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return np.stack([self._px(sigma), self._py(sigma)], axis=-1)

    def d1(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return np.stack([self._dx(sigma) + 0 * sigma, self._dy(sigma) + 0 * sigma], axis=-1)

    def d2(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return np.stack([self._ddx(sigma) + 0 * sigma, self._ddy(sigma) + 0 * sigma], axis=-1)

    def ray_hits(self, origin, direction):
        n = np.array([-direction[1], direction[0]])
        poly = n[0] * (self._px - origin[0]) + n[1] * (self._py - origin[1])
        out = []
        if poly.degree() < 1:
            return out
        for r in poly.roots():
            if abs(r.imag) > 1e-9:
                continue
            sigma = float(r.real)
            # polish with Newton on the real polynomial
            dp = poly.deriv()
            for _ in range(5):
                d = dp(sigma)
                if d == 0:
                    break
                sigma -= poly(sigma) / d
            p = self.point(sigma)
            tau = float((p - origin) @ direction / (direction @ direction))
            out.append((tau, sigma))
        return out

    def to_config(self):
        return {"kind": "polynomial", "x": self.cx.tolist(), "y": self.cy.tolist()}

    def transformed(self, rotation, shift, scale):
        c, s = math.cos(rotation), math.sin(rotation)
        cx = scale * (c * _pad(self.cx, self.cy) - s * _pad(self.cy, self.cx))
        cy = scale * (s * _pad(self.cx, self.cy) + c * _pad(self.cy, self.cx))
        cx[0] += shift[0]
        cy[0] += shift[1]
        return PolynomialEdge(cx, cy)


def _pad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(max(a.size, b.size))
    out[: a.size] = a
    return out


def _transform(p, rotation, shift, scale):
    c, s = math.cos(rotation), math.sin(rotation)
    p = np.asarray(p, dtype=float)
    return scale * np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]]) + np.asarray(shift, dtype=float)


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Corner:
    position: np.ndarray
    angle: float
    incoming: int
    outgoing: int

    @property
    def obtuse(self) -> bool:
        return self.angle > math.pi / 2


@dataclass(frozen=True)
class PhaseSpacePoint:
    edge: int
    s: float
    xi: float

    @property
    def glancing(self) -> bool:
        return abs(abs(self.xi) - 1.0) < 1e-12


@dataclass(frozen=True, eq=False)
class Domain:
    edges: tuple[Edge, ...]
    corners: tuple[Corner, ...]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    @cached_property
    def offsets(self) -> np.ndarray:
        """Global arclength at the start of each edge."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)])

    @property
    def length(self) -> float:
        return float(self.offsets[-1])

    @property
    def smooth(self) -> bool:
        return len(self.corners) == 0

    @cached_property
    def area(self) -> float:
        # shoelace through the boundary: 1/2 int x dy - y dx
        total = 0.0
        x, w = np.polynomial.legendre.leggauss(64)
        for e in self.edges:
            for a in np.linspace(0, 1, 17)[:-1]:
                s = a + (x + 1) / 32
                p, d = e.point(s), e.d1(s)
                total += 0.5 * np.sum(w / 32 * _cross(p, d))
        return float(total)

    @cached_property
    def centroid(self) -> np.ndarray:
        x, w = np.polynomial.legendre.leggauss(64)
        acc = np.zeros(2)
        for e in self.edges:
            for a in np.linspace(0, 1, 17)[:-1]:
                s = a + (x + 1) / 32
                p, d = e.point(s), e.d1(s)
                # int x dA = 1/2 int x^2 dy ; int y dA = -1/2 int y^2 dx
                acc[0] += 0.5 * np.sum(w / 32 * p[:, 0] ** 2 * d[:, 1])
                acc[1] -= 0.5 * np.sum(w / 32 * p[:, 1] ** 2 * d[:, 0])
        return acc / self.area

    @cached_property
    def diameter(self) -> float:
        pts = self.sample(2048)
        diff = pts[:, None, :] - pts[None, ::8, :]
        return float(np.max(np.linalg.norm(diff, axis=-1)))

    def sample(self, n: int) -> np.ndarray:
        y = np.linspace(0, self.length, n, endpoint=False)
        return self.position(y)

    def locate(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Edge index and local arclength for global arclength y (mod L)."""
        y = np.mod(np.atleast_1d(np.asarray(y, dtype=float)), self.length)
        idx = np.searchsorted(self.offsets, y, side="right") - 1
        idx = np.clip(idx, 0, len(self.edges) - 1)
        return idx, y - self.offsets[idx]

    def position(self, y) -> np.ndarray:
        idx, s = self.locate(y)
        out = np.empty(idx.shape + (2,))
        for j, e in enumerate(self.edges):
            m = idx == j
            if m.any():
                out[m] = e.point(e.sigma_at(s[m]))
        return out

    def flat_edges(self) -> list[int]:
        return [j for j, e in enumerate(self.edges) if e.flat]

    def corner_between(self, incoming: int, outgoing: int) -> int | None:
        for i, c in enumerate(self.corners):
            if c.incoming == incoming and c.outgoing == outgoing:
                return i
        return None

    def edge_corners(self, j: int) -> tuple[int | None, int | None]:
        """Corner indices at the start and at the end of edge j."""
        start = end = None
        for i, c in enumerate(self.corners):
            if c.outgoing == j:
                start = i
            if c.incoming == j:
                end = i
        return start, end

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        """Inside test for convex domains via signed distance."""
        return self.signed_distance(pts) < -tol

    def signed_distance(self, pts) -> np.ndarray:
        """Negative inside, positive outside (distance to the boundary curve)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dist, _, _ = self.nearest(pts)
        inside = self._inside_convex(pts)
        return np.where(inside, -dist, dist)

    def _inside_convex(self, pts: np.ndarray) -> np.ndarray:
        samples = self._dense
        t = np.roll(samples, -1, axis=0) - samples
        ok = np.ones(len(pts), dtype=bool)
        for chunk in range(0, len(samples), 512):
            a = samples[chunk : chunk + 512]
            d = t[chunk : chunk + 512]
            c = _cross(d[None, :, :], pts[:, None, :] - a[None, :, :])
            ok &= np.all(c > -1e-12, axis=1)
        return ok

    @cached_property
    def _dense(self) -> np.ndarray:
        pts = []
        for e in self.edges:
            n = max(8, int(np.ceil(e.length * 400)))
            pts.append(e.point(np.linspace(0, 1, n, endpoint=False)))
        return np.concatenate(pts)

    def nearest(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distance, edge index, edge parameter of the nearest boundary point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        best = np.full(len(pts), np.inf)
        best_edge = np.zeros(len(pts), dtype=int)
        best_sigma = np.zeros(len(pts))
        for j, e in enumerate(self.edges):
            if isinstance(e, LineEdge):
                d = e.p1 - e.p0
                sig = np.clip(((pts - e.p0) @ d) / (d @ d), 0, 1)
            else:
                grid = np.linspace(0, 1, 257)
                gp = e.point(grid)
                dd = np.linalg.norm(pts[:, None, :] - gp[None, :, :], axis=-1)
                sig = grid[np.argmin(dd, axis=1)]
                for _ in range(30):
                    p, d1, d2 = e.point(sig), e.d1(sig), e.d2(sig)
                    r = p - pts
                    g = np.sum(r * d1, axis=-1)
                    hgs = np.sum(d1 * d1, axis=-1) + np.sum(r * d2, axis=-1)
                    step = g / np.where(np.abs(hgs) > 1e-300, hgs, 1.0)
                    sig = np.clip(sig - step, 0, 1)
                    if np.max(np.abs(step)) < 1e-14:
                        break
            dist = np.linalg.norm(e.point(sig) - pts, axis=-1)
            m = dist < best
            best[m], best_edge[m], best_sigma[m] = dist[m], j, sig[m]
        return best, best_edge, best_sigma

    def to_config(self) -> dict[str, Any]:
        return {"edges": [e.to_config() for e in self.edges]}

    def transformed(self, rotation: float = 0.0, shift=(0.0, 0.0), scale: float = 1.0) -> "Domain":
        return build_domain({"edges": [e.transformed(rotation, shift, scale).to_config() for e in self.edges]})

    @cached_property
    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def edge_from_config(cfg: dict[str, Any]) -> Edge:
    kind = cfg.get("kind")
    try:
        if kind in ("line", "line-segment"):
            return LineEdge(cfg["start"], cfg["end"])
        if kind == "circular-arc":
            return CircularArcEdge(cfg["center"], float(cfg["radius"]), float(cfg["theta0"]), float(cfg["theta1"]))
        if kind == "elliptic-arc":
            return EllipticArcEdge(
                cfg["center"],
                float(cfg["a"]),
                float(cfg["b"]),
                float(cfg["theta0"]),
                float(cfg["theta1"]),
                float(cfg.get("rotation", 0.0)),
            )
        if kind in ("polynomial", "parametric-polynomial"):
            return PolynomialEdge(cfg["x"], cfg["y"])
    except (KeyError, TypeError) as exc:
        raise BadEdgeData(f"bad data for {kind!r} edge: {exc}") from exc
    raise BadEdgeData(f"unknown edge kind {kind!r}")


def _turning(t_in: np.ndarray, t_out: np.ndarray) -> float:
    return math.atan2(_cross(t_in, t_out), float(t_in @ t_out))


def build_domain(config: dict[str, Any]) -> Domain:
    """Validate an edge list (or a preset) and return an immutable :class:`Domain`."""
    if "preset" in config:
        return preset(config["preset"], **config.get("params", {}))
    raw = config.get("edges")
    if not isinstance(raw, list) or not raw:
        raise BadEdgeData("config needs a nonempty 'edges' list")
    edges = [edge_from_config(c) for c in raw]
    scale = sum(e.length for e in edges)
    tol = 1e-9 * scale

    if len(edges) == 1:
        e = edges[0]
        if np.linalg.norm(e.end - e.start) > tol:
            raise NotClosed("single edge does not close")
        if abs(_turning(e.d1(1.0), e.d1(0.0))) > 1e-9:
            raise DegenerateCorner("a single closed edge must be smooth")
        _check_edge_convex(e, 0)
        return Domain(tuple(edges), ())
    if len(edges) < 2:
        raise NotClosed("need at least two edges")

    corners = []
    total_turn = 0.0
    for j, e in enumerate(edges):
        nxt = (j + 1) % len(edges)
        if np.linalg.norm(e.end - edges[nxt].start) > tol:
            raise NotClosed(f"edge {j} does not end where edge {nxt} starts")
        _check_edge_convex(e, j)
        total_turn += _edge_turning(e)
        t_in = e.d1(1.0)
        t_out = edges[nxt].d1(0.0)
        turn = _turning(t_in, t_out)
        alpha = math.pi - turn
        if abs(turn) < ANGLE_TOL or abs(alpha) < ANGLE_TOL:
            raise DegenerateCorner(f"corner after edge {j} has angle {alpha}")
        if turn < 0:
            raise NotConvex(f"reflex corner after edge {j} (angle {alpha})")
        total_turn += turn
        corners.append(Corner(np.array(edges[nxt].start, dtype=float), alpha, j, nxt))
    if abs(total_turn - 2 * math.pi) > 1e-8:
        raise NotConvex(f"total turning {total_turn} != 2 pi (boundary not simple/convex)")
    # put corner c_j at the start of edge j
    corners.sort(key=lambda c: c.outgoing)
    return Domain(tuple(edges), tuple(corners))


def _edge_turning(e: Edge) -> float:
    if e.flat:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(64)
    total = 0.0
    for a in np.linspace(0, 1, 9)[:-1]:
        s = a + (x + 1) / 16
        total += np.sum(w / 16 * e.curvature(s) * e.speed(s))
    return float(total)


def _check_edge_convex(e: Edge, j: int) -> None:
    if e.flat:
        return
    kappa = e.curvature(np.linspace(0, 1, 513))
    if np.min(kappa) < -1e-12:
        raise NotConvex(f"edge {j} has negative curvature")


def load_domain(path: str | Path) -> Domain:
    return build_domain(json.loads(Path(path).read_text()))


def polygon(vertices: Sequence[Sequence[float]]) -> Domain:
    v = [list(map(float, p)) for p in vertices]
    return build_domain({"edges": [{"kind": "line", "start": v[i], "end": v[(i + 1) % len(v)]} for i in range(len(v))]})


def unit_square(side: float = 1.0) -> Domain:
    return polygon([(0, 0), (side, 0), (side, side), (0, side)])


def rectangle(a: float, b: float) -> Domain:
    return polygon([(0, 0), (a, 0), (a, b), (0, b)])


def unit_disc(radius: float = 1.0) -> Domain:
    return build_domain({"edges": [{"kind": "circular-arc", "center": [0, 0], "radius": radius, "theta0": 0.0, "theta1": 2 * math.pi}]})


def semi_ellipse(a: float = 2.0, b: float = 1.0) -> Domain:
    """Upper half of x^2/a^2 + y^2/b^2 <= 1; edge 0 is the flat major axis."""
    return build_domain(
        {
            "edges": [
                {"kind": "line", "start": [-a, 0.0], "end": [a, 0.0]},
                {"kind": "elliptic-arc", "center": [0, 0], "a": a, "b": b, "theta0": 0.0, "theta1": math.pi},
            ]
        }
    )


def regular_polygon(n: int, circumradius: float = 1.0) -> Domain:
    """Regular n-gon with a horizontal bottom edge (edge 0)."""
    start = -math.pi / 2 - math.pi / n
    verts = [(circumradius * math.cos(start + 2 * math.pi * i / n), circumradius * math.sin(start + 2 * math.pi * i / n)) for i in range(n)]
    return polygon(verts)


PRESETS = {
    "square": unit_square,
    "rectangle": rectangle,
    "disc": unit_disc,
    "semi-ellipse": semi_ellipse,
    "regular-polygon": regular_polygon,
}


def preset(name: str, **params) -> Domain:
    try:
        return PRESETS[name](**params)
    except KeyError:
        raise BadEdgeData(f"unknown preset {name!r}") from None


# ---------------------------------------------------------------------------
# boundary geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPoint:
    position: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: float
    edge: int
    sigma: float


def boundary_point(domain: Domain, y: float, side: str | None = None) -> BoundaryPoint:
    """Frame at global arclength y; ``side`` in {'before', 'after'} selects one-sided limits at corners."""
    L = domain.length
    y = float(y) % L
    tol = CORNER_HIT_REL_TOL * L
    if domain.corners:
        for j in range(len(domain.edges)):
            start = domain.offsets[j]
            for cand in (start, start + L, start - L):
                if abs(y - cand) <= tol:
                    if side is None:
                        raise AtCorner(f"y={y} is at the corner starting edge {j}")
                    if side == "after":
                        return _frame(domain, j, 0.0)
                    if side == "before":
                        prev = (j - 1) % len(domain.edges)
                        return _frame(domain, prev, 1.0)
                    raise ValueError("side must be 'before' or 'after'")
    idx, s = domain.locate(y)
    e = domain.edges[int(idx[0])]
    return _frame(domain, int(idx[0]), float(e.sigma_at(s)[0]))


def _frame(domain: Domain, j: int, sigma: float) -> BoundaryPoint:
    e = domain.edges[j]
    d1 = e.d1(sigma)
    t = d1 / np.linalg.norm(d1)
    return BoundaryPoint(e.point(sigma), t, _rot_cw(t), float(e.curvature(sigma)), j, sigma)


def local_arclength(domain: Domain, p: PhaseSpacePoint) -> float:
    return float(domain.offsets[p.edge] + p.s)


# ---------------------------------------------------------------------------
# billiards
# ---------------------------------------------------------------------------


def billiard_step(domain: Domain, p: PhaseSpacePoint, glancing_tol: float = 1e-12) -> PhaseSpacePoint:
    """One bounce of the billiard map in (edge, arclength, tangential frequency) coordinates."""
    if abs(p.xi) >= 1.0 - glancing_tol:
        raise GlancingLaunch(f"|xi| = {abs(p.xi)} is glancing")
    e = domain.edges[p.edge]
    sigma0 = float(e.sigma_at(p.s)[0])
    L = domain.length
    tol = CORNER_HIT_REL_TOL * L
    frame = _frame(domain, p.edge, sigma0)
    for c in domain.corners:
        if np.linalg.norm(frame.position - c.position) <= tol:
            raise AtCorner("launch point is a corner")
    origin = frame.position
    direction = p.xi * frame.tangent - math.sqrt(1.0 - p.xi**2) * frame.normal

    best = (math.inf, -1, 0.0)
    for j, edge in enumerate(domain.edges):
        for tau, sigma in edge.ray_hits(origin, direction):
            if sigma < -1e-12 or sigma > 1 + 1e-12:
                continue
            if tau <= 1e-10 * L:
                continue
            if tau < best[0]:
                best = (tau, j, min(max(sigma, 0.0), 1.0))
    tau, j, sigma = best
    if j < 0:
        raise GeometryError("ray left the domain without hitting the boundary")
    hit = origin + tau * direction
    for ci, c in enumerate(domain.corners):
        if np.linalg.norm(hit - c.position) <= tol:
            raise CornerHit(ci, hit)
    edge = domain.edges[j]
    sigma = _polish_sigma(edge, hit, sigma)
    f = _frame(domain, j, sigma)
    reflected = direction - 2 * (direction @ f.normal) * f.normal
    xi_new = float(np.clip(reflected @ f.tangent, -1.0, 1.0))
    s_new = float(edge.arclength(sigma)[0])
    return PhaseSpacePoint(j, s_new, xi_new)


def _polish_sigma(edge: Edge, target: np.ndarray, sigma: float) -> float:
    for _ in range(8):
        r = edge.point(sigma) - target
        d1 = edge.d1(sigma)
        step = float(r @ d1) / float(d1 @ d1)
        sigma = min(max(sigma - step, 0.0), 1.0)
        if abs(step) < 1e-16:
            break
    return sigma


def time_reverse(p: PhaseSpacePoint) -> PhaseSpacePoint:
    return PhaseSpacePoint(p.edge, p.s, -p.xi)


def billiard_position(domain: Domain, p: PhaseSpacePoint) -> np.ndarray:
    e = domain.edges[p.edge]
    return e.point(e.sigma_at(p.s)[0])


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    edge: int
    corner: int
    angle: float
    condition: str  # "i" (obtuse) or "ii" (alpha <= pi/2)
    direction: np.ndarray
    hits: tuple[int, ...]

    @property
    def admissible(self) -> bool:
        return not self.hits


def check_admissible(domain: Domain, j: int, tol: float = ADMISSIBLE_TOL) -> list[AdmissibilityReport]:
    """Corner-line test for the flat edge j, one report per adjacent corner.

    The direction of L_j is measured in a frame with the edge along the positive
    real axis from the corner and the interior in the upper half plane.
    """
    e = domain.edges[j]
    if not e.flat:
        raise NotFlat(f"edge {j} is not flat")
    reports = []
    along = (e.end - e.start) / np.linalg.norm(e.end - e.start)
    inward = -_rot_cw(along)
    scale = domain.length
    for ci, xaxis in zip(domain.edge_corners(j), (along, -along)):
        if ci is None:
            continue
        c = domain.corners[ci]
        alpha = c.angle
        if alpha > math.pi / 2:
            theta, cond = 2 * (math.pi - alpha), "i"
        else:
            theta, cond = 2 * alpha, "ii"
        d = math.cos(theta) * xaxis + math.sin(theta) * inward
        hits = []
        for oi, other in enumerate(domain.corners):
            if oi == ci:
                continue
            r = other.position - c.position
            if abs(_cross(d, r)) <= tol * max(1.0, scale):
                hits.append(oi)
        reports.append(AdmissibilityReport(j, ci, alpha, cond, d, tuple(hits)))
    return reports


def is_admissible(domain: Domain) -> bool:
    return all(r.admissible for j in domain.flat_edges() for r in check_admissible(domain, j))


@dataclass(frozen=True)
class CornerInfo:
    index: int
    position: tuple[float, float]
    angle: float
    kind: str  # "obtuse" or "acute"


def corner_report(domain: Domain) -> list[CornerInfo]:
    return [
        CornerInfo(i, (float(c.position[0]), float(c.position[1])), c.angle, "obtuse" if c.obtuse else "acute")
        for i, c in enumerate(domain.corners)
    ]
