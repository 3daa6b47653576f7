"""Neumann eigenvalues as the wavenumbers where I - N(k) becomes singular.

The smallest singular value of I - N(k) dips to (numerically) zero at every
interior Neumann eigen-wavenumber. Scans sample it on a k grid, refinement
minimizes its square (smooth near a simple dip), and the right singular vector
is the Dirichlet trace of the eigenfunction.

Closed-form oracles cover the rectangle and the disc. The half ellipse with a
flat major axis separates in elliptic coordinates, which gives a third,
semi-analytic oracle through Mathieu functions.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar
from scipy.special import jnp_zeros, jv, jvp, roots_legendre

from . import bie
from .geom import Domain

log = logging.getLogger(__name__)

DIP_TOL = 1e-4
CLUSTER_FACTOR = 10.0
CLUSTER_FLOOR = 1e-8
DENSE_SVD_LIMIT = 1200


class EigError(ValueError):
    pass


class ResolutionTooCoarse(EigError):
    pass


class NoDipInBracket(EigError):
    pass


class DegenerateCluster(EigError):
    pass


class BadIndices(EigError):
    pass


class ResolutionWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EigenMode:
    k: float
    mesh: bie.BoundaryMesh
    trace: np.ndarray
    normalized: bool = False
    scale: float = 1.0
    residuals: dict[str, float] = field(default_factory=dict)
    provenance: str = "solver"
    label: str = ""
    cluster: bool = False
    sigma: float = float("nan")
    exact: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def h(self) -> float:
        return 1.0 / self.k

    @property
    def domain(self) -> Domain:
        return self.mesh.domain

    def field(self, X) -> np.ndarray:
        """phi at points of the closed domain (closed form when available)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.exact is not None:
            return self.scale * self.exact(X)
        return bie.evaluate_field(self.mesh, self.trace, X, k=self.k)

    def boundary_norm(self) -> float:
        return float(np.sqrt(np.sum(self.mesh.weights * np.abs(self.trace) ** 2)))

    def scaled(self, c: complex) -> "EigenMode":
        return EigenMode(
            self.k,
            self.mesh,
            self.trace * c,
            self.normalized,
            self.scale * c,
            dict(self.residuals),
            self.provenance,
            self.label,
            self.cluster,
            self.sigma,
            self.exact,
        )


@dataclass
class SpectrumScan:
    k: np.ndarray
    sigma: np.ndarray  # (len(k), 2): two smallest singular values
    candidates: list[tuple[float, float]]
    threshold: float

    @property
    def sigma_min(self) -> np.ndarray:
        return self.sigma[:, 0] if len(self.k) else np.empty(0)


# ---------------------------------------------------------------------------
# singular values
# ---------------------------------------------------------------------------


def smallest_singular(B: np.ndarray, m: int = 2, iters: int = 6, seed: int = 0):
    """m smallest singular values of B and their right singular vectors.

    Dense SVD for small B; otherwise block inverse iteration on B^H B with one
    LU factorization followed by a Rayleigh-Ritz step.
    """
    n = B.shape[0]
    if n <= DENSE_SVD_LIMIT:
        _, s, Vh = np.linalg.svd(B)
        return s[::-1][:m], Vh[::-1][:m].conj().T
    lu = sla.lu_factor(B, check_finite=False)
    rng = np.random.default_rng(seed)
    p = m + 2
    X = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    X, _ = np.linalg.qr(X)
    for _ in range(iters):
        Y = sla.lu_solve(lu, X, trans=2, check_finite=False)
        X, _ = np.linalg.qr(sla.lu_solve(lu, Y, check_finite=False))
    _, s, Vh = np.linalg.svd(B @ X, full_matrices=False)
    V = X @ Vh.conj().T
    order = np.argsort(s)
    return s[order][:m], V[:, order][:, :m]


def operator_at(domain: Domain, k: float, nodes_per_wavelength: float = 12.0, p: float = 6.0, **mesh_kw):
    mesh = bie.build_mesh(domain, k, nodes_per_wavelength=nodes_per_wavelength, p=p, **mesh_kw)
    return bie.assemble_operator(mesh)


def singular_values_at(domain: Domain, k: float, m: int = 2, **kw) -> np.ndarray:
    op = operator_at(domain, k, **kw)
    B = np.eye(op.mesh.n) - op.matrix
    return smallest_singular(B, m)[0]


# ---------------------------------------------------------------------------
# scan and refinement
# ---------------------------------------------------------------------------


def weyl_count(area: float, perimeter: float, K: float) -> float:
    """Two-term Neumann Weyl estimate #{k_j <= K}."""
    return area * K * K / (4 * math.pi) + perimeter * K / (4 * math.pi)


def weyl_spacing(area: float, k: float) -> float:
    return 2 * math.pi / (area * k)


def scan_spectrum(
    domain: Domain,
    k_range: tuple[float, float],
    resolution: float | int,
    nodes_per_wavelength: float = 12.0,
    p: float = 6.0,
    threshold: float = 0.25,
    strict: bool = False,
) -> SpectrumScan:
    """Sample the two smallest singular values of I - N(k) on a grid.

    ``resolution`` is the grid step when it is a float and the number of grid
    points when it is an int. Candidates are interior local minima of the
    smallest singular value below ``threshold``; each comes with the bracket
    formed by its grid neighbours.
    """
    kmin, kmax = map(float, k_range)
    if not kmax > kmin:
        return SpectrumScan(np.empty(0), np.empty((0, 2)), [], threshold)
    if isinstance(resolution, (int, np.integer)):
        ks = np.linspace(kmin, kmax, int(resolution))
    else:
        ks = np.arange(kmin, kmax + 0.5 * resolution, float(resolution))
    step = float(ks[1] - ks[0]) if len(ks) > 1 else float("inf")
    spacing = weyl_spacing(domain.area, kmax)
    if step > 0.5 * spacing:
        msg = f"k step {step:.3g} exceeds half the Weyl spacing {spacing:.3g} at k={kmax:.3g}"
        if strict:
            raise ResolutionTooCoarse(msg)
        warnings.warn(msg, ResolutionWarning, stacklevel=2)
    sig = np.array([singular_values_at(domain, k, 2, nodes_per_wavelength=nodes_per_wavelength, p=p) for k in ks])
    s = sig[:, 0]
    cands = []
    for i in range(1, len(ks) - 1):
        if s[i] <= s[i - 1] and s[i] < s[i + 1] and s[i] < threshold:
            cands.append((float(ks[i - 1]), float(ks[i + 1])))
    return SpectrumScan(ks, sig, cands, threshold)


def _sigma_sq(domain, k, kw):
    return float(singular_values_at(domain, k, 1, **kw)[0] ** 2)


def _parabolic_polish(f, k0: float, step: float, tol: float, max_iter: int = 12) -> float:
    """Minimize a locally quadratic f by repeated three-point parabola fits."""
    pts = {k0 - step: f(k0 - step), k0: f(k0), k0 + step: f(k0 + step)}
    for _ in range(max_iter):
        best = sorted(pts, key=pts.get)[:3]
        x = np.array(best)
        y = np.array([pts[b] for b in best])
        A = np.vander(x - x[0], 3)
        c2, c1, _ = np.linalg.solve(A, y)
        if c2 <= 0:
            xn = x[0] - math.copysign(step, c1)
        else:
            xn = x[0] - c1 / (2 * c2)
        if abs(xn - x[0]) < tol:
            return float(xn)
        pts[float(xn)] = f(float(xn))
    return float(min(pts, key=pts.get))


def refine_mode(
    domain: Domain,
    bracket: tuple[float, float],
    nodes_per_wavelength: float = 12.0,
    p: float = 6.0,
    dip_tol: float = DIP_TOL,
    rtol: float = 1e-9,
    normalize_method: str = "auto",
    polish: bool = False,
    certify: bool = True,
) -> list[EigenMode]:
    """Locate the eigen-wavenumber in ``bracket`` and extract its trace(s).

    Returns one mode, or two when the two smallest singular values are both
    tiny (a degenerate or nearly degenerate pair). ``polish=True`` skips the
    golden-section stage and runs parabolic steps from the bracket midpoint,
    which is much cheaper when the bracket comes from an accurate seed.
    """
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise NoDipInBracket("empty bracket")
    kw = dict(nodes_per_wavelength=nodes_per_wavelength, p=p)
    f = lambda k: _sigma_sq(domain, k, kw)  # noqa: E731
    mid = 0.5 * (lo + hi)
    if polish:
        kstar = _parabolic_polish(f, mid, 0.25 * (hi - lo), rtol * mid)
    else:
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": rtol * mid})
        kstar = float(res.x)
    op = operator_at(domain, kstar, **kw)
    B = np.eye(op.mesh.n) - op.matrix
    s, V = smallest_singular(B, 3)
    edge_hit = min(kstar - lo, hi - kstar) < 1e-3 * (hi - lo)
    if s[0] > dip_tol or (edge_hit and not polish):
        raise NoDipInBracket(f"no dip in [{lo}, {hi}]: min sigma {s[0]:.3g} at k={kstar:.12g}")
    tiny = s < CLUSTER_FACTOR * s[0] + CLUSTER_FLOOR
    if tiny[2]:
        raise DegenerateCluster(f"more than two tiny singular values at k={kstar:.12g}")
    count = 2 if tiny[1] else 1
    modes = []
    for i in range(count):
        m = EigenMode(kstar, op.mesh, gauge_fix(V[:, i]), sigma=float(s[i]), cluster=count == 2)
        m.residuals["jumps"] = op.jumps_residual(m.trace)
        modes.append(m)
    if count == 2:
        modes = _split_pair(op, modes)
    out = []
    for m in modes:
        m = normalize(m, method=normalize_method)
        if certify:
            m.residuals.update(mode_residuals(m, operator=op))
        out.append(m)
    return out


def _split_pair(op: bie.LayerOperator, modes: list[EigenMode]) -> list[EigenMode]:
    """Rotate a degenerate pair so each member is real up to one global phase."""
    V = np.stack([m.trace for m in modes], axis=1)
    # real structure: choose the basis that diagonalizes Re/Im mixing
    G = np.real(V.conj().T @ (V * op.mesh.weights[:, None]))
    Vr = V @ np.linalg.inv(np.linalg.cholesky(G).conj().T)
    out = []
    for i in range(2):
        m = modes[i]
        m.trace = gauge_fix(Vr[:, i])
        m.residuals["jumps"] = op.jumps_residual(m.trace)
        out.append(m)
    return out


def gauge_fix(u: np.ndarray) -> np.ndarray:
    """Rotate so the largest-magnitude entry is real and positive."""
    u = np.asarray(u, dtype=complex)
    i = int(np.argmax(np.abs(u)))
    if abs(u[i]) == 0:
        return u
    return u * (abs(u[i]) / u[i])


def solve_range(
    domain: Domain,
    k_range: tuple[float, float],
    resolution: float | int,
    nodes_per_wavelength: float = 12.0,
    p: float = 6.0,
    **refine_kw,
) -> list[EigenMode]:
    """scan_spectrum followed by refine_mode on each candidate; sorted by k."""
    scan = scan_spectrum(domain, k_range, resolution, nodes_per_wavelength, p)
    modes: list[EigenMode] = []
    for br in scan.candidates:
        try:
            modes.extend(refine_mode(domain, br, nodes_per_wavelength, p, **refine_kw))
        except NoDipInBracket as exc:
            log.info("discarded candidate %s: %s", br, exc)
    modes.sort(key=lambda m: m.k)
    return modes


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def rellich_mass(mesh: bie.BoundaryMesh, u: np.ndarray, k: float, origin=None) -> float:
    """||phi||^2 from the Neumann trace identity

    2 k^2 int |phi|^2 = int_bdry <x - x0, nu> (k^2 |u|^2 - |u_s|^2).
    """
    x0 = mesh.domain.centroid if origin is None else np.asarray(origin, dtype=float)
    us, _ = bie.trace_derivatives(mesh, np.asarray(u, dtype=complex))
    xn = np.sum((mesh.points - x0) * mesh.normals, axis=1)
    integrand = xn * (k * k * np.abs(u) ** 2 - np.abs(us) ** 2)
    return float(np.sum(mesh.weights * integrand) / (2 * k * k))


def fan_quadrature(mesh: bie.BoundaryMesh, n_radial: int | None = None, t_factor: int = 1):
    """Nodes and weights for int_Omega f dA (convex domain, fan from the centroid).

    x = c + rho (q(t) - c): Gauss-Legendre in rho, trapezoid in the graded
    periodic boundary parameter t.
    """
    fine = bie.refine_mesh(mesh, t_factor) if t_factor > 1 else mesh
    c = mesh.domain.centroid
    if n_radial is None:
        reach = float(np.max(np.linalg.norm(mesh.points - c, axis=1)))
        n_radial = int(math.ceil(0.75 * mesh.k * reach)) + 16
    x, w = roots_legendre(n_radial)
    rho = 0.5 * (x + 1.0)
    wr = 0.5 * w
    q = fine.points - c
    dq = fine.tangents * fine.speed[:, None]
    jac = np.abs(q[:, 0] * dq[:, 1] - q[:, 1] * dq[:, 0])
    pts = c[None, None, :] + rho[:, None, None] * q[None, :, :]
    wts = (wr * rho)[:, None] * (jac * fine.dt)[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def interior_mass(mode: EigenMode, n_radial: int | None = None, t_factor: int = 1) -> float:
    pts, wts = fan_quadrature(mode.mesh, n_radial, t_factor)
    return float(np.sum(wts * np.abs(mode.field(pts)) ** 2))


def normalize(mode: EigenMode, method: str = "auto") -> EigenMode:
    """Scale so that ||phi||_{L2(Omega)} = 1.

    ``interior`` integrates |phi|^2 with the fan quadrature; ``rellich`` uses
    the boundary identity; ``auto`` picks interior quadrature while the
    number of interior targets stays modest.
    """
    if mode.exact is not None and mode.normalized:
        return mode
    if method == "auto":
        method = "interior" if mode.k * mode.domain.diameter <= 40 else "rellich"
    if method == "interior":
        mass = interior_mass(mode)
    elif method == "rellich":
        mass = rellich_mass(mode.mesh, mode.trace, mode.k)
    else:
        raise ValueError(f"unknown normalization method {method!r}")
    if not mass > 0:
        raise EigError("non-positive mass; trace is not a Neumann mode")
    c = 1.0 / math.sqrt(mass)
    out = mode.scaled(c)
    out.normalized = True
    out.residuals["mass_method"] = method
    return out


# ---------------------------------------------------------------------------
# residual diagnostics
# ---------------------------------------------------------------------------


def mode_residuals(
    mode: EigenMode,
    operator: bie.LayerOperator | None = None,
    n_pde: int = 24,
    n_neumann: int = 4,
) -> dict[str, float]:
    """Jumps, interior Helmholtz and Neumann residuals.

    pde: max |Delta_5pt phi + k^2 phi| / (k^2 max|phi|) over interior stencils.
    neumann: max |d phi/d nu| / (k max|phi|) at edge midpoints, from a one-sided
    fourth-order difference along the inward normal.
    """
    dom = mode.domain
    k = mode.k
    if operator is None or abs(operator.k - k) > 1e-14 * k or operator.mesh is not mode.mesh:
        operator = bie.assemble_operator(mode.mesh, k)
    out = {"jumps": operator.jumps_residual(mode.trace)}
    rng = np.random.default_rng(12345)
    c = dom.centroid
    # interior stencil centers well inside the domain
    hfd = 0.1 / k
    centers = []
    while len(centers) < n_pde:
        cand = c + (rng.random(2) - 0.5) * dom.diameter
        if dom.contains(cand[None, :])[0] and dom.nearest(cand[None, :])[0][0] > 0.15 * dom.diameter / 2:
            centers.append(cand)
    centers = np.array(centers)
    # 5-point Laplacians at spacings h and 2h, Richardson-combined to fourth order
    offs = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [2, 0], [-2, 0], [0, 2], [0, -2]]) * hfd
    vals = mode.field((centers[:, None, :] + offs[None, :, :]).reshape(-1, 2)).reshape(-1, 9)
    lap1 = (vals[:, 1:5].sum(axis=1) - 4 * vals[:, 0]) / hfd**2
    lap2 = (vals[:, 5:9].sum(axis=1) - 4 * vals[:, 0]) / (2 * hfd) ** 2
    lap = (4 * lap1 - lap2) / 3
    scale = max(float(np.max(np.abs(vals[:, 0]))), 1e-300)
    out["pde"] = float(np.max(np.abs(lap + k * k * vals[:, 0])) / (k * k * scale))
    # Neumann: normal derivative at edge midpoints
    worst = 0.0
    step = 0.02 / k
    for j, e in enumerate(dom.edges):
        for sig in np.linspace(0.3, 0.7, n_neumann):
            q = e.point(sig)
            tan = e.d1(sig)
            tan = tan / np.linalg.norm(tan)
            inward = np.array([-tan[1], tan[0]])
            pts = q[None, :] + np.outer(np.arange(5) * step, inward)
            f = mode.field(pts)
            # one-sided 4th-order first derivative at s = 0
            d = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * step)
            worst = max(worst, abs(d) / (k * max(abs(f[0]), scale)))
    out["neumann"] = float(worst)
    return out


# ---------------------------------------------------------------------------
# closed-form oracles
# ---------------------------------------------------------------------------


def _mesh_for(domain: Domain, k: float, mesh: bie.BoundaryMesh | None, npw: float = 12.0) -> bie.BoundaryMesh:
    return mesh if mesh is not None else bie.build_mesh(domain, max(k, 1.0), nodes_per_wavelength=npw)


def rectangle_mode(a: float, b: float, m: int, n: int, mesh: bie.BoundaryMesh | None = None) -> EigenMode:
    """phi = c cos(m pi x / a) cos(n pi y / b) on [0, a] x [0, b], unit L2 norm."""
    from .geom import rectangle

    if m < 0 or n < 0 or (m == 0 and n == 0):
        raise BadIndices("need m, n >= 0, not both zero (constant mode has k = 0)")
    k = math.pi * math.hypot(m / a, n / b)
    c = math.sqrt((1 if m == 0 else 2) * (1 if n == 0 else 2) / (a * b))

    def exact(X):
        return (c * np.cos(m * math.pi * X[:, 0] / a) * np.cos(n * math.pi * X[:, 1] / b)).astype(complex)

    dom = mesh.domain if mesh is not None else rectangle(a, b)
    mesh = _mesh_for(dom, k, mesh)
    mode = EigenMode(k, mesh, exact(mesh.points), normalized=True, provenance="oracle", label=f"rect({m},{n})", exact=exact)
    mode.sigma = 0.0
    return mode


def square_mode(m: int, n: int, side: float = 1.0, mesh: bie.BoundaryMesh | None = None) -> EigenMode:
    return rectangle_mode(side, side, m, n, mesh)


def disc_mode(m: int, n_radial: int, radius: float = 1.0, mesh: bie.BoundaryMesh | None = None) -> EigenMode:
    """phi = c J_m(kappa r) e^{i m theta}, kappa the n-th positive zero of J_m'.

    For m = 0 the zero of J_0' at the origin is skipped, so ``disc_mode(0, 1)``
    is the first radial mode with kappa = j'_{0,2} ~ 3.8317.
    """
    from .geom import unit_disc

    if m < 0 or n_radial < 1:
        raise BadIndices("need m >= 0 and n_radial >= 1")
    kappa = float(jnp_zeros(m, n_radial)[-1])
    k = kappa / radius
    # int_0^R J_m(k r)^2 r dr at a zero of J_m'
    radial = 0.5 * radius**2 * (1.0 - (m / kappa) ** 2) * jv(m, kappa) ** 2
    c = 1.0 / math.sqrt(2 * math.pi * radial)

    def exact(X):
        r = np.hypot(X[:, 0], X[:, 1])
        th = np.arctan2(X[:, 1], X[:, 0])
        return c * jv(m, k * r) * np.exp(1j * m * th)

    dom = mesh.domain if mesh is not None else unit_disc(radius)
    mesh = _mesh_for(dom, k, mesh)
    mode = EigenMode(k, mesh, exact(mesh.points), normalized=True, provenance="oracle", label=f"disc({m},{n_radial})", exact=exact)
    mode.sigma = 0.0
    return mode


def closed_form_mode(kind: str, *args, mesh: bie.BoundaryMesh | None = None, **kw) -> EigenMode:
    """Dispatch: ``square(a, b, m, n)`` or ``disc(m, n_radial)``."""
    if kind in ("square", "rectangle"):
        if len(args) == 4:
            a, b, m, n = args
        else:
            (m, n), a, b = args[:2], kw.pop("a", 1.0), kw.pop("b", 1.0)
        return rectangle_mode(a, b, m, n, mesh=mesh)
    if kind == "disc":
        return disc_mode(*args, mesh=mesh, **kw)
    raise BadIndices(f"unknown oracle {kind!r}")


def square_spectrum(kmax: float, side: float = 1.0) -> list[tuple[float, int, int]]:
    """All (k, m, n) with 0 < k <= kmax for the square, sorted by k."""
    nmax = int(kmax * side / math.pi) + 1
    out = []
    for m in range(nmax + 1):
        for n in range(nmax + 1):
            if m == n == 0:
                continue
            k = math.pi * math.hypot(m, n) / side
            if k <= kmax:
                out.append((k, m, n))
    out.sort()
    return out


def disc_spectrum(count: int, radius: float = 1.0) -> list[tuple[float, int, int]]:
    """First ``count`` nonzero Neumann k of the disc with multiplicity (m > 0 twice)."""
    out = []
    mmax = count + 2
    for m in range(mmax):
        for n, z in enumerate(jnp_zeros(m, count), start=1):
            reps = 1 if m == 0 else 2
            out.extend([(float(z) / radius, m, n)] * reps)
    out.sort()
    return out[:count]


# ---------------------------------------------------------------------------
# half-ellipse oracle (separation in elliptic coordinates)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipseMode:
    k: float
    q: float
    a: float  # separation constant
    order: int  # angular index of ce_n
    radial: int  # number of the root in q for this order
    mu_b: float
    focal: float
    coeffs: tuple  # Fourier coefficients of the angular function

    def angular(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        c = np.asarray(self.coeffs)
        if self.order % 2 == 0:
            freqs = 2 * np.arange(len(c))
        else:
            freqs = 2 * np.arange(len(c)) + 1
        return np.cos(np.multiply.outer(nu, freqs)) @ c


def _angular_matrix(q: float, parity: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric tridiagonal form of the even Mathieu recurrence."""
    if parity == 0:
        d = (2.0 * np.arange(size)) ** 2
        e = np.full(size - 1, q)
        e[0] = math.sqrt(2) * q
    else:
        d = (2.0 * np.arange(size) + 1) ** 2
        d[0] += q
        e = np.full(size - 1, q)
    return d, e


def mathieu_a(order: int, q: float, size: int | None = None) -> tuple[float, np.ndarray]:
    """Characteristic value a_n(q) of ce_n and its cosine coefficients."""
    parity = order % 2
    idx = order // 2
    if size is None:
        size = int(2 * math.sqrt(max(q, 1.0))) + idx + 40
    d, e = _angular_matrix(q, parity, size)
    w, v = sla.eigh_tridiagonal(d, e, select="i", select_range=(idx, idx))
    coeffs = v[:, 0].copy()
    if parity == 0:
        coeffs[0] /= math.sqrt(2)
    if coeffs[np.argmax(np.abs(coeffs))] < 0:
        coeffs = -coeffs
    return float(w[0]), coeffs


def _radial_end_slope(order: int, q: float, mu_b: float) -> float:
    """Ce_n'(mu_b) / max|Ce_n| for Ce'' = (a - 2q cosh 2 mu) Ce, Ce(0) = 1, Ce'(0) = 0."""
    a, _ = mathieu_a(order, q)
    sol = solve_ivp(
        lambda mu, y: [y[1], (a - 2 * q * math.cosh(2 * mu)) * y[0]],
        (0.0, mu_b),
        [1.0, 0.0],
        method="DOP853",
        rtol=1e-11,
        atol=1e-12,
    )
    y = sol.y
    scale = np.max(np.abs(y[0])) * math.sqrt(max(2 * q * math.cosh(2 * mu_b) - a, 1.0))
    return float(y[1, -1] / scale)


def half_ellipse_spectrum(
    kmin: float,
    kmax: float,
    a_axis: float = 2.0,
    b_axis: float = 1.0,
    orders: Sequence[int] | None = None,
    samples_per_root: int = 8,
) -> list[EllipseMode]:
    """Neumann modes of the half ellipse y >= 0 (flat major axis) with k in [kmin, kmax].

    These are the ellipse modes even in y: phi = Ce_n(mu) ce_n(nu) with
    Ce_n'(mu_b) = 0, where x = f cosh(mu) cos(nu), y = f sinh(mu) sin(nu).
    """
    f = math.sqrt(a_axis**2 - b_axis**2)
    mu_b = math.acosh(a_axis / f)
    qmin, qmax = (f * kmin / 2) ** 2, (f * kmax / 2) ** 2
    if orders is None:
        # a_n(q) > 2 q cosh(2 mu_b) means no oscillation anywhere in mu
        nmax = int(math.ceil(2 * math.sqrt(2 * qmax * math.cosh(2 * mu_b)) / 1)) + 2
        orders = range(nmax)
    out = []
    for n in orders:
        # radial oscillation count ~ sqrt(q) * const: sample densely enough in sqrt(q)
        ks = np.linspace(kmin, kmax, max(16, int(samples_per_root * (kmax - kmin) * f * 1.2 * mu_b / math.pi) + 8))
        qs = (f * ks / 2) ** 2
        vals = np.array([_radial_end_slope(n, q, mu_b) for q in qs])
        for i in range(len(qs) - 1):
            if vals[i] == 0 or vals[i] * vals[i + 1] < 0:
                r = brentq(lambda q: _radial_end_slope(n, q, mu_b), qs[i], qs[i + 1], xtol=1e-14, rtol=1e-14)
                a, c = mathieu_a(n, r)
                out.append(EllipseMode(2 * math.sqrt(r) / f, r, a, n, len([m for m in out if m.order == n]) + 1, mu_b, f, tuple(c)))
    out.sort(key=lambda m: m.k)
    return out


def half_ellipse_field(mode: EllipseMode, X) -> np.ndarray:
    """Unnormalized separated field Ce(mu) ce(nu) at Cartesian points (y >= 0)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = (X[:, 0] + 1j * X[:, 1]) / mode.focal
    w = np.arccosh(z.astype(complex))
    mu = np.abs(w.real)
    nu = np.abs(w.imag)
    a, q = mode.a, mode.q
    grid, inverse = np.unique(mu, return_inverse=True)
    top = max(float(grid[-1]), 1e-12)
    sol = solve_ivp(
        lambda m, y: [y[1], (a - 2 * q * math.cosh(2 * m)) * y[0]],
        (0.0, top),
        [1.0, 0.0],
        dense_output=True,
        method="DOP853",
        rtol=1e-11,
        atol=1e-12,
    )
    radial = sol.sol(grid)[0][inverse]
    return radial * mode.angular(nu)


def separatrix_q(order: int, f: float) -> float:
    """q at which a_n(q) = 2q (the angular turning point reaches the major axis)."""
    g = lambda q: mathieu_a(order, q)[0] - 2 * q  # noqa: E731
    lo, hi = 0.5, max(2.0, order * order)
    while g(hi) > 0:
        hi *= 2
    return brentq(g, lo, hi, xtol=1e-10)


def separatrix_modes(
    kmin: float,
    kmax: float,
    a_axis: float = 2.0,
    b_axis: float = 1.0,
    window: float = 0.05,
    orders: Sequence[int] | None = None,
) -> list[EllipseMode]:
    """Half-ellipse modes with |a - 2q| <= window * 2q, k in [kmin, kmax].

    Near the separatrix the angular and radial turning points both sit on the
    major axis, so these modes concentrate along the flat edge.
    """
    f = math.sqrt(a_axis**2 - b_axis**2)
    mu_b = math.acosh(a_axis / f)
    out = []
    if orders is None:
        orders = range(int(0.8 * kmin), int(1.6 * kmax) + 2)
    for n in orders:
        qs = separatrix_q(n, f)
        ks = 2 * math.sqrt(qs) / f
        if ks < kmin - 3 or ks > kmax + 3:
            continue
        grid = np.linspace(max(ks - 3.0, 1e-3), ks + 3.0, 49)
        qg = (f * grid / 2) ** 2
        vals = np.array([_radial_end_slope(n, q, mu_b) for q in qg])
        for i in range(len(qg) - 1):
            if vals[i] * vals[i + 1] < 0:
                r = brentq(lambda q: _radial_end_slope(n, q, mu_b), qg[i], qg[i + 1], xtol=1e-13, rtol=1e-14)
                a, c = mathieu_a(n, r)
                k = 2 * math.sqrt(r) / f
                if abs(a - 2 * r) <= window * 2 * r and kmin <= k <= kmax:
                    out.append(EllipseMode(k, r, a, n, 0, mu_b, f, tuple(c)))
    out.sort(key=lambda m: m.k)
    return out
