"""Cutoffs, flat-edge Fourier multipliers and corner-localized transfer blocks.

Three families of objects live here:

* one-dimensional model cutoffs (the odd ramp ``chi_tilde``, its derivative
  ``gamma``, the even plateau bump ``psi_tilde``) and the two-dimensional
  vector-field coefficients built from them;
* Fourier multipliers on a flat edge, realized with a cosine transform so the
  edge is periodized by even reflection at both corners;
* dense transfer blocks of the double-layer kernel between two edges, cut off
  near the corners and filtered to the glancing set on the target edge.

Frequencies are semiclassical: a mode ``cos(pi l s / L)`` on an edge of
length L has tangential frequency ``xi = pi l h / L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.fft import dct, idct

from . import bie
from .geom import Domain, LineEdge, NotFlat

# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


class MicrolocalError(ValueError):
    pass


class TooFewSamples(MicrolocalError):
    pass


class NotAdjacent(MicrolocalError):
    pass


class CoincidentPoints(MicrolocalError):
    pass


class BadCutoff(MicrolocalError):
    pass


# ---------------------------------------------------------------------------
# one-dimensional cutoffs
# ---------------------------------------------------------------------------


def _f(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 1 for x <= 0, 0 for x >= 1, and S(x) + S(1 - x) = 1."""
    x = np.asarray(x, dtype=float)
    a, b = _f(1.0 - x), _f(x)
    return a / (a + b)


def psi_tilde(s) -> np.ndarray:
    """Even bump: 1 on [-1, 1], 0 outside [-2, 2], nonincreasing in |s|."""
    return smooth_step(np.abs(np.asarray(s, dtype=float)) - 1.0)


def gamma(s) -> np.ndarray:
    """Derivative of :func:`chi_tilde`: 1/2 on [-1, 1], 0 outside [-3, 3]."""
    return 0.5 * smooth_step((np.abs(np.asarray(s, dtype=float)) - 1.0) / 2.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def chi_tilde(s) -> np.ndarray:
    """Odd nondecreasing ramp: s/2 on [-1, 1], +-1 beyond +-3."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    top = np.clip(a, 1.0, 3.0)
    # integral of gamma over [1, top]
    half = 0.5 * (top - 1.0)
    nodes = 1.0 + half[..., None] * (_GL_X + 1.0)
    tail = half * np.sum(_GL_W * gamma(nodes), axis=-1)
    # clamp quadrature round-off so the ramp stays monotone up to 1
    val = np.where(a <= 1.0, 0.5 * a, np.minimum(0.5 + tail, 1.0))
    val = np.where(a >= 3.0, 1.0, val)
    return np.sign(s) * val


def chi_tilde_prime(s) -> np.ndarray:
    return gamma(s)


# ---------------------------------------------------------------------------
# cutoff specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """Scale exponent, glancing aperture and corner-width constant.

    The corner cutoff about a corner c has support radius ``c0 * h**delta``
    and equals one within half that radius. ``c0=None`` resolves to half the
    shortest edge of the domain at use.
    """

    delta: float
    eps0: float = 0.1
    c0: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise BadCutoff(f"delta must lie in [0, 1), got {self.delta}")
        if not (0.0 < self.eps0 < 0.5):
            raise BadCutoff(f"eps0 must lie in (0, 1/2), got {self.eps0}")
        if self.c0 is not None and not self.c0 > 0:
            raise BadCutoff("c0 must be positive")

    def width(self, domain: Domain) -> float:
        return 0.5 * float(np.min(domain.edge_lengths)) if self.c0 is None else float(self.c0)


def corner_psi(points, corner: np.ndarray, h: float, delta: float, c0: float = 1.0) -> np.ndarray:
    """Bump of support radius c0 h^delta about a corner position."""
    d = np.linalg.norm(np.atleast_2d(points) - np.asarray(corner, dtype=float), axis=-1)
    scale = 0.5 * c0 * h**delta
    return psi_tilde(d / scale)


def edge_corner_weight(domain: Domain, j: int, points, h: float, delta: float, c0: float) -> np.ndarray:
    """Sum of the corner bumps at both ends of edge j, evaluated at its points."""
    total = np.zeros(len(np.atleast_2d(points)))
    for c in domain.edge_corners(j):
        if c is not None:
            total += corner_psi(points, domain.corners[c].position, h, delta, c0)
    return np.clip(total, 0.0, 1.0)


def chi_xy(x, y, h: float, eps: float, delta: float = 0.5) -> np.ndarray:
    """chi(x, y) = chi_tilde(x / h^delta) psi_tilde(x / eps) psi_tilde(y / eps)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return chi_tilde(x / h**delta) * psi_tilde(x / eps) * psi_tilde(y / eps)


def rho_field(x, y, h: float, eps: float, alpha_prime: Callable, beta: Callable, delta: float = 0.5) -> np.ndarray:
    """rho(x, y) = alpha'(x) chi_tilde(beta(y) / h^delta) psi_tilde(x / eps) psi_tilde(y / eps).

    ``beta`` inverts the boundary graph y = alpha(x).
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return alpha_prime(x) * chi_tilde(beta(y) / h**delta) * psi_tilde(x / eps) * psi_tilde(y / eps)


def cutoff_eval(family: str, *args, **kw) -> np.ndarray:
    """Dispatch by family name."""
    table = {
        "chi_tilde": chi_tilde,
        "psi_tilde": psi_tilde,
        "gamma": gamma,
        "corner_psi": corner_psi,
        "corner_chi_xy": chi_xy,
        "rho_field": rho_field,
    }
    try:
        fn = table[family]
    except KeyError:
        raise BadCutoff(f"unknown cutoff family {family!r}") from None
    return fn(*args, **kw)


# ---------------------------------------------------------------------------
# frequency symbols and multipliers
# ---------------------------------------------------------------------------


def glancing_symbol(xi, eps0: float) -> np.ndarray:
    """1 on ||xi| - 1| <= eps0, 0 for ||xi| - 1| >= 2 eps0."""
    d = np.abs(1.0 - np.abs(np.asarray(xi, dtype=float)))
    return smooth_step((d - eps0) / eps0)


def source_window(angle: float, eps0: float) -> tuple[float, float]:
    """Center and half-width in |eta| of the source-edge image of the glancing window.

    A ray leaving the corner along the target edge has |eta| = |cos(pi - angle)|
    on the source edge; tilting it by the largest glancing angle
    arccos(1 - 2 eps0) moves |eta| by at most the returned half-width.
    """
    theta = math.acos(1.0 - 2.0 * eps0)
    c = math.cos(math.pi - angle)
    w = max(abs(math.cos(math.pi - angle + sgn * theta) - c) for sgn in (-1.0, 1.0))
    return abs(c), w


def transversal_source_symbol(eta, center: float, width: float) -> np.ndarray:
    """1 within ``width`` of ``center`` in |eta|, 0 beyond twice that."""
    return psi_tilde((np.abs(np.asarray(eta, dtype=float)) - center) / width)


def edge_frequencies(n: int, length: float, h: float, periodization: str = "even") -> np.ndarray:
    if periodization == "even":
        return math.pi * np.arange(n) * h / length
    if periodization == "periodic":
        return 2 * math.pi * np.fft.fftfreq(n, d=1.0 / n) * h / length
    raise MicrolocalError(f"unknown periodization {periodization!r}")


def _apply_symbol(samples: np.ndarray, sym: np.ndarray, periodization: str) -> np.ndarray:
    if periodization == "even":
        c = dct(samples, type=2, norm="ortho", axis=0)
        return idct(c * sym.reshape((-1,) + (1,) * (c.ndim - 1)), type=2, norm="ortho", axis=0)
    c = np.fft.fft(samples, axis=0)
    return np.fft.ifft(c * sym.reshape((-1,) + (1,) * (c.ndim - 1)), axis=0)


def frequency_multiplier(
    domain: Domain,
    j: int,
    samples,
    h: float,
    eps0: float = 0.1,
    pass_: str = "glancing",
    symbol: Callable | None = None,
    periodization: str = "even",
    min_samples_per_wavelength: float = 6.0,
) -> np.ndarray:
    """Filter uniform midpoint samples of a trace on a flat edge in frequency.

    ``pass_`` is 'glancing' (keep |xi| near 1), 'transversal' (its complement)
    or 'custom' with an explicit ``symbol(xi)``.
    """
    e = domain.edges[j]
    if not isinstance(e, LineEdge):
        raise NotFlat(f"edge {j} is not flat")
    u = np.asarray(samples)
    n = u.shape[0]
    L = e.length
    if n * h * 2 * math.pi / L < min_samples_per_wavelength:
        raise TooFewSamples(f"{n} samples on length {L:.4g} at h={h:.4g} resolve fewer than {min_samples_per_wavelength} per wavelength")
    xi = edge_frequencies(n, L, h, periodization)
    if pass_ == "glancing":
        sym = glancing_symbol(xi, eps0)
    elif pass_ == "transversal":
        sym = 1.0 - glancing_symbol(xi, eps0)
    elif pass_ == "custom":
        if symbol is None:
            raise MicrolocalError("custom pass needs a symbol")
        sym = np.asarray(symbol(xi), dtype=float) * np.ones(n)
    else:
        raise MicrolocalError(f"unknown pass {pass_!r}")
    if np.iscomplexobj(u) and periodization == "even":
        return _apply_symbol(u.real, sym, "even") + 1j * _apply_symbol(u.imag, sym, "even")
    out = _apply_symbol(u, sym, periodization)
    return out if np.iscomplexobj(u) or periodization == "even" else out.real


def multiplier_matrix(n: int, symbol_values: np.ndarray) -> np.ndarray:
    """Dense matrix of the even-reflection multiplier on n midpoint samples."""
    C = dct(np.eye(n), type=2, norm="ortho", axis=0)
    return C.T @ (symbol_values[:, None] * C)


def edge_samples(j: int, domain: Domain, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform midpoint arclength samples (positions, local arclengths) of edge j."""
    e = domain.edges[j]
    s = (np.arange(n) + 0.5) * e.length / n
    return e.point(e.sigma_at(s)), s


def resample_trace(mesh: bie.BoundaryMesh, u: np.ndarray, j: int, n: int) -> np.ndarray:
    """Band-limited resampling of a graded-mesh trace to n uniform points on edge j."""
    e = mesh.domain.edges[j]
    s = (np.arange(n) + 0.5) * e.length / n
    t = bie.param_of(mesh, np.full(n, j), e.sigma_at(s))
    return bie.trig_interp(mesh, np.asarray(u), t)


# ---------------------------------------------------------------------------
# transfer blocks
# ---------------------------------------------------------------------------

VARIANTS = ("full", "geometric", "diffractive")


@dataclass
class TransferMatrix:
    source: int
    target: int
    h: float
    delta: float
    eps0: float
    variant: str
    matrix: np.ndarray
    target_weights: np.ndarray
    source_weights: np.ndarray
    target_points: np.ndarray
    source_points: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def _samples_for(length: float, h: float, npw: float, minimum: int = 32) -> int:
    return max(minimum, int(math.ceil(length * npw / (2 * math.pi * h))))


def _interior_angle(domain: Domain, j: int, k_edge: int) -> float | None:
    for c in domain.corners:
        if {c.incoming, c.outgoing} == {j, k_edge}:
            return c.angle
    return None


def adjacent(domain: Domain, j: int, k_edge: int) -> bool:
    n = len(domain.edges)
    return k_edge in ((j - 1) % n, (j + 1) % n) and k_edge != j


def assemble_transfer(
    domain: Domain,
    j: int,
    k_edge: int,
    h: float,
    cutoffs: CutoffSpec,
    variant: str = "full",
    npw: float = 10.0,
    wkb: bool = False,
    glancing_filter: bool = True,
) -> TransferMatrix:
    """Dense corner-cut, glancing-filtered block of the double layer from edge k to edge j.

    full:        G_j (1 - psi_j^delta) N_jk
    geometric:   G_j (1 - psi_j^delta) N_jk T_k (1 - psi_k^{2 delta})
    diffractive: G_j (1 - psi_j^delta) N_jk psi_k^{2 delta}

    G_j is the glancing multiplier on the target edge and T_k the transversal
    multiplier on the source edge (see :func:`source_window`).
    """
    if variant not in VARIANTS:
        raise MicrolocalError(f"unknown variant {variant!r}")
    if not isinstance(domain.edges[j], LineEdge):
        raise NotFlat(f"target edge {j} is not flat")
    if k_edge == j:
        raise NotAdjacent("source and target edges coincide")
    if variant != "full" and not adjacent(domain, j, k_edge):
        raise NotAdjacent(f"edges {j} and {k_edge} are not adjacent")
    k = 1.0 / h
    c0 = cutoffs.width(domain)
    Lj, Lk = domain.edges[j].length, domain.edges[k_edge].length
    nj, nk = _samples_for(Lj, h, npw), _samples_for(Lk, h, npw)
    qj, _ = edge_samples(j, domain, nj)
    qk, _ = edge_samples(k_edge, domain, nk)
    ek = domain.edges[k_edge]
    sig_k = ek.sigma_at((np.arange(nk) + 0.5) * Lk / nk)
    tk = ek.d1(sig_k)
    tk = tk / np.linalg.norm(tk, axis=1)[:, None]
    nu_k = np.stack([tk[:, 1], -tk[:, 0]], axis=1)
    wj = np.full(nj, Lj / nj)
    wk = np.full(nk, Lk / nk)

    Q = np.repeat(qj, nk, axis=0)
    QP = np.tile(qk, (nj, 1))
    NU = np.tile(nu_k, (nj, 1))
    kern = bie.kernel_wkb(Q, QP, NU, k) if wkb else bie.kernel_eval(Q, QP, NU, k)
    M = kern.reshape(nj, nk) * wk[None, :]

    M = (1.0 - edge_corner_weight(domain, j, qj, h, cutoffs.delta, c0))[:, None] * M
    if variant != "full":
        psi2 = edge_corner_weight(domain, k_edge, qk, h, 2 * cutoffs.delta, c0)
        if variant == "diffractive":
            M = M * psi2[None, :]
        else:
            angle = _interior_angle(domain, j, k_edge)
            center, width = source_window(angle, cutoffs.eps0)
            eta = edge_frequencies(nk, Lk, h)
            if isinstance(ek, LineEdge):
                T = multiplier_matrix(nk, transversal_source_symbol(eta, center, width))
            else:
                T = np.eye(nk)
            M = M @ (T * (1.0 - psi2)[None, :])
    if glancing_filter:
        xi = edge_frequencies(nj, Lj, h)
        M = multiplier_matrix(nj, glancing_symbol(xi, cutoffs.eps0)) @ M
    return TransferMatrix(k_edge, j, h, cutoffs.delta, cutoffs.eps0, variant, M, wj, wk, qj, qk)


def operator_norm(m: TransferMatrix | np.ndarray, target_weights=None, source_weights=None, check: bool = False) -> float:
    """Largest singular value of W_j^{1/2} M W_k^{-1/2} (continuum L2 -> L2 norm).

    ``check=True`` cross-checks the SVD against power iteration.
    """
    if isinstance(m, TransferMatrix):
        A, wj, wk = m.matrix, m.target_weights, m.source_weights
    else:
        A = np.asarray(m)
        wj = np.ones(A.shape[0]) if target_weights is None else np.asarray(target_weights)
        wk = np.ones(A.shape[1]) if source_weights is None else np.asarray(source_weights)
    if A.size == 0:
        return 0.0
    B = np.sqrt(wj)[:, None] * A / np.sqrt(wk)[None, :]
    s = float(np.linalg.svd(B, compute_uv=False)[0])
    if check and s > 0:
        p = power_norm(B)
        if abs(p - s) > 1e-6 * s:
            raise MicrolocalError(f"SVD {s} and power iteration {p} disagree")
    return s


def power_norm(B: np.ndarray, iters: int = 500, tol: float = 1e-12, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(B.shape[1]) + 0j
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = B.conj().T @ (B @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        new = math.sqrt(nrm)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


# ---------------------------------------------------------------------------
# glancing mixed Hessian
# ---------------------------------------------------------------------------


def _unit_tangent(domain: Domain, y: float) -> tuple[np.ndarray, np.ndarray]:
    idx, s = domain.locate(y)
    e = domain.edges[int(idx[0])]
    sig = e.sigma_at(s)
    d1 = e.d1(sig)[0]
    return e.point(sig)[0], d1 / np.linalg.norm(d1)


def mixed_hessian(domain: Domain, y: float, yp: float) -> float:
    """d^2/dy dy' of |q(y) - q(y')| at two boundary arclength positions.

    Equals -|q - q'|^{-1} <t, rho_perp> <t', rho_perp> with rho the unit chord.
    """
    q, t = _unit_tangent(domain, y)
    qp, tp = _unit_tangent(domain, yp)
    d = q - qp
    r = float(np.linalg.norm(d))
    if r < 1e-14 * domain.length:
        raise CoincidentPoints("mixed Hessian needs distinct points")
    rho = d / r
    perp = np.array([-rho[1], rho[0]])
    return -float(t @ perp) * float(tp @ perp) / r


def corner_hessian(alpha: float, s, t) -> np.ndarray:
    """Leading corner-local model 2 a^2 (t - 1)(1 - s) / ((s - t)^2 + a^2 (1 - t)^2)^{3/2}."""
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    den = ((s - t) ** 2 + alpha**2 * (1 - t) ** 2) ** 1.5
    if np.any(den == 0):
        raise CoincidentPoints("corner model singular at s = t = 1")
    return 2 * alpha**2 * (t - 1) * (1 - s) / den


def glancing_hessian(*, alpha: float | None = None, s=None, t=None, domain: Domain | None = None, y=None, yp=None):
    """Corner-local model (alpha, s, t) or general form (domain, y, y')."""
    if domain is not None:
        return mixed_hessian(domain, y, yp)
    if alpha is None:
        raise MicrolocalError("need either (alpha, s, t) or (domain, y, yp)")
    return corner_hessian(alpha, s, t)


def comparability_ratios(domain: Domain, corner: int, distances) -> np.ndarray:
    """|d^2 S| / (|q - c| |q' - c| / |q - q'|^3) for point pairs on the two edges at a corner.

    ``distances`` are arclengths from the corner; every pair (a, b) is used.
    """
    c = domain.corners[corner]
    y0 = float(domain.offsets[c.outgoing])
    pos = c.position
    out = []
    for a in distances:
        for b in distances:
            ya, yb = y0 + a, y0 - b
            qa, _ = _unit_tangent(domain, ya)
            qb, _ = _unit_tangent(domain, yb)
            ref = np.linalg.norm(qa - pos) * np.linalg.norm(qb - pos) / np.linalg.norm(qa - qb) ** 3
            out.append(abs(mixed_hessian(domain, ya, yb)) / ref)
    return np.array(out)
