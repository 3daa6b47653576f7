"""Nystrom discretization of the Helmholtz double-layer operator on corner domains.

The whole boundary is mapped to one periodic parameter t in [0, 2 pi). Each
edge owns an integer number of equispaced t-nodes (midpoints, so no node sits
on a corner) and, when it ends at corners, its edge parameter is the Kress
polynomial grading sigma = w(tau) whose derivatives vanish to order p - 1 at
both ends. The logarithmic part of the kernel is split off and integrated with
the Kress product weights; everything else uses the trapezoidal rule.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import specfun
from .geom import Domain, _cross, _rot_cw

# N(q, q') = CALIBRATION * GREEN_PREFACTOR * k <nu(q'), (q-q')/|q-q'|> H_1(k |q-q'|)
# The calibration makes Neumann traces fixed points (u = N u) for the free-space
# Green's function (i/4) H_0; INTERIOR_FACTOR maps the trace to the field.
GREEN_PREFACTOR = 0.25j
CALIBRATION = -2.0
KERNEL_PREFACTOR = CALIBRATION * GREEN_PREFACTOR
INTERIOR_FACTOR = 0.5

MAX_NODES = 20000


class BieError(ValueError):
    pass


class MeshTooCoarse(BieError):
    pass


class BadParams(BieError):
    pass


class CoincidentPoints(BieError):
    pass


class TargetOutside(BieError):
    pass


class TargetTooClose(BieError):
    pass


# ---------------------------------------------------------------------------
# grading
# ---------------------------------------------------------------------------


def grading(tau, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Kress sigmoidal map w: [0,1] -> [0,1] with w ~ tau^p at both ends; returns (w, w')."""
    tau = np.asarray(tau, dtype=float)
    a = 1.0 / p - 0.5
    u = 1.0 - 2.0 * tau
    v = a * u**3 - u / p + 0.5
    dv = -6.0 * a * u**2 + 2.0 / p
    vc = 1.0 - v
    vp, vcp = v**p, vc**p
    den = vp + vcp
    w = vp / den
    dw = p * (v * vc) ** (p - 1) * dv / den**2
    return w, dw


def grading_d2(tau, p: float) -> np.ndarray:
    """Second derivative of the grading map (central differences of the closed-form w')."""
    e = 1e-6
    return (grading(tau + e, p)[1] - grading(tau - e, p)[1]) / (2 * e)


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BoundaryMesh:
    domain: Domain
    k: float
    nodes_per_wavelength: float
    p: float
    counts: np.ndarray  # nodes per edge
    t: np.ndarray  # global periodic parameter
    edge: np.ndarray
    sigma: np.ndarray
    y: np.ndarray  # global arclength
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray  # |dx/dt|
    accel: np.ndarray  # d^2x/dt^2

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return 2 * math.pi / self.n

    @cached_property
    def weights(self) -> np.ndarray:
        """Arclength weights, rescaled per edge so each edge length is integrated exactly."""
        w = self.dt * self.speed
        for j, e in enumerate(self.domain.edges):
            sel = self.edge == j
            w[sel] *= e.length / w[sel].sum()
        return w

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.domain.fingerprint.encode())
        h.update(np.asarray([self.k, self.nodes_per_wavelength, self.p], dtype=float).tobytes())
        h.update(self.counts.astype(np.int64).tobytes())
        return h.hexdigest()[:16]

    def edge_slice(self, j: int) -> slice:
        start = int(np.sum(self.counts[:j]))
        return slice(start, start + int(self.counts[j]))

    def local_spacing(self) -> np.ndarray:
        return self.weights


def _edge_nodes(domain: Domain, j: int, n: int, p: float):
    e = domain.edges[j]
    tau = (np.arange(n) + 0.5) / n
    if domain.smooth:
        sig, dsig, d2sig = tau, np.ones(n), np.zeros(n)
    else:
        sig, dsig = grading(tau, p)
        d2sig = grading_d2(tau, p)
    return sig, dsig, d2sig


def _max_spacing(domain: Domain, j: int, n: int, p: float) -> float:
    sig, dsig, _ = _edge_nodes(domain, j, n, p)
    return float(np.max(domain.edges[j].speed(sig) * dsig) / n)


def build_mesh(
    domain: Domain,
    k: float,
    nodes_per_wavelength: float = 12.0,
    p: float = 6.0,
    min_nodes_per_edge: int = 24,
    max_nodes: int = MAX_NODES,
) -> BoundaryMesh:
    if not k > 0:
        raise BadParams("k must be positive")
    if nodes_per_wavelength < 6:
        raise BadParams("nodes_per_wavelength must be >= 6")
    if p < 2:
        raise BadParams("grading exponent must be >= 2")
    wavelength = 2 * math.pi / k
    target = wavelength / nodes_per_wavelength
    counts = []
    for j, e in enumerate(domain.edges):
        n = max(min_nodes_per_edge, int(math.ceil(e.length / target)))
        while _max_spacing(domain, j, n, p) > target:
            n = int(math.ceil(n * _max_spacing(domain, j, n, p) / target)) + 1
            if n > max_nodes:
                break
        counts.append(n)
    counts = np.array(counts, dtype=int)
    if counts.sum() % 2:
        counts[int(np.argmax(domain.edge_lengths))] += 1
    N = int(counts.sum())
    if N > max_nodes:
        raise MeshTooCoarse(f"mesh needs {N} nodes > limit {max_nodes}")
    return _assemble_mesh(domain, k, nodes_per_wavelength, p, counts)


def _assemble_mesh(domain: Domain, k: float, npw: float, p: float, counts: np.ndarray) -> BoundaryMesh:
    N = int(counts.sum())
    dt = 2 * math.pi / N
    parts = {name: [] for name in ("edge", "sigma", "y", "pts", "d1", "d2", "kappa")}
    for j, e in enumerate(domain.edges):
        n = int(counts[j])
        sig, dsig, d2sig = _edge_nodes(domain, j, n, p)
        # d/dt = (1/(n dt)) d/dtau
        c = 1.0 / (n * dt)
        d1s = e.d1(sig)
        d2s = e.d2(sig)
        parts["edge"].append(np.full(n, j))
        parts["sigma"].append(sig)
        parts["y"].append(domain.offsets[j] + e.arclength(sig))
        parts["pts"].append(e.point(sig))
        parts["d1"].append(d1s * (dsig * c)[:, None])
        parts["d2"].append(d2s * ((dsig * c) ** 2)[:, None] + d1s * (d2sig * c * c)[:, None])
        parts["kappa"].append(np.zeros(n) if e.flat else e.curvature(sig))
    d1 = np.concatenate(parts["d1"])
    speed = np.linalg.norm(d1, axis=1)
    tang = d1 / speed[:, None]
    return BoundaryMesh(
        domain=domain,
        k=float(k),
        nodes_per_wavelength=float(npw),
        p=float(p),
        counts=counts,
        t=(np.arange(N) + 0.5) * dt,
        edge=np.concatenate(parts["edge"]),
        sigma=np.concatenate(parts["sigma"]),
        y=np.concatenate(parts["y"]),
        points=np.concatenate(parts["pts"]),
        tangents=tang,
        normals=_rot_cw(tang),
        curvature=np.concatenate(parts["kappa"]),
        speed=speed,
        accel=np.concatenate(parts["d2"]),
    )


def refine_mesh(mesh: BoundaryMesh, factor: int) -> BoundaryMesh:
    """Same grading with ``factor`` times as many nodes on every edge."""
    return _assemble_mesh(mesh.domain, mesh.k, mesh.nodes_per_wavelength * factor, mesh.p, mesh.counts * int(factor))


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def kernel_eval(q, qp, normal_qp, k: float) -> np.ndarray:
    """Double-layer kernel N(q, q') with the normal taken at the source q'.

    Same-flat-edge pairs give exactly zero because the numerator vanishes.
    """
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    nu = np.asarray(normal_qp, dtype=float)
    d = q - qp
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise CoincidentPoints("kernel evaluated at coincident points")
    cos = np.sum(nu * d, axis=-1) / r
    out = KERNEL_PREFACTOR * k * cos * specfun.hankel1(1, k * r)
    return out


def kernel_wkb(q, qp, normal_qp, k: float, b_terms: int | None = None) -> np.ndarray:
    """Oscillatory-amplitude form (2 pi h)^(-1/2) e^{i r/h} a(q,q') b(r/h) of the same kernel.

    ``b_terms=None`` uses the exact amplitude b; an integer truncates its
    large-argument expansion. The constant in front matches :func:`kernel_eval`.
    """
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    d = q - qp
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise CoincidentPoints("kernel evaluated at coincident points")
    a = r**-0.5 * np.sum(np.asarray(normal_qp) * d, axis=-1) / r
    x = k * r
    b = specfun.conormal_b(x) if b_terms is None else specfun.conormal_b_expansion(x, b_terms)
    # KERNEL_PREFACTOR * k * sqrt(2/(pi x)) e^{i(x - 3pi/4)} / Gamma(3/2) = const * (2 pi h)^(-1/2) e^{ix}
    const = KERNEL_PREFACTOR * math.sqrt(2 / math.pi) * math.sqrt(2 * math.pi) / specfun.B0 * np.exp(-0.75j * math.pi)
    return const * (2 * math.pi / k) ** -0.5 * np.exp(1j * x) * a * b


def laplace_kernel(q, qp, normal_qp) -> np.ndarray:
    """Laplace double-layer (1/2pi) <nu(q'), q - q'>/|q - q'|^2."""
    d = np.asarray(q, dtype=float) - np.asarray(qp, dtype=float)
    r2 = np.sum(d * d, axis=-1)
    return np.sum(np.asarray(normal_qp) * d, axis=-1) / (2 * math.pi * r2)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def kress_log_weights(N: int) -> np.ndarray:
    """R[d] such that int log(4 sin^2((t_i - s)/2)) f(s) ds ~ sum_j R[(i-j) mod N] f(t_j)."""
    if N % 2:
        raise BadParams("Kress weights need an even number of nodes")
    n = N // 2
    c = np.zeros(N)
    c[1:n] = 1.0 / np.arange(1, n)
    # sum_m cos(m d pi / n) / m as the real part of a DFT
    S = np.fft.fft(c).real
    return -(2 * math.pi / n) * S - (math.pi / n**2) * np.cos(np.arange(N) * math.pi)


@dataclass(eq=False)
class LayerOperator:
    k: float
    matrix: np.ndarray
    mesh: BoundaryMesh

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def jumps_residual(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix @ u - u) / np.linalg.norm(u))


def _flat_mask(mesh: BoundaryMesh) -> np.ndarray:
    flat_edge = np.array([e.flat for e in mesh.domain.edges])
    same = mesh.edge[:, None] == mesh.edge[None, :]
    return same & flat_edge[mesh.edge][:, None]


def assemble_operator(
    mesh: BoundaryMesh, k: float | None = None, laplace: bool = False, block: int = 512
) -> LayerOperator:
    """Dense matrix A with (A u)_i ~ int N(q_i, q') u(q') dsigma(q').

    Rows are built in blocks of ``block`` to bound peak memory.
    """
    k = mesh.k if k is None else float(k)
    N = mesh.n
    A = np.empty((N, N), dtype=float if laplace else complex)
    R = None if laplace else kress_log_weights(N)
    correct = not laplace and not mesh.domain.smooth
    for lo in range(0, N, block):
        hi = min(N, lo + block)
        A[lo:hi], lap_sum = _assemble_rows(mesh, k, lo, hi, R, correct)
        if correct:
            # Near-corner rows: the graded rule misses the nearly singular cross-edge
            # integral by O(1). Subtract its Laplace part using N_Laplace 1 = 1.
            rows = np.arange(lo, hi)
            A[rows, rows] += 1.0 - lap_sum
    return LayerOperator(0.0 if laplace else k, A, mesh)


def _assemble_rows(mesh: BoundaryMesh, k: float, lo: int, hi: int, R, correct: bool):
    P = mesh.points
    rows = np.arange(lo, hi)
    local = np.arange(hi - lo)
    diff = P[lo:hi, None, :] - P[None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    r[local, rows] = 1.0
    # nu(q') |x'(t')|
    nscaled = mesh.normals * mesh.speed[:, None]
    num = np.einsum("ijk,jk->ij", diff, nscaled)
    del diff
    # extreme grading can round distinct corner-adjacent nodes onto the corner
    merged = r == 0.0
    r[merged] = 1.0
    num[merged] = 0.0
    flat_edge = np.array([e.flat for e in mesh.domain.edges])
    flat = (mesh.edge[lo:hi, None] == mesh.edge[None, :]) & flat_edge[mesh.edge[lo:hi]][:, None]
    num[flat] = 0.0
    num[local, rows] = 0.0
    dt = mesh.dt
    diag = mesh.curvature[lo:hi] * mesh.speed[lo:hi] / (2 * math.pi)
    lap_sum = None
    if R is None or correct:
        lap = _laplace_matrix(num, r, dt)
        lap[local, rows] = dt * diag
        if R is None:
            return lap, None
        lap_sum = lap.sum(axis=1)
        del lap
    H = specfun.hankel1(1, k * r)
    # log splitting: K = L1 log(4 sin^2((t-s)/2)) + L2, K in t-measure
    w = num / r
    L1 = (k / (2 * math.pi)) * w * H.real
    L1[local, rows] = 0.0
    tdiff = mesh.t[lo:hi, None] - mesh.t[None, :]
    tdiff[local, rows] = 1.0
    logterm = np.log(4 * np.sin(0.5 * tdiff) ** 2)
    out = (KERNEL_PREFACTOR * k * dt) * w * H
    out -= (dt * logterm) * L1
    idx = (rows[:, None] - np.arange(mesh.n)[None, :]) % mesh.n
    out += R[idx] * L1
    out[local, rows] = dt * diag + R[0] * 0.0
    out[flat] = 0.0
    return out, lap_sum


def _laplace_matrix(num: np.ndarray, r: np.ndarray, dt: float) -> np.ndarray:
    # N_Laplace = -(1/pi) <nu', q - q'>/r^2 in the calibrated sign convention
    return -dt * num / (math.pi * r * r)


# ---------------------------------------------------------------------------
# interior evaluation
# ---------------------------------------------------------------------------


def upsample_trace(mesh: BoundaryMesh, u: np.ndarray, factor: int) -> tuple[BoundaryMesh, np.ndarray]:
    """Trigonometric interpolation of nodal values onto a ``factor``-times finer mesh."""
    factor = int(factor)
    if factor == 1:
        return mesh, u
    fine = refine_mesh(mesh, factor)
    N, M = mesh.n, fine.n
    U = np.fft.fft(u)
    # nodes sit at (j + 1/2) dt: shift to integer grid, pad, shift back
    freqs = np.fft.fftfreq(N, d=1.0 / N)
    U = U * np.exp(-1j * freqs * 0.5 * mesh.dt)  # value at t = j dt representation
    Uf = np.zeros(M, dtype=complex)
    half = N // 2
    Uf[:half] = U[:half]
    Uf[-half + 1 :] = U[-half + 1 :]
    Uf[half] = 0.5 * U[half]
    Uf[-half] = 0.5 * U[half]
    ff = np.fft.fftfreq(M, d=1.0 / M)
    Uf = Uf * np.exp(1j * ff * 0.5 * fine.dt)
    uf = np.fft.ifft(Uf) * (M / N)
    if np.isrealobj(u):
        uf = uf.real
    return fine, uf


def interior_eval(
    mesh: BoundaryMesh,
    trace: np.ndarray,
    targets,
    k: float | None = None,
    upsample: int = 1,
    cliff: float = 3.0,
    check: bool = True,
    chunk: int = 2048,
) -> np.ndarray:
    """Double-layer representation of the interior field from its Dirichlet trace."""
    k = mesh.k if k is None else float(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    src_mesh, u = upsample_trace(mesh, np.asarray(trace), upsample)
    if check:
        dist, _, _ = mesh.domain.nearest(X)
        inside = mesh.domain._inside_convex(X)
        if not np.all(inside):
            raise TargetOutside("target outside the domain")
        h_loc = _local_spacing_at(src_mesh, X)
        if np.any(dist < cliff * h_loc):
            raise TargetTooClose("target within the near-boundary accuracy cliff")
    w = src_mesh.weights * u
    P = src_mesh.points
    nu = src_mesh.normals
    out = np.empty(len(X), dtype=complex)
    for s in range(0, len(X), chunk):
        x = X[s : s + chunk]
        d = x[:, None, :] - P[None, :, :]
        r = np.sqrt(np.sum(d * d, axis=-1))
        cos = np.sum(d * nu[None, :, :], axis=-1) / r
        K = KERNEL_PREFACTOR * k * cos * specfun.hankel1(1, k * r)
        out[s : s + chunk] = INTERIOR_FACTOR * (K @ w)
    return out


def _local_spacing_at(mesh: BoundaryMesh, X: np.ndarray) -> np.ndarray:
    """Node spacing at the boundary point nearest to each target."""
    if len(X) == 0:
        return np.empty(0)
    _, edge, sigma = mesh.domain.nearest(X)
    t = param_of(mesh, edge, sigma)
    return np.abs(trig_interp(mesh, mesh.speed, t)) * mesh.dt


def near_cliff(mesh: BoundaryMesh, X: np.ndarray, upsample: int = 1, cliff: float = 3.0) -> np.ndarray:
    """Distance below which :func:`interior_eval` refuses a target (per target)."""
    return cliff * _local_spacing_at(mesh, X) / upsample


def _grading_inverse(sigma: np.ndarray, p: float) -> np.ndarray:
    """tau with w(tau) = sigma (bisection; w is increasing)."""
    lo = np.zeros_like(sigma)
    hi = np.ones_like(sigma)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = grading(mid, p)[0] < sigma
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def param_of(mesh: BoundaryMesh, edge, sigma) -> np.ndarray:
    """Global periodic parameter t of edge points given by (edge index, sigma)."""
    edge = np.atleast_1d(np.asarray(edge, dtype=int))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    tau = sigma.copy() if mesh.domain.smooth else _grading_inverse(sigma, mesh.p)
    start = np.concatenate([[0], np.cumsum(mesh.counts)[:-1]])
    return (start[edge] + tau * mesh.counts[edge]) * mesh.dt


def trig_interp(mesh: BoundaryMesh, values: np.ndarray, t) -> np.ndarray:
    """Trigonometric interpolant of nodal values evaluated at parameters t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    N = mesh.n
    V = np.fft.fft(values) / N
    m = np.fft.fftfreq(N, d=1.0 / N)
    m[N // 2] = 0.0  # drop the unpaired Nyquist mode
    out = np.exp(1j * np.outer(t - mesh.t[0], m)) @ V
    return out if np.iscomplexobj(values) else out.real


def trace_derivatives(mesh: BoundaryMesh, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second arclength derivatives of the trace at the nodes (spectral in t)."""
    N = mesh.n
    m = np.fft.fftfreq(N, d=1.0 / N)
    m[N // 2] = 0.0
    U = np.fft.fft(u)
    ut = np.fft.ifft(1j * m * U)
    utt = np.fft.ifft(-(m**2) * U)
    sp = mesh.speed
    dsp = np.sum(mesh.tangents * mesh.accel, axis=1)
    ok = sp > 1e-8 * np.max(sp)
    us = np.zeros(N, dtype=complex)
    uss = np.zeros(N, dtype=complex)
    us[ok] = ut[ok] / sp[ok]
    uss[ok] = (utt[ok] - us[ok] * dsp[ok]) / sp[ok] ** 2
    return us, uss


def _second_arclength_derivative(mesh: BoundaryMesh, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    # interpolate the smooth t-derivatives, convert to arclength at t itself
    N = mesh.n
    m = np.fft.fftfreq(N, d=1.0 / N)
    m[N // 2] = 0.0
    U = np.fft.fft(u)
    ut = trig_interp(mesh, np.fft.ifft(1j * m * U), t)
    utt = trig_interp(mesh, np.fft.ifft(-(m**2) * U), t)
    sp = trig_interp(mesh, mesh.speed, t)
    dsp = trig_interp(mesh, np.sum(mesh.tangents * mesh.accel, axis=1), t)
    ok = sp > 1e-3 * np.max(mesh.speed)
    out = np.zeros(len(t), dtype=complex)
    out[ok] = (utt[ok] - ut[ok] * dsp[ok] / sp[ok]) / sp[ok] ** 2
    return out


def evaluate_field(
    mesh: BoundaryMesh,
    trace: np.ndarray,
    targets,
    k: float | None = None,
    max_upsample: int = 32,
    cliff: float = 6.0,
) -> np.ndarray:
    """Interior field at arbitrary points of the closed domain.

    Targets beyond the accuracy cliff use :func:`interior_eval` directly; closer
    ones use a trigonometrically upsampled trace, and those within the finest
    cliff use the second-order Neumann expansion u - s^2/2 (k^2 u + u_ss)
    about the nearest boundary point.
    """
    k = mesh.k if k is None else float(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.empty(len(X), dtype=complex)
    dist, edge, sigma = mesh.domain.nearest(X)
    h_loc = _local_spacing_at(mesh, X)
    need = cliff * h_loc / np.maximum(dist, 1e-300)
    level = np.where(need <= 1, 1, 2 ** np.ceil(np.log2(np.maximum(need, 1.0))))
    strip = level > max_upsample
    for f in np.unique(level[~strip]):
        sel = (level == f) & ~strip
        out[sel] = interior_eval(mesh, trace, X[sel], k=k, upsample=int(f), check=False)
    if strip.any():
        t = param_of(mesh, edge[strip], sigma[strip])
        u = np.asarray(trace, dtype=complex)
        u0 = trig_interp(mesh, u, t)
        u2 = _second_arclength_derivative(mesh, u, t)
        s = dist[strip]
        out[strip] = u0 - 0.5 * s * s * (k * k * u0 + u2)
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"NLOP1\n"


def save_operator(op: LayerOperator, path: str | Path) -> None:
    """Binary container: magic, 8-byte header length, JSON header, raw complex128 data."""
    header = {
        "shape": list(op.matrix.shape),
        "dtype": "complex128",
        "k": op.k,
        "mesh_hash": op.mesh.fingerprint,
        "domain": op.mesh.domain.to_config(),
        "nodes_per_wavelength": op.mesh.nodes_per_wavelength,
        "p": op.mesh.p,
        "counts": op.mesh.counts.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(op.matrix, dtype=np.complex128).tobytes())


def load_operator(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise BieError("not an operator container")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        data = np.frombuffer(fh.read(), dtype=np.complex128).reshape(header["shape"])
    return header, data


def operator_from_file(path: str | Path) -> LayerOperator:
    from .geom import build_domain

    header, data = load_operator(path)
    dom = build_domain(header["domain"])
    mesh = _assemble_mesh(dom, header["k"], header["nodes_per_wavelength"], header["p"], np.array(header["counts"]))
    if mesh.fingerprint != header["mesh_hash"]:
        raise BieError("mesh hash mismatch")
    return LayerOperator(header["k"], data.copy(), mesh)
