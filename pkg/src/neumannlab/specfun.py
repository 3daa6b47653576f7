"""Hankel functions of the first kind (orders 0, 1) and the conormal amplitude b(x).

Evaluation strategy for H_n^(1)(x), x > 0:

* ``x < 10``: ascending power series for J_n and Y_n.
* ``10 <= x < 40``: the Laplace-type integral

      H_n(x) = sqrt(2/(pi x)) exp(i(x - n pi/2 - pi/4)) / Gamma(n + 1/2)
               * int_0^inf exp(-s) s^(n-1/2) (1 + i s/(2x))^(n-1/2) ds

  evaluated with generalized Gauss-Laguerre quadrature.
* ``x >= 40``: the same integral expanded in powers of 1/x (Horner form).

All routines are vectorized over ``x``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import binom, gamma, roots_genlaguerre

SERIES_CROSSOVER = 10.0
ASYMPTOTIC_CROSSOVER = 40.0
_SERIES_TERMS = 48
_LAGUERRE_NODES = 32
_ASYMPTOTIC_TERMS = 14
_EULER_GAMMA = 0.57721566490153286061

B0 = math.sqrt(math.pi) / 2.0


class NonPositiveArgument(ValueError):
    pass


def _check_positive(x: np.ndarray) -> None:
    if np.any(~(x > 0)):
        raise NonPositiveArgument("argument must be strictly positive")


# ---------------------------------------------------------------------------
# ascending series
# ---------------------------------------------------------------------------


def _series(order: int, x: np.ndarray) -> np.ndarray:
    """J_n + i Y_n from the ascending series (accurate for x <= ~12)."""
    z = x / 2.0
    z2 = z * z
    log_term = np.log(z)
    if order == 0:
        term = np.ones_like(x)
        J = term.copy()
        S = np.zeros_like(x)
        harmonic = 0.0
        for m in range(1, _SERIES_TERMS):
            term = term * (-z2) / (m * m)
            harmonic += 1.0 / m
            J += term
            S -= harmonic * term
        Y = (2.0 / math.pi) * ((log_term + _EULER_GAMMA) * J + S)
        return J + 1j * Y
    # order 1
    term = z.copy()
    J = term.copy()
    # psi(1) + psi(2) = -2 gamma + 1
    digamma_sum = -2.0 * _EULER_GAMMA + 1.0
    S = digamma_sum * term
    h_m, h_m1 = 0.0, 1.0
    for m in range(1, _SERIES_TERMS):
        term = term * (-z2) / (m * (m + 1))
        h_m += 1.0 / m
        h_m1 += 1.0 / (m + 1)
        J += term
        S += (-2.0 * _EULER_GAMMA + h_m + h_m1) * term
    Y = -2.0 / (math.pi * x) + (2.0 / math.pi) * log_term * J - S / math.pi
    return J + 1j * Y


# ---------------------------------------------------------------------------
# integral representation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _laguerre(order: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_genlaguerre(n, order - 0.5)


@lru_cache(maxsize=None)
def _asymptotic_coefficients(order: int, terms: int) -> np.ndarray:
    # int exp(-s) s^(n-1/2) (1 + i s/(2x))^(n-1/2) ds = sum_j c_j x^-j
    p = order - 0.5
    j = np.arange(terms)
    return binom(p, j) * (0.5j) ** j * gamma(j + order + 0.5)


def _envelope(order: int, x: np.ndarray) -> np.ndarray:
    phase = x - (order * 0.5 + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * np.exp(1j * phase) / gamma(order + 0.5)


def _laguerre_integral(order: int, x: np.ndarray) -> np.ndarray:
    s, w = _laguerre(order, _LAGUERRE_NODES)
    acc = np.zeros(x.shape, dtype=complex)
    inv = 0.5j / x
    for si, wi in zip(s, w):
        acc += wi * (1.0 + si * inv) ** (order - 0.5)
    return acc


def _asymptotic_integral(order: int, x: np.ndarray, terms: int = _ASYMPTOTIC_TERMS) -> np.ndarray:
    c = _asymptotic_coefficients(order, terms)
    t = 1.0 / x
    acc = np.full(x.shape, c[-1], dtype=complex)
    for cj in c[-2::-1]:
        acc = acc * t + cj
    return acc


def hankel1_integral(order: int, x) -> np.ndarray:
    """Hankel function from the Gauss-Laguerre integral (any x > 0, best for x >= 6)."""
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    return _envelope(order, x) * _laguerre_integral(order, x)


def hankel1_series(order: int, x) -> np.ndarray:
    """Hankel function from the ascending series (best for x <= 12)."""
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    return _series(order, x)


def hankel1(order: int, x) -> np.ndarray | complex:
    """H_order^(1)(x) for order in {0, 1} and real x > 0."""
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are supported")
    xa = np.asarray(x, dtype=float)
    _check_positive(xa)
    flat = xa.ravel()
    out = np.empty(flat.shape, dtype=complex)
    small = flat < SERIES_CROSSOVER
    large = flat >= ASYMPTOTIC_CROSSOVER
    mid = ~(small | large)
    if small.any():
        out[small] = _series(order, flat[small])
    if mid.any():
        xm = flat[mid]
        out[mid] = _envelope(order, xm) * _laguerre_integral(order, xm)
    if large.any():
        xl = flat[large]
        out[large] = _envelope(order, xl) * _asymptotic_integral(order, xl)
    out = out.reshape(xa.shape)
    return complex(out) if out.ndim == 0 else out


def bessel_j(order: int, x) -> np.ndarray:
    return np.real(hankel1(order, x))


def bessel_y(order: int, x) -> np.ndarray:
    return np.imag(hankel1(order, x))


# ---------------------------------------------------------------------------
# conormal amplitude
# ---------------------------------------------------------------------------


def _b_integrand(tau: float, x: float) -> complex:
    return math.exp(-tau) * math.sqrt(tau) * np.sqrt(1.0 + 0.5j * tau / x)


def conormal_b(x, *, nodes: int = 64, tol: float = 1e-12) -> np.ndarray | complex:
    """b(x) = int_0^inf e^-t t^(1/2) (1 - t/(2 i x))^(1/2) dt.

    Gauss-Laguerre with ``nodes`` points; entries where doubling the rule moves
    the value by more than ``tol`` are recomputed by adaptive quadrature.
    """
    xa = np.asarray(x, dtype=float)
    _check_positive(xa)
    flat = xa.ravel()
    out = _gl_b(flat, nodes)
    check = _gl_b(flat, 2 * nodes)
    bad = np.abs(out - check) > tol
    for idx in np.flatnonzero(bad):
        xi = float(flat[idx])
        re = integrate.quad(lambda t: _b_integrand(t, xi).real, 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        im = integrate.quad(lambda t: _b_integrand(t, xi).imag, 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        out[idx] = re + 1j * im
    out = out.reshape(xa.shape)
    return complex(out) if out.ndim == 0 else out


def _gl_b(x: np.ndarray, nodes: int) -> np.ndarray:
    s, w = _laguerre(1, nodes)
    return (w[None, :] * np.sqrt(1.0 + 0.5j * s[None, :] / x[:, None])).sum(axis=1)


def conormal_b_coefficients(terms: int) -> np.ndarray:
    """Coefficients b_j of the large-x expansion b(x) ~ sum_j b_j x^-j."""
    return _asymptotic_coefficients(1, terms).copy()


def conormal_b_expansion(x, terms: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    c = conormal_b_coefficients(terms)
    return sum(cj * x ** (-j) for j, cj in enumerate(c))


def conormal_b_upper_bound(x) -> np.ndarray:
    """Computable majorant int e^-t t^(1/2) (1 + t/(2x))^(1/2) dt >= |b(x)|."""
    x = np.asarray(x, dtype=float)
    s, w = _laguerre(1, 96)
    return (w[None, :] * np.sqrt(1.0 + 0.5 * s[None, :] / x.ravel()[:, None])).sum(axis=1).reshape(x.shape)


def hankel1_from_b(x, b=None) -> np.ndarray:
    """Rebuild H_1^(1)(x) from b(x) through the integral representation."""
    x = np.asarray(x, dtype=float)
    if b is None:
        b = conormal_b(x)
    return _envelope(1, x) * b


# ---------------------------------------------------------------------------
# self test
# ---------------------------------------------------------------------------


def wronskian_defect(x) -> np.ndarray:
    """|x (J0 Y0' - J0' Y0) - 2/pi| using Y0' = -Y1, J0' = -J1."""
    x = np.asarray(x, dtype=float)
    h0 = hankel1(0, x)
    h1 = hankel1(1, x)
    w = x * (h1.real * h0.imag - h0.real * h1.imag)
    return np.abs(w - 2.0 / math.pi)


def selftest() -> dict[str, float]:
    xs = np.geomspace(0.1, 500.0, 400)
    overlap = np.linspace(8.0, 12.0, 81)
    worst_overlap = 0.0
    for n in (0, 1):
        a = hankel1_series(n, overlap)
        b = hankel1_integral(n, overlap)
        worst_overlap = max(worst_overlap, float(np.max(np.abs(a - b) / np.abs(b))))
    return {
        "wronskian_max_defect": float(np.max(wronskian_defect(xs))),
        "overlap_max_rel_diff": worst_overlap,
        "b_limit_defect_at_1e4": float(abs(conormal_b(1e4) - B0)),
    }
