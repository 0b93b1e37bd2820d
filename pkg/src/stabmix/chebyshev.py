"""Chebyshev polynomials and coefficient tables for stabilized explicit
Runge-Kutta (RKC-type) schemes.

All coefficient generation runs in double precision and is cached per
(order, stages, damping); the recurrences stay well-conditioned for the
arguments arising here (omega0 slightly above 1, stage counts <= a few
hundred).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStages

__all__ = [
    "cheb_T",
    "cheb_U",
    "cheb_T_derivs",
    "RkcCoefficients",
    "InnerCoefficients",
    "make_rkc_coefficients",
    "make_inner_coefficients",
    "stability_poly",
    "shifted_stability_poly",
    "shifted2_stability_poly",
    "stability_boundary",
    "select_stages",
]

DEFAULT_DAMPING = {1: 0.05, 2: 2.0 / 13.0}


def cheb_T(j: int, x):
    """Chebyshev polynomial of the first kind, T_j(x), by the three-term
    recurrence T_j = 2x T_{j-1} - T_{j-2}."""
    if j < 0:
        raise ValueError("degree must be >= 0")
    t_prev, t = np.ones_like(np.asarray(x, dtype=float)), np.asarray(x, dtype=float)
    if j == 0:
        return t_prev if np.ndim(x) else 1.0
    for _ in range(j - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t if np.ndim(x) else float(t)


def cheb_U(j: int, x):
    """Chebyshev polynomial of the second kind, U_j(x)."""
    if j < 0:
        raise ValueError("degree must be >= 0")
    u_prev = np.ones_like(np.asarray(x, dtype=float))
    u = 2.0 * np.asarray(x, dtype=float)
    if j == 0:
        return u_prev if np.ndim(x) else 1.0
    for _ in range(j - 1):
        u_prev, u = u, 2.0 * x * u - u_prev
    return u if np.ndim(x) else float(u)


def cheb_T_derivs(j: int, x: float) -> tuple[float, float, float]:
    """(T_j, T_j', T_j'') at scalar x via differentiated recurrences."""
    if j < 0:
        raise ValueError("degree must be >= 0")
    t0, d0, s0 = 1.0, 0.0, 0.0
    if j == 0:
        return t0, d0, s0
    t1, d1, s1 = float(x), 1.0, 0.0
    for _ in range(j - 1):
        t2 = 2.0 * x * t1 - t0
        d2 = 2.0 * t1 + 2.0 * x * d1 - d0
        s2 = 4.0 * d1 + 2.0 * x * s1 - s0
        t0, d0, s0, t1, d1, s1 = t1, d1, s1, t2, d2, s2
    return t1, d1, s1


@dataclass(frozen=True)
class RkcCoefficients:
    """Full coefficient set for an s-stage first- or second-order scheme.

    Arrays are indexed by stage: b, a, c have length s+1 (entries 0..s);
    mu, nu, kappa, gamma have length s+1 with entry 0 unused (and nu/kappa/
    gamma also unused at entry 1).
    """

    p: int
    s: int
    eps: float
    omega0: float
    omega1: float
    b: np.ndarray
    a: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class InnerCoefficients:
    """Coefficients of the m-stage inner recursion used by the averaged
    force: upsilon pair, a_j = 1/T_j(upsilon0), and the alpha/beta/gamma
    recursion weights."""

    m: int
    eps: float
    upsilon0: float
    upsilon1: float
    a: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


_coeff_cache: dict[tuple, RkcCoefficients] = {}
_inner_cache: dict[tuple, InnerCoefficients] = {}
_cache_lock = threading.Lock()


def make_rkc_coefficients(p: int, s: int, eps: float | None = None) -> RkcCoefficients:
    """Coefficient table for the s-stage scheme of order p in {1, 2}.

    Damping defaults to 0.05 (p=1) and 2/13 (p=2).
    """
    if p not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if eps is None:
        eps = DEFAULT_DAMPING[p]
    if eps < 0:
        raise ValueError("damping must be >= 0")
    s_min = 1 if p == 1 else 2
    if s < s_min:
        raise InvalidStages(f"order {p} needs at least {s_min} stage(s), got {s}")

    key = (p, s, float(eps))
    with _cache_lock:
        hit = _coeff_cache.get(key)
    if hit is not None:
        return hit

    omega0 = 1.0 + eps / s**2
    T = np.empty(s + 1)
    dT = np.empty(s + 1)
    ddT = np.empty(s + 1)
    for j in range(s + 1):
        T[j], dT[j], ddT[j] = cheb_T_derivs(j, omega0)

    b = np.empty(s + 1)
    if p == 1:
        omega1 = T[s] / dT[s]
        b = 1.0 / T
    else:
        omega1 = dT[s] / ddT[s]
        b[2:] = ddT[2:] / dT[2:] ** 2
        b[0] = b[1] = b[2]
    a = 1.0 - b * T

    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    kappa = np.zeros(s + 1)
    gamma = np.zeros(s + 1)
    mu[1] = b[1] * omega1
    for j in range(2, s + 1):
        mu[j] = 2.0 * omega1 * b[j] / b[j - 1]
        nu[j] = 2.0 * omega0 * b[j] / b[j - 1]
        kappa[j] = -b[j] / b[j - 2]
        gamma[j] = -a[j - 1] * mu[j]

    c = np.zeros(s + 1)
    c[1] = mu[1]
    for j in range(2, s + 1):
        c[j] = nu[j] * c[j - 1] + kappa[j] * c[j - 2] + mu[j] + gamma[j]

    coeffs = RkcCoefficients(p, s, float(eps), omega0, omega1,
                             b, a, mu, nu, kappa, gamma, c)
    with _cache_lock:
        _coeff_cache[key] = coeffs
    return coeffs


def make_inner_coefficients(m: int, eps: float = 0.05) -> InnerCoefficients:
    """Coefficients of the m-stage inner recursion (first-order family)."""
    if m < 1:
        raise InvalidStages(f"inner stage count must be >= 1, got {m}")
    key = (m, float(eps))
    with _cache_lock:
        hit = _inner_cache.get(key)
    if hit is not None:
        return hit

    u0 = 1.0 + eps / m**2
    T = np.empty(m + 1)
    dT = np.empty(m + 1)
    for j in range(m + 1):
        T[j], dT[j], _ = cheb_T_derivs(j, u0)
    u1 = T[m] / dT[m]
    a = 1.0 / T

    alpha = np.zeros(m + 1)
    beta = np.zeros(m + 1)
    gamma = np.zeros(m + 1)
    alpha[1] = u1 / u0
    for j in range(2, m + 1):
        alpha[j] = 2.0 * u1 * a[j] / a[j - 1]
        beta[j] = 2.0 * u0 * a[j] / a[j - 1]
        gamma[j] = -a[j] / a[j - 2]

    inner = InnerCoefficients(m, float(eps), u0, u1, a, alpha, beta, gamma)
    with _cache_lock:
        _inner_cache[key] = inner
    return inner


def stability_poly(coeffs: RkcCoefficients, z):
    """R_s(z) = a_s + b_s T_s(omega0 + omega1 z): amplification factor of
    one step on y' = lambda*y with z = lambda*dt."""
    x = coeffs.omega0 + coeffs.omega1 * np.asarray(z, dtype=float)
    val = coeffs.a[coeffs.s] + coeffs.b[coeffs.s] * cheb_T(coeffs.s, x)
    return val if np.ndim(z) else float(val)


def shifted_stability_poly(coeffs: RkcCoefficients, z, k: int | None = None):
    """(R_k(z) - 1)/z evaluated through its Chebyshev-U sum form, which is
    well defined at z = 0 (value c_k)."""
    k = coeffs.s if k is None else k
    x = coeffs.omega0 + coeffs.omega1 * np.asarray(z, dtype=float)
    acc = np.zeros_like(x)
    for j in range(1, k + 1):
        acc = acc + (coeffs.b[k] / coeffs.b[j]) * cheb_U(k - j, x) \
            * (coeffs.mu[j] + coeffs.gamma[j])
    return acc if np.ndim(z) else float(acc)


def shifted2_stability_poly(coeffs: RkcCoefficients, z, k: int | None = None):
    """(R_k(z) - 1 - c_k z)/z^2 through its Chebyshev-U sum form; equals 1/2
    at z = 0 for the second-order family with k = s."""
    k = coeffs.s if k is None else k
    x = coeffs.omega0 + coeffs.omega1 * np.asarray(z, dtype=float)
    acc = np.zeros_like(x)
    for j in range(2, k + 1):
        acc = acc + (coeffs.b[k] / coeffs.b[j]) * cheb_U(k - j, x) \
            * coeffs.mu[j] * coeffs.c[j - 1]
    return acc if np.ndim(z) else float(acc)


def stability_boundary(p: int, s: int, eps: float | None = None) -> float:
    """Length of the negative-real stability interval guaranteed for the
    s-stage scheme of order p with damping eps."""
    if p not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if eps is None:
        eps = DEFAULT_DAMPING[p]
    s_min = 1 if p == 1 else 2
    if s < s_min:
        raise InvalidStages(f"order {p} needs at least {s_min} stage(s), got {s}")
    if p == 1:
        return (2.0 - 4.0 * eps / 3.0) * s**2
    return (2.0 / 3.0) * (1.0 - 2.0 * eps / 15.0) * (s**2 - 1)


def select_stages(p: int, dt: float, rho: float, eps: float | None = None) -> int:
    """Smallest stage count s with dt*rho <= stability_boundary(p, s, eps)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    s = 1 if p == 1 else 2
    while dt * rho > stability_boundary(p, s, eps):
        s += 1
    return s
