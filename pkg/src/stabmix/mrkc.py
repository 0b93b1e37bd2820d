"""Multirate stabilized integration.

The outer s-stage first-order scheme advances y' = f_F + f_S using an
averaged force: each force evaluation solves the auxiliary problem
u' = f_F(u) + f_S(y), u(0) = y over a short window eta with an m-stage
inner scheme, and returns (u(eta) - y)/eta.  The averaging damps the fast
part, so the outer stage count depends only on the slow spectral radius.

The mixed-precision variant applies the order-preserving machinery on both
levels: one high-precision evaluation of f_F and of f_S per time step, all
remaining force evaluations in the low-precision format.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import precision
from .chebyshev import (InnerCoefficients, make_inner_coefficients,
                        make_rkc_coefficients, stability_boundary)
from .errors import NonFiniteState
from .problems import MultirateProblem, estimate_spectral_radius
from .rkc import EvalCounters, IntegrationTrace, _check_finite, _sampler

__all__ = [
    "MultiratePlan",
    "select_multirate_plan",
    "phi",
    "averaged_force",
    "mrkc_integrate",
    "MpAveragedForce",
    "mp_mrkc_integrate",
]


@dataclass(frozen=True)
class MultiratePlan:
    dt: float
    rho_S: float
    rho_F: float
    s: int
    m: int
    eta: float
    eps: float

    @property
    def beta(self) -> float:
        return 2.0 - 4.0 * self.eps / 3.0

    def __post_init__(self):
        tol = 1.0 + 1e-12
        if self.dt * self.rho_S > self.beta * self.s**2 * tol:
            raise ValueError("outer stage count violates the slow constraint")
        if self.eta * self.rho_F > self.beta * self.m**2 * tol:
            raise ValueError("inner stage count violates the fast constraint")
        if self.eta > 8.0 * self.dt * tol:
            raise ValueError("averaging window exceeds 8*dt")


def select_multirate_plan(dt: float, rho_S: float, rho_F: float,
                          eps: float = 0.05) -> MultiratePlan:
    """Smallest (s, m) with dt*rho_S <= beta*s^2 and eta*rho_F <= beta*m^2
    for eta = 6*dt*m^2/(beta*s^2*(m^2-1)); m is computed by inserting the
    eta formula into the fast constraint, then eta follows.

    The eta formula needs m >= 2; when even m = 2 over-resolves the fast
    scale we keep m = 2 rather than degenerate to a single inner stage.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    beta = 2.0 - 4.0 * eps / 3.0
    s = max(1, int(np.ceil(np.sqrt(dt * rho_S / beta))))
    while dt * rho_S > beta * s**2:
        s += 1
    # inserting eta(m) into eta*rho_F <= beta*m^2 gives
    # m^2 >= 1 + 6*dt*rho_F / (beta^2 s^2)
    m = int(np.ceil(np.sqrt(1.0 + 6.0 * dt * rho_F / (beta**2 * s**2))))
    m = max(m, 2)
    eta = 6.0 * dt / (beta * s**2) * m**2 / (m**2 - 1.0)
    return MultiratePlan(dt, rho_S, rho_F, s, m, eta, eps)


def phi(z):
    """(e^z - 1)/z with a series evaluation near zero; phi(0) = 1."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = np.where(small,
                   1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0,
                   np.expm1(zs) / zs)
    return out if out.ndim else float(out)


def averaged_force(mr: MultirateProblem, y: np.ndarray, eta: float,
                   inner: InnerCoefficients,
                   counters: EvalCounters | None = None) -> np.ndarray:
    """(u(eta) - y)/eta by one m-stage inner sweep with the slow force
    frozen at y; each stage is already divided by eta."""
    fS = mr.f_S(y)
    fF = mr.f_F(y)
    if counters is not None:
        counters.n_high += 2
    h_prev = np.zeros_like(y)
    h = inner.alpha[1] * (fF + fS)
    _check_finite(h, 1)
    for j in range(2, inner.m + 1):
        fF_j = mr.f_F(y + eta * h)
        if counters is not None:
            counters.n_high += 1
        h_new = (inner.beta[j] * h + inner.gamma[j] * h_prev
                 + inner.alpha[j] * (fF_j + fS))
        _check_finite(h_new, j)
        h_prev, h = h, h_new
    return h


def _mr_radii(mr: MultirateProblem, y: np.ndarray, seed: int):
    rho_F = estimate_spectral_radius(lambda v: mr.A_F @ v, y, seed=seed)
    rho_S = estimate_spectral_radius(lambda v: mr.A_S @ v, y, seed=seed)
    return rho_S, rho_F


def mrkc_integrate(mr: MultirateProblem, dt: float, eps: float = 0.05,
                   T: float | None = None, record_times=None,
                   rho_seed: int = 0) -> IntegrationTrace:
    """Outer first-order recursion driven by the averaged force, with the
    (s, m, eta) plan re-derived from the two spectral radii each step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = mr.base.T if T is None else T
    trace = IntegrationTrace()
    maybe_record = _sampler(record_times)
    y = mr.base.y0.copy()
    t = 0.0
    rho = None
    maybe_record(t, y, trace, dt)
    while t < T - 1e-12 * max(T, 1.0):
        step = min(dt, T - t)
        if rho is None:
            rho = _mr_radii(mr, y, rho_seed)
        rho_S, rho_F = rho
        plan = select_multirate_plan(step, rho_S, rho_F, eps)
        coeffs = make_rkc_coefficients(1, plan.s, eps)
        inner = make_inner_coefficients(plan.m, eps)

        fbar = lambda v: averaged_force(mr, v, plan.eta, inner, trace.counters)
        d_prev = np.zeros_like(y)
        d = coeffs.mu[1] * step * fbar(y)
        for j in range(2, plan.s + 1):
            d_new = (coeffs.nu[j] * d + coeffs.kappa[j] * d_prev
                     + coeffs.mu[j] * step * fbar(y + d))
            _check_finite(d_new, j)
            d_prev, d = d, d_new
        y = y + d
        t += step
        trace.record(t, y, plan.s, rho_S, m=plan.m, eta=plan.eta)
        maybe_record(t, y, trace, dt)
    trace.final_state = y
    return trace


class MpAveragedForce:
    """Mixed-precision machinery around the averaged force.

    ``tilde`` keeps the lowest-order term in high precision (one f_F and
    one f_S evaluation), replacing the remaining fast evaluations with
    low-precision increments; ``hat`` is the fully low-precision sweep used
    inside the outer finite difference.
    """

    def __init__(self, mr: MultirateProblem, fmt: precision.FloatFormat):
        self.mr = mr
        self.fmt = fmt
        self.AF_low = precision.squeeze_matrix(mr.A_F, fmt)
        self.AS_low = precision.squeeze_matrix(mr.A_S, fmt)
        self.force_low = precision.round_to(mr.force_S, fmt)

    def _fF_low(self, y):
        return self.AF_low.apply(y)

    def _fS_low(self, y):
        return self.AS_low.apply(y) + self.force_low

    def tilde(self, y: np.ndarray, eta: float, inner: InnerCoefficients,
              counters: EvalCounters) -> np.ndarray:
        """f_F and f_S once in high precision; inner increments
        Dhat_F,j ~ f_F(y + eta*h_j) - f_F(y) via the low-precision linear
        part applied to eta*h_j."""
        fF = self.mr.f_F(y)
        fS = self.mr.f_S(y)
        counters.n_high += 2
        base = fF + fS
        h_prev = np.zeros_like(y)
        h = inner.alpha[1] * base
        _check_finite(h, 1)
        for j in range(2, inner.m + 1):
            dfF = self.AF_low.apply(eta * h)
            counters.n_low += 1
            h_new = (inner.beta[j] * h + inner.gamma[j] * h_prev
                     + inner.alpha[j] * (base + dfF))
            _check_finite(h_new, j)
            h_prev, h = h, h_new
        return h

    def hat(self, y: np.ndarray, eta: float, inner: InnerCoefficients,
            counters: EvalCounters) -> np.ndarray:
        """Fully low-precision inner sweep."""
        yr = precision.round_to(y, self.fmt)
        fF = self._fF_low(yr)
        fS = self._fS_low(yr)
        counters.n_low += 2
        h_prev = np.zeros_like(y)
        h = inner.alpha[1] * (fF + fS)
        for j in range(2, inner.m + 1):
            fF_j = self._fF_low(yr + eta * h)
            counters.n_low += 1
            h_new = (inner.beta[j] * h + inner.gamma[j] * h_prev
                     + inner.alpha[j] * (fF_j + fS))
            _check_finite(h_new, j)
            h_prev, h = h, h_new
        return h


def mp_mrkc_integrate(mr: MultirateProblem, dt: float,
                      fmt: precision.FloatFormat, eps: float = 0.05,
                      T: float | None = None, record_times=None,
                      rho_seed: int = 0) -> IntegrationTrace:
    """Order-preserving mixed-precision multirate integration.

    Per step: one high-precision averaged force (one f_F, one f_S), then
    s - 1 outer increments Dhat_j = ((fhat_eta(y + delta d_j) -
    ftilde_eta(y)) / delta with delta = sqrt(u)/dt, evaluated through the
    fully low-precision inner sweep.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = fmt.u
    if dt > np.sqrt(u) and not fmt.is_double:
        warnings.warn(
            "the finite-difference outer increment is only first-order "
            "accurate for dt <= sqrt(u) of the low-precision format",
            UserWarning, stacklevel=2)
    T = mr.base.T if T is None else T
    mp = MpAveragedForce(mr, fmt)
    trace = IntegrationTrace()
    maybe_record = _sampler(record_times)
    y = mr.base.y0.copy()
    t = 0.0
    rho = None
    maybe_record(t, y, trace, dt)
    while t < T - 1e-12 * max(T, 1.0):
        step = min(dt, T - t)
        if rho is None:
            rho = _mr_radii(mr, y, rho_seed)
        rho_S, rho_F = rho
        plan = select_multirate_plan(step, rho_S, rho_F, eps)
        coeffs = make_rkc_coefficients(1, plan.s, eps)
        inner = make_inner_coefficients(plan.m, eps)

        ftilde = mp.tilde(y, plan.eta, inner, trace.counters)
        delta = np.sqrt(u) / step
        d_prev = np.zeros_like(y)
        d = coeffs.mu[1] * step * ftilde
        for j in range(2, plan.s + 1):
            fhat = mp.hat(y + delta * d, plan.eta, inner, trace.counters)
            dfe = (fhat - ftilde) / delta
            d_new = (coeffs.nu[j] * d + coeffs.kappa[j] * d_prev
                     + coeffs.mu[j] * step * (ftilde + dfe))
            _check_finite(d_new, j)
            d_prev, d = d, d_new
        y = y + d
        t += step
        trace.record(t, y, plan.s, rho_S, m=plan.m, eta=plan.eta)
        maybe_record(t, y, trace, dt)
    trace.final_state = y
    return trace
