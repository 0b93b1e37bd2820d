"""Stabilized explicit integrators in delta form, a naive mixed-precision
baseline, and a classical RK4 reference solver.

The s-stage recursion is implemented in increments d_j = y_j - y^n (the
delta form), which accumulates less rounding error than updating the stages
directly.  Only a rolling window of two increments is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import precision
from .chebyshev import (RkcCoefficients, make_rkc_coefficients,
                        select_stages, stability_boundary)
from .errors import NonFiniteState
from .problems import OdeProblem, estimate_spectral_radius

__all__ = [
    "StepPlan",
    "IntegrationTrace",
    "EvalCounters",
    "LowPrecRhs",
    "rkc_step",
    "rkc_integrate",
    "rk4_reference",
]


@dataclass(frozen=True)
class StepPlan:
    dt: float
    rho: float
    s: int
    eps: float
    p: int

    def __post_init__(self):
        if self.dt * self.rho > stability_boundary(self.p, self.s, self.eps) * (1 + 1e-12):
            raise ValueError("step plan violates the stability constraint")


@dataclass
class EvalCounters:
    n_high: int = 0
    n_low: int = 0


@dataclass
class IntegrationTrace:
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    inner_stages: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    sample_times: list = field(default_factory=list)
    sample_states: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    counters: EvalCounters = field(default_factory=EvalCounters)

    def record(self, t, y, s, rho, m=None, eta=None):
        self.times.append(t)
        self.norms.append(float(np.linalg.norm(y)))
        self.stages.append(s)
        self.rhos.append(rho)
        if m is not None:
            self.inner_stages.append(m)
            self.etas.append(eta)


class LowPrecRhs:
    """f evaluated entirely in a reduced-precision format: the linear part
    through a squeezed rounded matvec, the nonlinear part rounded in and
    out.  The final sum of the two parts is left in full precision (the
    standard naive mixed-precision baseline)."""

    def __init__(self, problem: OdeProblem, fmt: precision.FloatFormat):
        self.problem = problem
        self.fmt = fmt
        self.A_low = (precision.squeeze_matrix(problem.A, fmt)
                      if problem.A is not None else None)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        yhat = precision.round_to(y, self.fmt)
        parts = []
        if self.A_low is not None:
            parts.append(self.A_low.apply(yhat, round_input=False))
        if self.problem.g is not None:
            parts.append(precision.round_to(self.problem.g(yhat), self.fmt))
        return parts[0] if len(parts) == 1 else parts[0] + parts[1]


def _check_finite(d: np.ndarray, stage: int):
    if not np.all(np.isfinite(d)):
        raise NonFiniteState(f"non-finite values at stage {stage}")


def rkc_step(f, y: np.ndarray, t: float, coeffs: RkcCoefficients,
             dt: float) -> np.ndarray:
    """One s-stage step of the stabilized scheme, full precision.

    ``f`` is called as f(t, y); autonomous right-hand sides simply ignore t.
    """
    c = coeffs.c
    fy = f(t, y)
    d_prev = np.zeros_like(y)
    d = coeffs.mu[1] * dt * fy
    _check_finite(d, 1)
    for j in range(2, coeffs.s + 1):
        d_new = (coeffs.nu[j] * d + coeffs.kappa[j] * d_prev
                 + coeffs.mu[j] * dt * f(t + c[j - 1] * dt, y + d)
                 + coeffs.gamma[j] * dt * fy)
        _check_finite(d_new, j)
        d_prev, d = d, d_new
    return y + d


def _sampler(record_times):
    """Closure matching integration times against a requested sample grid."""
    record_times = None if record_times is None else np.asarray(record_times, float)
    idx = [0]

    def maybe_record(t, y, trace, dt):
        if record_times is None:
            return
        while idx[0] < record_times.size and t >= record_times[idx[0]] - 1e-9 * max(dt, 1.0):
            trace.sample_times.append(record_times[idx[0]])
            trace.sample_states.append(y.copy())
            idx[0] += 1

    return maybe_record


def rkc_integrate(problem: OdeProblem, dt: float, p: int,
                  eps: float | None = None, mode: str = "exact",
                  fmt: precision.FloatFormat | None = None,
                  T: float | None = None, freeze_rho: bool | None = None,
                  record_times=None, rho_seed: int = 0,
                  force_s: int | None = None) -> IntegrationTrace:
    """Integrate to the end time with constant dt (last step shortened to
    land on T exactly), re-estimating the spectral radius and re-selecting
    the stage count each step for nonlinear problems.

    mode "exact" evaluates f in full precision; mode "naive-mixed" routes
    every f evaluation through the reduced-precision format ``fmt`` while
    keeping vector recombinations in full precision.  ``force_s`` pins the
    stage count (the caller is then responsible for picking a stable dt).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = problem.T if T is None else T
    if freeze_rho is None:
        freeze_rho = problem.is_linear

    trace = IntegrationTrace()
    counters = trace.counters
    if mode == "exact":
        def f(t, y):
            counters.n_high += 1
            return problem.f(y)
    elif mode == "naive-mixed":
        if fmt is None:
            raise ValueError("naive-mixed mode needs a format")
        low = LowPrecRhs(problem, fmt)

        def f(t, y):
            counters.n_low += 1
            return low(y)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    maybe_record = _sampler(record_times)
    y = problem.y0.copy()
    t = 0.0
    rho = None
    maybe_record(t, y, trace, dt)
    while t < T - 1e-12 * max(T, 1.0):
        step = min(dt, T - t)
        if rho is None or not freeze_rho:
            rho = estimate_spectral_radius(problem, y, seed=rho_seed)
        s = force_s if force_s is not None else select_stages(p, step, rho, eps)
        coeffs = make_rkc_coefficients(p, s, eps)
        y = rkc_step(f, y, t, coeffs, step)
        t += step
        trace.record(t, y, s, rho)
        maybe_record(t, y, trace, dt)
    trace.final_state = y
    return trace


def rk4_step(f, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, 4)
    return out


def rk4_reference(problem: OdeProblem, dt_target: float,
                  T: float | None = None, record_times=None,
                  rho_seed: int = 0) -> IntegrationTrace:
    """Reference trajectory by classical RK4 with a much smaller internal
    step dt_ref = min(2/rho, dt_target/4), adjusted to divide dt_target so
    states are recorded exactly at its multiples.

    The spectral radius is re-estimated at the start of every dt_target
    interval for nonlinear problems (their stiffness can grow along the
    trajectory), and dt_ref is shrunk accordingly.
    """
    if dt_target <= 0:
        raise ValueError("dt_target must be positive")
    T = problem.T if T is None else T
    trace = IntegrationTrace()
    maybe_record = _sampler(record_times)

    def f(t, y):
        trace.counters.n_high += 1
        return problem.f(y)

    y = problem.y0.copy()
    t = 0.0
    rho = None
    maybe_record(t, y, trace, dt_target)
    while t < T - 1e-12 * max(T, 1.0):
        interval = min(dt_target, T - t)
        if rho is None or not problem.is_linear:
            rho = estimate_spectral_radius(problem, y, seed=rho_seed)
        dt_ref = min(2.0 / rho if rho > 0 else np.inf, dt_target / 4.0)
        n_sub = max(4, int(np.ceil(interval / dt_ref)))
        dt_sub = interval / n_sub
        for _ in range(n_sub):
            y = rk4_step(f, y, t, dt_sub)
            t += dt_sub
        t = round(t / dt_target) * dt_target if abs(
            t - round(t / dt_target) * dt_target) < 1e-9 * dt_target else t
        trace.record(t, y, 4, rho)
        maybe_record(t, y, trace, dt_target)
    trace.final_state = y
    return trace
