"""Order-preserving mixed-precision stabilized integrators.

One step evaluates f once in high precision and replaces the remaining
s - 1 evaluations with cheap low-precision increments
Dhat_j ~ f(y + d_j) - f(y):

    d_1 = mu_1 dt f(y)
    d_j = nu_j d_{j-1} + kappa_j d_{j-2} + mu_j dt (f(y) + Dhat_{j-1})
          + gamma_j dt f(y)

First-order increment accuracy O(eps*dt) preserves first-order convergence;
the hybrid variant upgrades a stage to the O(dt^2)-accurate increment
whenever ||d_j - c_j dt f(y)||_2 <= ||d_j||_2 (a convergence-regime
detector), retaining internal stability for large steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import precision
from .chebyshev import (RkcCoefficients, cheb_U, make_rkc_coefficients,
                        select_stages, stability_poly)
from .errors import DegenerateDeltaWarning, NonLinearProblem
from .problems import OdeProblem, estimate_spectral_radius
from .rkc import EvalCounters, IntegrationTrace, _check_finite, _sampler

__all__ = [
    "DeltaFStrategy",
    "STRATEGY_KINDS",
    "mp_rkc_step",
    "mp_rkc_integrate",
    "q_order_rk_linear_step",
    "CostReport",
    "cost_report",
    "internal_stability_report",
]

STRATEGY_KINDS = (
    "scenario1_first",
    "scenario1_second",
    "scenario2_fd_first",
    "scenario2_fd_second",
    "analytic_jacobian",
    "exact_difference",
)

# CLI strategy ids -> (first-order kind, second-order kind for the hybrid branch)
STRATEGY_ALIASES = {
    "s1": ("scenario1_first", "scenario1_second"),
    "s2-fd": ("scenario2_fd_first", "scenario2_fd_second"),
    "analytic": ("analytic_jacobian", "analytic_jacobian"),
    "exact-diff": ("exact_difference", "exact_difference"),
}


class DeltaFStrategy:
    """Low-precision evaluation of the stabilizing increments.

    Holds the squeezed low-precision copy of the linear part and dispatches
    between the increment formulas; each call costs one low-precision
    evaluation regardless of internal cheap high-precision vector work.
    """

    def __init__(self, problem: OdeProblem, fmt: precision.FloatFormat,
                 kind: str = "scenario1_first",
                 second_kind: str | None = None):
        if kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {kind!r}")
        if kind.startswith("scenario1") and problem.A is None:
            raise NonLinearProblem(
                "scenario-1 strategies need an explicit linear part")
        if kind == "analytic_jacobian" and problem.g is not None \
                and problem.jac_g_action is None:
            raise ValueError("analytic strategy needs a Jacobian action")
        if kind == "exact_difference" and problem.g is not None \
                and problem.g_diff is None:
            raise ValueError("exact-difference strategy needs g_diff")
        self.problem = problem
        self.fmt = fmt
        self.kind = kind
        self.second_kind = second_kind or {
            "scenario1_first": "scenario1_second",
            "scenario2_fd_first": "scenario2_fd_second",
        }.get(kind, kind)
        self.A_low = (precision.squeeze_matrix(problem.A, fmt)
                      if problem.A is not None else None)
        self._warned_degenerate = False

    # -- per-step caches ----------------------------------------------------

    def step_caches(self, y, fy, dt, need_second, counters: EvalCounters):
        """High-precision quantities reused across the stages of one step:
        g(y) always; A f(y) and g'(y) f(y) only for second-order increments."""
        caches = {"gy": self.problem.g(y) if self.problem.g is not None else None}
        if need_second:
            if self.problem.A is not None:
                caches["Afy"] = self.problem.A @ fy
                counters.n_high += 1
            else:
                caches["Afy"] = np.zeros_like(fy)
            if self.problem.g is not None:
                caches["gpf"] = (self.problem.jac_g_action(y, fy)
                                 if self.problem.jac_g_action is not None
                                 else self._fd_high(y, fy, dt))
                counters.n_high += 1
            else:
                caches["gpf"] = np.zeros_like(fy)
        return caches

    def _fd_high(self, y, v, dt):
        # high-precision forward difference g'(y)v used only as a cache
        delta = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(y, np.inf))
        return (self.problem.g(y + delta * v) - self.problem.g(y)) / delta

    # -- low-precision helpers ---------------------------------------------

    def _g_low(self, y):
        return precision.lowprec_call(self.problem.g, y, self.fmt)

    def _delta_guard(self, delta, d):
        scale = delta * np.linalg.norm(d, np.inf)
        if 0.0 < scale < self.fmt.x_tiny and not self._warned_degenerate:
            warnings.warn(
                "finite-difference shift underflows the low-precision format; "
                "falling back to the direct increment formula",
                DegenerateDeltaWarning, stacklevel=3)
            self._warned_degenerate = True
            return False
        return True

    # -- increment formulas -------------------------------------------------

    def first_order(self, y, d, fy, dt, caches):
        """Dhat_j accurate to O(eps*dt)."""
        kind = self.kind
        if kind == "scenario2_fd_first":
            u = self.fmt.u
            delta = np.sqrt(u) / dt
            if self.problem.g is not None and self._delta_guard(delta, d):
                out = (self._g_low(y + delta * d) - caches["gy"]) / delta
            elif self.problem.g is not None:
                out = self.problem.g(y + d) - caches["gy"]
            else:
                out = 0.0
            if self.A_low is not None:
                out = out + self.A_low.apply(d)
            return out
        if kind == "analytic_jacobian":
            # low-precision action of the derivative linearized at the
            # (high-precision) current state: round the increment going in
            # and the product coming out
            dr = precision.round_to(d, self.fmt)
            return precision.round_to(self.problem.jac_action(y, dr), self.fmt)
        if kind == "exact_difference":
            out = 0.0
            if self.problem.g is not None:
                dr = precision.round_to(d, self.fmt)
                out = precision.round_to(self.problem.g_diff(y, dr), self.fmt)
            if self.A_low is not None:
                out = out + self.A_low.apply(d)
            return out
        # scenario1_first (also the fallback for scenario1_second configs)
        out = self.A_low.apply(d)
        if self.problem.g is not None:
            out = out + self.problem.g(y + d) - caches["gy"]
        return out

    def second_order(self, y, d, v, cj, fy, dt, caches):
        """Dhat_j accurate to O(dt^2), used inside the convergence regime."""
        kind = self.second_kind
        lin = cj * dt * caches["Afy"]
        if self.A_low is not None:
            lin = lin + self.A_low.apply(v)
        if self.problem.g is None:
            return lin
        if kind == "scenario2_fd_second":
            u = self.fmt.u
            delta = np.sqrt(u) / dt**2
            base = y + cj * dt * fy
            if self._delta_guard(delta, v):
                d1g = (self._g_low(base + delta * v) - self._g_low(base)) / delta
            else:
                d1g = self.problem.g(y + d) - self.problem.g(base)
            return lin + d1g + cj * dt * caches["gpf"]
        if kind == "analytic_jacobian":
            vr = precision.round_to(v, self.fmt)
            jac_v = precision.round_to(
                self.problem.jac_g_action(y, vr), self.fmt)
            return lin + jac_v + cj * dt * caches["gpf"]
        if kind == "exact_difference":
            dr = precision.round_to(d, self.fmt)
            return lin + precision.round_to(self.problem.g_diff(y, dr), self.fmt)
        # scenario1_second
        return lin + self.problem.g(y + d) - caches["gy"]


@dataclass
class StepDiagnostics:
    second_order_stages: int = 0
    total_switch_stages: int = 0


def mp_rkc_step(problem: OdeProblem, y: np.ndarray,
                coeffs: RkcCoefficients, dt: float,
                strategy: DeltaFStrategy, hybrid: bool = False,
                counters: EvalCounters | None = None,
                diagnostics: StepDiagnostics | None = None) -> np.ndarray:
    """One mixed-precision step; exactly one high-precision f evaluation
    (plus the two per-step second-order caches when ``hybrid``)."""
    counters = counters if counters is not None else EvalCounters()
    fy = problem.f(y)
    counters.n_high += 1
    caches = strategy.step_caches(y, fy, dt, hybrid, counters)
    c = coeffs.c
    d_prev = np.zeros_like(y)
    d = coeffs.mu[1] * dt * fy
    _check_finite(d, 1)
    for j in range(2, coeffs.s + 1):
        cj = c[j - 1]
        if hybrid:
            v = d - cj * dt * fy
            take_second = np.linalg.norm(v) <= np.linalg.norm(d)
            if diagnostics is not None:
                diagnostics.total_switch_stages += 1
                diagnostics.second_order_stages += int(take_second)
            if take_second:
                df = strategy.second_order(y, d, v, cj, fy, dt, caches)
            else:
                df = strategy.first_order(y, d, fy, dt, caches)
        else:
            df = strategy.first_order(y, d, fy, dt, caches)
        counters.n_low += 1
        d_new = (coeffs.nu[j] * d + coeffs.kappa[j] * d_prev
                 + coeffs.mu[j] * dt * (fy + df)
                 + coeffs.gamma[j] * dt * fy)
        _check_finite(d_new, j)
        d_prev, d = d, d_new
    return y + d


def mp_rkc_integrate(problem: OdeProblem, dt: float, p: int,
                     fmt: precision.FloatFormat,
                     strategy: str | DeltaFStrategy = "s1",
                     eps: float | None = None, hybrid: bool = False,
                     T: float | None = None, freeze_rho: bool | None = None,
                     record_times=None, rho_seed: int = 0,
                     force_s: int | None = None) -> IntegrationTrace:
    """Integrate with the order-preserving mixed-precision scheme.

    ``strategy`` is either a prepared :class:`DeltaFStrategy` or one of the
    aliases "s1", "s2-fd", "analytic", "exact-diff".
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(strategy, str):
        first, second = STRATEGY_ALIASES[strategy]
        strategy = DeltaFStrategy(problem, fmt, first, second)
    T = problem.T if T is None else T
    if freeze_rho is None:
        freeze_rho = problem.is_linear

    trace = IntegrationTrace()
    diag = StepDiagnostics()
    trace.diagnostics = diag
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
        y = mp_rkc_step(problem, y, coeffs, step, strategy, hybrid,
                        trace.counters, diag)
        t += step
        trace.record(t, y, s, rho)
        maybe_record(t, y, trace, dt)
    trace.final_state = y
    return trace


# ---------------------------------------------------------------------------
# q-order-preserving classical RK for linear problems

def q_order_rk_linear_step(problem: OdeProblem, A_low, y: np.ndarray,
                           dt: float, q: int, s: int = 4,
                           a: np.ndarray | None = None,
                           counters: EvalCounters | None = None) -> np.ndarray:
    """One step of an s-stage explicit RK of order p applied to y' = A y,
    written as y + sum_j (1 + a_j) (dt A)^j / j! y: the first q Taylor terms
    use high-precision matvecs, the rest continue the chain with the
    low-precision operator.  a_j = 0 reproduces classical RK4 at s = 4.
    """
    if not problem.is_linear:
        raise NonLinearProblem("the Taylor-form step needs a linear problem")
    if not 0 <= q <= s:
        raise ValueError("need 0 <= q <= s")
    a = np.zeros(s + 1) if a is None else np.asarray(a, dtype=float)
    out = y.copy()
    w = y.copy()
    fact = 1.0
    for j in range(1, s + 1):
        if j <= q:
            w = dt * (problem.A @ w)
            if counters is not None:
                counters.n_high += 1
        else:
            w = dt * A_low.apply(w)
            if counters is not None:
                counters.n_low += 1
        fact *= j
        out = out + (1.0 + a[j]) / fact * w
    return out


@dataclass(frozen=True)
class CostReport:
    """Relative cost saving of replacing s - q of s evaluations by a format
    r times cheaper, with its two limiting values."""

    factor: float
    limit_many_stages: float   # s -> inf at fixed q, r
    limit_cheap_format: float  # r -> inf at fixed s, q


def cost_report(s: int, q: int, r: float) -> CostReport:
    if not (s >= q >= 0):
        raise ValueError("need s >= q >= 0")
    if r < 1:
        raise ValueError("need r >= 1")
    factor = (s - q) * (r - 1.0) / (s * r)
    return CostReport(factor=factor,
                      limit_many_stages=(r - 1.0) / r,
                      limit_cheap_format=(s - q) / s)


# ---------------------------------------------------------------------------
# internal-stability diagnostic (linear symmetric problems, dense analysis)

def internal_stability_report(problem: OdeProblem, y: np.ndarray,
                              coeffs: RkcCoefficients, dt: float,
                              fmt: precision.FloatFormat) -> dict:
    """For a linear symmetric problem, run one mixed-precision step and
    compare the measured one-step rounding residual
    ||yhat1 - R_s(dt A) y||_2 against the worst-case bound
    max_k ||R_k(dt A) - I||_2 ((1 + C dt u)^{s-1} - 1) ||y||_2 with
    C = 3 cbar mbar^2 omega1 rho max_j ||U_j(omega0 I + omega1 dt A)||_2.

    Spectral norms are evaluated through the eigenvalues of A (dense);
    intended for diagnostics and tests on small problems.
    """
    if not problem.is_linear:
        raise NonLinearProblem("internal-stability analysis needs a linear problem")
    A = problem.A.toarray()
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    strategy = DeltaFStrategy(problem, fmt, "scenario1_first")
    yhat1 = mp_rkc_step(problem, y, coeffs, dt, strategy)

    # exact one-step map through the eigendecomposition of A
    z = dt * lam
    exact1 = Q @ (stability_poly(coeffs, z) * (Q.T @ y))
    deviation = float(np.linalg.norm(exact1 - yhat1))

    s = coeffs.s
    u = fmt.u
    mbar = int(np.max(np.diff(problem.A.indptr)))
    cbar = 1.0 / (1.0 - mbar * u)
    x = coeffs.omega0 + coeffs.omega1 * z
    maxU = max(float(np.max(np.abs(cheb_U(j, x))))
               for j in range(max(1, s - 1)))
    rho = float(np.max(np.abs(lam)))
    C = 3.0 * cbar * mbar**2 * coeffs.omega1 * rho * maxU
    maxRkI = max(float(np.max(np.abs(_partial_poly(coeffs, k, z) - 1.0)))
                 for k in range(1, s))
    bound = maxRkI * ((1.0 + C * dt * u) ** (s - 1) - 1.0) \
        * float(np.linalg.norm(y))
    return {"deviation": deviation, "bound": bound, "C": C, "mbar": mbar}


def _partial_poly(coeffs: RkcCoefficients, k: int, z):
    """Amplification factor R_k(z) of the k-th internal stage."""
    from .chebyshev import cheb_T
    x = coeffs.omega0 + coeffs.omega1 * np.asarray(z, dtype=float)
    return coeffs.a[k] + coeffs.b[k] * cheb_T(k, x)
