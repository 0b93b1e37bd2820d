"""Test problems in split form f(y) = A*y + g(y).

All PDE problems are discretized by finite differences on uniform grids
(second-order stencils, Dirichlet data lifted into the forcing), except the
multirate surrogate which lives on a locally refined 1D grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import sympy

from .errors import InvalidMesh, NoConvergenceWarning

__all__ = [
    "OdeProblem",
    "MultirateProblem",
    "estimate_spectral_radius",
    "build_problem_1",
    "build_problem_3",
    "build_problem_4",
    "build_multirate_surrogate",
    "build_problem",
    "PROBLEM_BUILDERS",
]


@dataclass
class OdeProblem:
    """An ODE system y' = A*y + g(y).

    Either part may be absent (None).  ``jac_g_action`` is the analytic
    directional derivative g'(y)v when available; ``g_diff`` is an analytic
    evaluation of g(y + b) - g(y) for problems where the difference has a
    cheap closed form.
    """

    name: str
    n: int
    A: sp.csr_matrix | None
    g: Callable[[np.ndarray], np.ndarray] | None
    y0: np.ndarray
    T: float
    jac_g_action: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    g_diff: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    steady_state: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def is_linear(self) -> bool:
        return self.g is None

    def f(self, y: np.ndarray) -> np.ndarray:
        if self.A is None:
            return self.g(y)
        out = self.A @ y
        if self.g is not None:
            out = out + self.g(y)
        return out

    def jac_action(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """f'(y) v, analytic when the nonlinear part supplies a Jacobian."""
        lin = self.A @ v if self.A is not None else 0.0
        if self.g is None:
            return lin
        if self.jac_g_action is not None:
            return lin + self.jac_g_action(y, v)
        # forward difference on f; increment scaled to the state magnitude
        delta = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(y, np.inf))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(v)
        return (self.f(y + (delta / nv) * v) - self.f(y)) * (nv / delta)


@dataclass
class MultirateProblem:
    """An OdeProblem together with a splitting f = f_F + f_S into a stiff
    cheap part and a mild expensive part."""

    base: OdeProblem
    A_F: sp.csr_matrix
    A_S: sp.csr_matrix
    force_S: np.ndarray

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def n(self) -> int:
        return self.base.n

    def f_F(self, y: np.ndarray) -> np.ndarray:
        return self.A_F @ y

    def f_S(self, y: np.ndarray) -> np.ndarray:
        return self.A_S @ y + self.force_S

    def f(self, y: np.ndarray) -> np.ndarray:
        return self.f_F(y) + self.f_S(y)


def estimate_spectral_radius(problem, y: np.ndarray, max_iters: int = 100,
                             tol: float = 1e-2, safety: float = 1.05,
                             seed: int = 0) -> float:
    """Spectral radius of the Jacobian at y, by power iteration on the
    Jacobian action, inflated by ``safety``.

    Emits :class:`NoConvergenceWarning` and returns the last estimate if the
    iteration cap is hit.
    """
    if hasattr(problem, "jac_action"):
        action = lambda v: problem.jac_action(y, v)
        n = problem.n
    else:
        action = problem  # bare linear operator as callable
        n = y.size
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iters):
        w = action(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        rho_new = nw
        v = w / nw
        if abs(rho_new - rho) <= tol * rho_new:
            return safety * rho_new
        rho = rho_new
    warnings.warn("power iteration hit its iteration cap; using last estimate",
                  NoConvergenceWarning, stacklevel=2)
    return safety * rho


# ---------------------------------------------------------------------------
# uniform-grid Laplacians

def _laplacian_1d(n: int) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)],
                    [-1, 0, 1], format="csr")


def _laplacian_nd(d: int, n: int) -> sp.csr_matrix:
    """d-dimensional 2*d+1-point Laplacian stencil on an n^d interior grid
    (unit spacing; caller scales by 1/h^2)."""
    L1 = _laplacian_1d(n)
    I = sp.identity(n, format="csr")
    L = sp.csr_matrix((n**d, n**d))
    for k in range(d):
        term = None
        for axis in range(d):
            factor = L1 if axis == k else I
            term = factor if term is None else sp.kron(term, factor, format="csr")
        L = L + term
    return sp.csr_matrix(L)


def _interior_grid(d: int, N: int):
    """Coordinates of the (N-1)^d interior nodes, as d arrays flattened in
    C order (matching the kron construction above)."""
    x = np.arange(1, N) / N
    grids = np.meshgrid(*([x] * d), indexing="ij")
    return [grid.ravel() for grid in grids]


def _boundary_lift(d: int, n: int, value: float) -> np.ndarray:
    """Contribution of constant Dirichlet data to the (unit-spacing)
    Laplacian at the n^d interior nodes: +value for each stencil arm
    leaving the domain."""
    arms = np.zeros(n)
    arms[0] += 1.0
    arms[-1] += 1.0
    total = np.zeros((n,) * d)
    for k in range(d):
        shape = [1] * d
        shape[k] = n
        total = total + arms.reshape(shape)
    return value * total.ravel()


# ---------------------------------------------------------------------------
# Problem 1: reaction-diffusion with manufactured steady state

_STEADY_EXPR = {
    1: "(4*x*(1-x))**2 + 1",
    2: "(16*x*(1-x)*y*(1-y))**2 + 1",
    3: "(64*x*(1-x)*y*(1-y)*z*(1-z))**2 + 1",
}

_f1_cache: dict[tuple, Callable] = {}


def _forcing_f1(d: int, diffusion: float) -> Callable:
    """f1 = ubar^2 - D*Lap(ubar) for the manufactured steady state ubar,
    derived symbolically (the PDE then has ubar as an equilibrium)."""
    key = (d, diffusion)
    if key in _f1_cache:
        return _f1_cache[key]
    syms = sympy.symbols("x y z")[:d]
    ubar = sympy.sympify(_STEADY_EXPR[d])
    lap = sum(sympy.diff(ubar, v, 2) for v in syms)
    f1 = ubar**2 - diffusion * lap
    func = sympy.lambdify(syms, f1, "numpy")
    _f1_cache[key] = func
    return func


def _steady_state_fn(d: int):
    syms = sympy.symbols("x y z")[:d]
    return sympy.lambdify(syms, sympy.sympify(_STEADY_EXPR[d]), "numpy")


def build_problem_1(d: int, N: int, diffusion: float = 100.0,
                    linear: bool = False, T: float | None = None,
                    y0: np.ndarray | None = None) -> OdeProblem:
    """Reaction-diffusion u' = D*Lap(u) - u^2 + f1 on the d-cube, Dirichlet
    value 1, forcing manufactured so that a known polynomial-bump profile is
    the steady state; starts from u = 1.

    With ``linear=True`` the reaction and forcing are dropped (pure heat
    equation, homogeneous Dirichlet) and the initial state is the bump
    profile itself.
    """
    if d not in (1, 2, 3):
        raise InvalidMesh(f"dimension must be 1, 2 or 3, got {d}")
    if N < 2:
        raise InvalidMesh(f"mesh parameter must be >= 2, got {N}")
    h = 1.0 / N
    n = (N - 1) ** d
    A = sp.csr_matrix(diffusion / h**2 * _laplacian_nd(d, N - 1))
    coords = _interior_grid(d, N)

    if linear:
        bump = _steady_state_fn(d)(*coords) - 1.0
        return OdeProblem(
            name=f"heat{d}d-linear", n=n, A=A, g=None,
            y0=(bump if y0 is None else np.asarray(y0, dtype=float)),
            T=(8.0 if T is None else T),
            meta={"d": d, "N": N, "h": h, "diffusion": diffusion})

    ubar = _steady_state_fn(d)(*coords)
    force = np.asarray(_forcing_f1(d, diffusion)(*coords), dtype=float) \
        + diffusion / h**2 * _boundary_lift(d, N - 1, 1.0)

    def g(y):
        return -y * y + force

    def jac_g_action(y, v):
        return -2.0 * y * v

    def g_diff(y, b):
        return -(2.0 * y + b) * b

    return OdeProblem(
        name=f"heat{d}d", n=n, A=A, g=g, jac_g_action=jac_g_action,
        g_diff=g_diff, y0=(np.ones(n) if y0 is None else np.asarray(y0, float)),
        T=(1.0 if T is None else T), steady_state=ubar,
        meta={"d": d, "N": N, "h": h, "diffusion": diffusion})


# ---------------------------------------------------------------------------
# Problem 3: 1D Brusselator

def build_problem_3(N: int, a: float = 1.0, b: float = 3.0,
                    alpha: float = 0.02, T: float = 10.0) -> OdeProblem:
    """Two-species Brusselator on [0,1]: u' = alpha*u_xx + u^2 v - (b+1)u + a,
    v' = alpha*v_xx - u^2 v + b u; Dirichlet (u, v) = (a, b); stacked as one
    vector [u; v] of length 2(N-1)."""
    if N < 2:
        raise InvalidMesh(f"mesh parameter must be >= 2, got {N}")
    h = 1.0 / N
    m = N - 1
    L = alpha / h**2 * _laplacian_1d(m)
    A = sp.block_diag((L, L), format="csr")
    x = np.arange(1, N) / N
    lift_u = alpha / h**2 * _boundary_lift(1, m, a)
    lift_v = alpha / h**2 * _boundary_lift(1, m, b)

    def g(w):
        u, v = w[:m], w[m:]
        ru = u * u * v - (b + 1.0) * u + a + lift_u
        rv = -u * u * v + b * u + lift_v
        return np.concatenate([ru, rv])

    def jac_g_action(w, q):
        u, v = w[:m], w[m:]
        qu, qv = q[:m], q[m:]
        ju = (2.0 * u * v - (b + 1.0)) * qu + u * u * qv
        jv = (-2.0 * u * v + b) * qu - u * u * qv
        return np.concatenate([ju, jv])

    y0 = np.concatenate([a + np.sin(2.0 * np.pi * x), np.full(m, b)])
    return OdeProblem(
        name="brusselator", n=2 * m, A=A, g=g, jac_g_action=jac_g_action,
        y0=y0, T=T,
        meta={"N": N, "h": h, "a": a, "b": b, "alpha": alpha, "fields": 2})


# ---------------------------------------------------------------------------
# Problem 4: 4-Laplace nonlinear diffusion (no linear part)

def build_problem_4(N: int, T: float = 1.0) -> OdeProblem:
    """Nonlinear diffusion u' = ((u_x)^3)_x + f4 in conservative
    finite-difference form, Dirichlet value 1; no linear part."""
    if N < 2:
        raise InvalidMesh(f"mesh parameter must be >= 2, got {N}")
    h = 1.0 / N
    m = N - 1
    x = np.arange(1, N) / N
    f4 = 1.0 + 64.0 * np.exp(4.0 - 1.0 / (x * (1.0 - x)))

    def _pad(u):
        return np.concatenate([[1.0], u, [1.0]])

    def g(u):
        up = _pad(u)
        flux = np.diff(up) ** 3 / h**3  # face fluxes (u_{i+1}-u_i)^3/h^3
        return np.diff(flux) / h + f4

    def jac_g_action(u, v):
        up = _pad(u)
        w = 3.0 * np.diff(up) ** 2 / h**3
        vp = np.concatenate([[0.0], v, [0.0]])
        return np.diff(w * np.diff(vp)) / h

    def g_diff(u, d):
        # g(u + d) - g(u) expanded exactly: the cubic face flux difference
        # keeps the saturating nonlinearity that a frozen Jacobian loses
        up = _pad(u)
        dp = np.concatenate([[0.0], d, [0.0]])
        du, dd = np.diff(up), np.diff(dp)
        dflux = (3.0 * du**2 * dd + 3.0 * du * dd**2 + dd**3) / h**3
        return np.diff(dflux) / h

    return OdeProblem(
        name="plap4", n=m, A=None, g=g, jac_g_action=jac_g_action,
        g_diff=g_diff, y0=np.ones(m), T=T, meta={"N": N, "h": h})


# ---------------------------------------------------------------------------
# multirate surrogate: 1D heat on a locally refined grid

def build_multirate_surrogate(N: int, grading: float = 8.0,
                              T: float = 0.1) -> MultirateProblem:
    """Heat equation on [0,1] with the grid refined by ``grading`` inside
    [0.45, 0.55] and a near-singular forcing, split row-wise into a stiff
    fast part (rows touching fine cells) and a mild slow part (the rest,
    which also carries the forcing)."""
    if N < 4:
        raise InvalidMesh(f"mesh parameter must be >= 4, got {N}")
    if grading < 1:
        raise InvalidMesh("grading must be >= 1")
    h = 1.0 / N
    n_left = max(1, round(0.45 * N))
    n_fine = max(1, round(0.1 * N * grading))
    nodes = np.concatenate([
        np.linspace(0.0, 0.45, n_left + 1),
        np.linspace(0.45, 0.55, n_fine + 1)[1:],
        np.linspace(0.55, 1.0, n_left + 1)[1:],
    ])
    x = nodes[1:-1]
    n = x.size
    hl = np.diff(nodes)[:-1]   # spacing to the left neighbour of node i
    hr = np.diff(nodes)[1:]    # spacing to the right neighbour

    # nonuniform 3-point Laplacian, homogeneous Dirichlet
    main = -2.0 / (hl * hr)
    lower = 2.0 / (hl[1:] * (hl[1:] + hr[1:]))
    upper = 2.0 / (hr[:-1] * (hl[:-1] + hr[:-1]))
    A = sp.diags([lower, main, upper], [-1, 0, 1], format="csr")

    fine = (x >= 0.45 - 1e-12) & (x <= 0.55 + 1e-12)
    row_mask = sp.diags(fine.astype(float), format="csr")
    A_F = sp.csr_matrix(row_mask @ A)
    A_S = sp.csr_matrix(A - A_F)
    A_F.eliminate_zeros()
    A_S.eliminate_zeros()

    force = -10.0 * np.log(2.0 * (x - 0.501) ** 2)

    base = OdeProblem(
        name="graded-multirate", n=n, A=sp.csr_matrix(A), g=None, y0=x * (1.0 - x),
        T=T, meta={"N": N, "grading": grading, "h": h, "nodes": nodes,
                   "fine_mask": fine, "force": force})
    # the slow forcing makes f affine rather than linear; expose it through g
    base.g = lambda y, _force=force: _force
    base.jac_g_action = lambda y, v: np.zeros_like(v)
    return MultirateProblem(base=base, A_F=A_F, A_S=A_S, force_S=force)


# ---------------------------------------------------------------------------
# registry

PROBLEM_BUILDERS: dict[str, Callable] = {
    "heat1d": lambda N, **kw: build_problem_1(1, N, **kw),
    "heat2d": lambda N, **kw: build_problem_1(2, N, **kw),
    "heat3d": lambda N, **kw: build_problem_1(3, N, **kw),
    "brusselator": lambda N, **kw: build_problem_3(N, **kw),
    "plap4": lambda N, **kw: build_problem_4(N, **kw),
    "graded-multirate": lambda N, **kw: build_multirate_surrogate(N, **kw),
}


def build_problem(name: str, N: int, **kwargs):
    try:
        builder = PROBLEM_BUILDERS[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; known: {sorted(PROBLEM_BUILDERS)}") from None
    return builder(N, **kwargs)
