"""Macro-scale reaction-diffusion-deposition system on the unit square.

Fields live on a uniform node grid, shape ``(n, n)`` with axis 0 along
``x1`` and axis 1 along ``x2``. Edge ``x2 = 0`` carries the Robin inflow
condition; the remaining edges are homogeneous Neumann.

Two time steppers are provided:

``step_explicit``
    forward Euler with a flux-form five-point stencil and arithmetic-mean
    face diffusivities, coefficients taken from the radius at time level n.
``step_picard``
    one backward-Euler step solved by fixed-point iteration on the mobile
    concentrations. Deposit and radius use exact-in-time closed forms over
    the step with the current iterate held constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cell import porosity
from .table import CLOG_RADIUS, TortuosityTable, interpolate_field, max_phi_tau

R_FLOOR = 1e-3
GUARD_SAFETY = 0.95


class StabilityError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class PicardDivergence(NumericalError):
    pass


def _vec(x, n, name):
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size == 1 and n > 1:
        arr = np.full(n, arr[0])
    if arr.size != n:
        raise ValueError(f"{name}: expected {n} entries, got {arr.size}")
    return arr


@dataclass
class ModelParams:
    N: int
    d: np.ndarray
    a: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    alpha_r: float
    b_r: float = 0.5
    t0: float = 2.0
    alpha_v: np.ndarray | None = None  # defaults to ``a``
    domain_area: float = 1.0
    kappa: float = 1.0  # accepted for completeness; no role in the equations
    r_floor: float = R_FLOOR

    def __post_init__(self):
        self.N = int(self.N)
        if self.N < 1:
            raise ValueError("N must be >= 1")
        self.d = _vec(self.d, self.N, "d")
        self.a = _vec(self.a, self.N, "a")
        self.beta = _vec(self.beta, self.N, "beta")
        self.alpha_v = self.a.copy() if self.alpha_v is None else _vec(self.alpha_v, self.N, "alpha_v")
        g = np.array(self.gamma, dtype=float)
        if g.ndim == 0:
            g = np.full((self.N, self.N), float(g))
        if g.shape != (self.N, self.N):
            raise ValueError(f"gamma must be {self.N}x{self.N}")
        if not np.array_equal(g, g.T):
            raise ValueError("gamma must be symmetric")
        self.gamma = g
        for name in ("d", "a", "beta", "alpha_v", "gamma"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        for name in ("alpha_r", "b_r", "t0", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.domain_area <= 0:
            raise ValueError("domain_area must be positive")

    @property
    def b(self) -> float:
        return float(self.beta.sum())


@dataclass
class GridSpec:
    points: int = 41
    dt: float = 1.25e-4
    T: float = 3.0

    def __post_init__(self):
        if self.points < 3:
            raise ValueError("need at least 3 points per side")
        if self.dt <= 0 or self.T < 0:
            raise ValueError("dt must be positive and T nonnegative")

    @property
    def dx(self) -> float:
        return 1.0 / (self.points - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points)

    @property
    def mesh_ratio(self) -> float:
        return self.dt / self.dx**2

    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9)) if self.T > 0 else 0


@dataclass(frozen=True, eq=False)
class MacroState:
    t: float
    U: np.ndarray  # (N, n, n)
    V: np.ndarray  # (n, n)
    R: np.ndarray  # (n, n)
    clogged: np.ndarray  # (n, n) bool

    def check(self, r_floor: float = R_FLOOR) -> None:
        shape = self.V.shape
        if self.U.shape[1:] != shape or self.R.shape != shape or self.clogged.shape != shape:
            raise ValueError("field shapes disagree")
        if np.any(self.R < r_floor - 1e-15) or np.any(self.R > CLOG_RADIUS):
            raise ValueError("R outside [r_floor, 1/2]")
        if not np.array_equal(self.clogged, self.R == CLOG_RADIUS):
            raise ValueError("clogged flags out of sync with R")

    def copy(self) -> "MacroState":
        return MacroState(self.t, self.U.copy(), self.V.copy(), self.R.copy(), self.clogged.copy())


def initial_state(U0, V0, R0, r_floor: float = R_FLOOR) -> MacroState:
    U0 = np.array(U0, dtype=float)
    R0 = np.clip(np.array(R0, dtype=float), r_floor, CLOG_RADIUS)
    return MacroState(0.0, U0, np.array(V0, dtype=float), R0, R0 >= CLOG_RADIUS)


_EXPR_NAMES = {k: getattr(np, k) for k in ("exp", "sin", "cos", "sqrt", "pi", "abs", "minimum", "maximum", "where")}


def eval_profile(expr: str, x1: np.ndarray) -> np.ndarray:
    """Evaluate a profile expression in ``x1`` (numpy functions allowed)."""
    val = eval(expr, {"__builtins__": {}}, {**_EXPR_NAMES, "x1": x1, "np": np})  # noqa: S307
    return np.broadcast_to(np.asarray(val, dtype=float), x1.shape).copy()


@dataclass
class BoundaryConfig:
    """Robin data on ``x2 = 0``: one expression in ``x1`` per species, active for ``t <= t0``."""

    profiles: list[str] = field(default_factory=lambda: ["25*x1*(1-x1)", "0", "0"])
    t0: float = 2.0

    def values(self, x1: np.ndarray, t: float) -> np.ndarray:
        if t > self.t0:
            return np.zeros((len(self.profiles), x1.size))
        key = (tuple(self.profiles), x1.tobytes())
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache.clear()
            cache[key] = np.array([eval_profile(expr, x1) for expr in self.profiles]).reshape(len(self.profiles), x1.size)
        return cache[key].copy()

    def check(self, x1: np.ndarray) -> None:
        for expr in self.profiles:
            if np.any(eval_profile(expr, x1) < 0):
                raise ValueError(f"inflow profile {expr!r} is negative somewhere")


# --------------------------------------------------------------------------
# pointwise terms


def smoluchowski_rates(u, gamma) -> np.ndarray:
    """Truncated coagulation rates; ``u`` has species along axis 0."""
    u = np.ascontiguousarray(u, dtype=float)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[:, None]
    out = kernels.smoluchowski(u, np.ascontiguousarray(gamma, dtype=float))
    return out[:, 0] if squeeze else out


def length_over_area(r):
    r = np.asarray(r, dtype=float)
    return 2.0 * np.pi * r / (1.0 - np.pi * r * r)


def exchange_term(r, u_i, v, a_i, beta_i, clogged=None):
    """Interfacial transfer ``(2 pi r / (1 - pi r^2)) (a_i u_i - beta_i v)``; zero where clogged."""
    r = np.asarray(r, dtype=float)
    out = length_over_area(r) * (a_i * np.asarray(u_i, dtype=float) - beta_i * np.asarray(v, dtype=float))
    closed = r >= CLOG_RADIUS if clogged is None else (np.asarray(clogged) | (r >= CLOG_RADIUS))
    return np.where(closed, 0.0, out)


def diffusivity_fields(R, params: ModelParams, table: TortuosityTable):
    """Per-species ``(D11, D22)`` arrays, each of shape ``(N, n, n)``."""
    t11, t22 = interpolate_field(table, R)
    phi = porosity(R, params.domain_area)
    d = params.d[:, None, None]
    return d * (phi * t11)[None], d * (phi * t22)[None]


def reaction_terms(U, V, R, clogged, params: ModelParams) -> np.ndarray:
    F = smoluchowski_rates(U, params.gamma)
    for i in range(params.N):
        F[i] -= exchange_term(R, U[i], V, params.a[i], params.beta[i], clogged)
    return F


def stability_guard(grid: GridSpec, params: ModelParams, table: TortuosityTable) -> float:
    """Largest explicit time step admitted: ``0.95 dx^2 / (4 D_max)``."""
    d_max = float(params.d.max()) * max_phi_tau(table, params.domain_area)
    if d_max <= 0:
        return math.inf
    return GUARD_SAFETY * grid.dx**2 / (4.0 * d_max)


def _finite(state: MacroState, t: float) -> None:
    if not (np.all(np.isfinite(state.U)) and np.all(np.isfinite(state.V)) and np.all(np.isfinite(state.R))):
        raise NumericalError(f"non-finite field values at t={t:.6g}")


# --------------------------------------------------------------------------
# steppers


def step_explicit(
    state: MacroState,
    params: ModelParams,
    grid: GridSpec,
    table: TortuosityTable,
    bc: BoundaryConfig,
    dt: float | None = None,
    evolve_u: bool = True,
    check_guard: bool = True,
) -> MacroState:
    """One forward-Euler step. ``evolve_u=False`` freezes the mobile fields."""
    dt = grid.dt if dt is None else dt
    if check_guard:
        limit = stability_guard(grid, params, table)
        if dt > limit * (1 + 1e-12):
            raise StabilityError(f"dt={dt:.4g} exceeds explicit stability limit {limit:.4g}")
    U, V, R, clogged = state.U, state.V, state.R, state.clogged
    if evolve_u:
        D1, D2 = diffusivity_fields(R, params, table)
        g = bc.values(grid.coords, state.t)
        F = reaction_terms(U, V, R, clogged, params)
        U_new = np.empty_like(U)
        for i in range(params.N):
            lap = kernels.diffusion(U[i], D1[i], D2[i], grid.dx, g[i], params.b_r)
            U_new[i] = U[i] + dt * (lap + F[i])
    else:
        U_new = U.copy()
    V_new, R_new, clog_new = kernels.deposit(
        np.ascontiguousarray(U), V, R, clogged, params.a, params.alpha_v, params.b, params.alpha_r, dt, params.r_floor
    )
    out = MacroState(state.t + dt, U_new, V_new, R_new, clog_new)
    _finite(out, out.t)
    return out


def closed_form_step(U, V, R, clogged, params: ModelParams, dt: float):
    """Deposit and radius after ``dt`` with ``U`` held constant over the step.

    Returns ``(V_end, R_end, clogged_end)``.
    """
    b = params.b
    cv = np.tensordot(params.alpha_v, U, axes=1)
    ca = np.tensordot(params.a, U, axes=1)
    if b > 0:
        decay = math.exp(-b * dt)
        frac = -math.expm1(-b * dt) / b  # int_0^dt e^{-b s} ds
        V_end = decay * V + cv * frac
        V_int = V * frac + cv * (dt - frac) / b
    else:
        V_end = V + cv * dt
        V_int = V * dt + 0.5 * cv * dt * dt
    R_end = R + 2.0 * np.pi * params.alpha_r * (ca * dt - b * V_int)
    clog_end = clogged | (R_end >= CLOG_RADIUS)
    R_end = np.where(clog_end, CLOG_RADIUS, np.maximum(R_end, params.r_floor))
    return V_end, R_end, clog_end


def _l2(diff: np.ndarray, dx: float, w: np.ndarray) -> float:
    return float(np.sqrt(np.sum(w * diff * diff)) * dx)


def step_picard(
    state: MacroState,
    params: ModelParams,
    grid: GridSpec,
    table: TortuosityTable,
    bc: BoundaryConfig,
    tol: float = 1e-9,
    max_iter: int = 50,
    dt: float | None = None,
    lin_rtol: float = 1e-10,
) -> tuple[MacroState, int]:
    """One backward-Euler step by Picard iteration; returns ``(state, iterations)``.

    Each sweep freezes ``D`` and the reaction terms at the current iterate,
    then solves one symmetric positive-definite system per species.
    """
    dt = grid.dt if dt is None else dt
    U0, V0, R0, c0 = state.U, state.V, state.R, state.clogged
    n = U0.shape[1]
    t_new = state.t + dt
    g = bc.values(grid.coords, t_new)
    zero_field = np.zeros((n, n))
    w = kernels.trap_weights(n, n)
    U_it = U0.copy()
    for it in range(1, max_iter + 1):
        V_end, R_end, c_end = closed_form_step(U_it, V0, R0, c0, params, dt)
        D1, D2 = diffusivity_fields(R_end, params, table)
        F = reaction_terms(U_it, V_end, R_end, c_end, params)
        U_next = np.empty_like(U0)
        for i in range(params.N):
            robin = kernels.diffusion(zero_field, D1[i], D2[i], grid.dx, g[i], 0.0)
            rhs = U0[i] / dt + F[i] + robin
            x, iters, relres = kernels.pcg(U_it[i], rhs, D1[i], D2[i], grid.dx, dt, params.b_r, lin_rtol, 10 * n * n)
            if not relres <= lin_rtol:
                raise NumericalError(f"linear solve stalled at relres={relres:.2e} (species {i + 1})")
            U_next[i] = x
        change = max(_l2(U_next[i] - U_it[i], grid.dx, w) for i in range(params.N))
        U_it = U_next
        if not np.isfinite(change):
            raise NumericalError(f"non-finite Picard iterate at t={t_new:.6g}")
        if change < tol:
            V_end, R_end, c_end = closed_form_step(U_it, V0, R0, c0, params, dt)
            out = MacroState(t_new, U_it, V_end, R_end, c_end)
            _finite(out, t_new)
            return out, it
    raise PicardDivergence(f"Picard iteration did not reach tol={tol:g} in {max_iter} sweeps at t={t_new:.6g}")
