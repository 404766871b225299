"""Independent reference computations and a runtime invariant monitor.

Nothing here calls into the time steppers: the closed-form deposit and
radius operators integrate stored histories with the trapezoidal rule, and
the tortuosity reference solves the cell problem with a cut-cell finite
volume scheme on a Cartesian grid rather than finite elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .cell import porosity
from .macro import CLOG_RADIUS, MacroState, ModelParams, length_over_area
from .table import TortuosityTable, interpolate_field


class HistoryError(ValueError):
    pass


class HorizonError(ValueError):
    pass


# --------------------------------------------------------------------------
# closed-form deposit and radius operators


def _truncate(times, values, t):
    """Samples of ``values`` on ``[times[0], t]``, closing the last segment linearly."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or values.shape[0] != times.size:
        raise HistoryError("history and sample times disagree in length")
    if np.any(np.diff(times) <= 0):
        raise HistoryError("history sample times must be strictly increasing")
    if abs(times[0]) > 1e-12:
        raise HistoryError(f"history starts at t={times[0]}, not 0")
    if t > times[-1] + 1e-12 or t < 0:
        raise HistoryError(f"history covers [0, {times[-1]}], requested t={t}")
    k = int(np.searchsorted(times, t, side="right"))
    if abs(times[k - 1] - t) <= 1e-12:
        return times[:k], values[:k]
    w = (t - times[k - 1]) / (times[k] - times[k - 1])
    last = (1 - w) * values[k - 1] + w * values[k]
    return np.append(times[:k], t), np.concatenate([values[:k], last[None]])


def _trapz(times, values):
    if times.size == 1:
        return np.zeros(values.shape[1:])
    return cumulative_trapezoid(values, times, axis=0)[-1]


def v_closed_form(times, u_history, v0, t, alpha_v, b):
    """``v(t) = e^{-bt} (v0 + sum_i alpha_i int_0^t e^{b s} u_i ds)``.

    ``u_history`` has shape ``(K, N, ...)`` sampled at ``times`` (K,).
    """
    ts, us = _truncate(times, u_history, t)
    alpha_v = np.asarray(alpha_v, dtype=float)
    forcing = np.tensordot(us, alpha_v, axes=([1], [0]))  # (K, ...)
    weight = np.exp(b * ts).reshape((-1,) + (1,) * (forcing.ndim - 1))
    return math.exp(-b * t) * (np.asarray(v0, dtype=float) + _trapz(ts, weight * forcing))


def v_history_closed_form(times, u_history, v0, alpha_v, b):
    """Closed-form ``v`` at every sample time (cumulative trapezoid)."""
    times = np.asarray(times, dtype=float)
    forcing = np.tensordot(np.asarray(u_history, dtype=float), np.asarray(alpha_v, dtype=float), axes=([1], [0]))
    weight = np.exp(b * times).reshape((-1,) + (1,) * (forcing.ndim - 1))
    acc = cumulative_trapezoid(weight * forcing, times, axis=0, initial=0.0)
    return np.exp(-b * times).reshape(weight.shape) * (np.asarray(v0, dtype=float) + acc)


def r_closed_form(times, u_history, v_history, r0, t, a, beta, alpha_r):
    """``r(t) = r0 + 2 pi alpha sum_i int_0^t (a_i u_i - beta_i v) ds``."""
    ts, us = _truncate(times, u_history, t)
    _, vs = _truncate(times, v_history, t)
    a = np.asarray(a, dtype=float)
    b = float(np.sum(beta))
    integrand = np.tensordot(us, a, axes=([1], [0])) - b * vs
    return np.asarray(r0, dtype=float) + 2.0 * np.pi * alpha_r * _trapz(ts, integrand)


# --------------------------------------------------------------------------
# radius bounds and Lipschitz estimate


@dataclass
class AnalysisBox:
    M: float
    eps1: float
    eps2: float
    sup_r0: float
    inf_r0: float
    sup_v0: float
    a_sum: float
    b: float
    s_max: float = math.nan

    def check(self) -> None:
        if not (self.eps1 > 0 and self.eps2 > 0 and self.M >= 0):
            raise HorizonError("margins must be positive and M nonnegative")
        if not (2 * self.eps2 <= 2 * self.inf_r0):
            raise HorizonError(f"eps2={self.eps2} exceeds inf r0={self.inf_r0}")
        if not (2 * self.sup_r0 <= 1 - self.eps1):
            raise HorizonError(f"2 sup r0={2 * self.sup_r0} exceeds 1 - eps1={1 - self.eps1}")

    @classmethod
    def for_state(cls, state: MacroState, params: ModelParams, M: float, eps1: float, eps2: float) -> "AnalysisBox":
        # the same aggregate must bound both the deposit and the radius forcing
        a_sum = max(float(params.a.sum()), float(params.alpha_v.sum()))
        box = cls(M, eps1, eps2, float(state.R.max()), float(state.R.min()), float(state.V.max()), a_sum, params.b)
        box.s_max = feasible_horizon(box, params.alpha_r)
        return box


def horizon_slack(box: AnalysisBox, alpha_r: float, t: float) -> float:
    """Right side minus left side of the radius-bound condition at ``t``.

    Written without dividing by ``b`` or ``alpha`` so that both may vanish.
    """
    c = 2.0 * np.pi * alpha_r
    scale = c * box.a_sum * box.M
    if scale == 0:
        lhs = 0.0
    else:
        grow = t if box.b == 0 else math.expm1(min(box.b * t, 700.0)) / box.b
        lhs = scale * grow
    rhs = min(1.0 - 2.0 * box.sup_r0 - box.eps1, box.inf_r0 - box.eps2 - c * box.b * t * box.sup_v0)
    return rhs - lhs


def feasible_horizon(box: AnalysisBox, alpha_r: float, tol: float = 1e-10, t_cap: float = 1e6) -> float:
    """Largest ``s`` such that radii provably stay in ``[eps2, (1 - eps1)/2]`` on ``[0, s]``."""
    box.check()
    if horizon_slack(box, alpha_r, 0.0) < 0:
        raise HorizonError("radius-bound condition fails already at t=0")
    hi = 1.0
    while horizon_slack(box, alpha_r, hi) >= 0:
        hi *= 2.0
        if hi > t_cap:
            return math.inf
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if horizon_slack(box, alpha_r, mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def lipschitz_constant(params: ModelParams) -> float:
    return 2.0 * np.pi * params.alpha_r * max(float(params.a.max()), params.b * float(params.alpha_v.max()))


def radius_lipschitz_check(times, u1, u2, r1, r2, params: ModelParams) -> float:
    """Pointwise max of ``|r1 - r2| / (C int (|du| + int e^{bs} |du|))`` at the final time.

    ``u1``, ``u2`` are histories ``(K, N, ...)``; ``|du|`` is the sum over species.
    Returns 0 where both sides vanish.
    """
    times = np.asarray(times, dtype=float)
    du = np.abs(np.asarray(u1, dtype=float) - np.asarray(u2, dtype=float)).sum(axis=1)
    weight = np.exp(params.b * times).reshape((-1,) + (1,) * (du.ndim - 1))
    inner = cumulative_trapezoid(weight * du, times, axis=0, initial=0.0)
    rhs = lipschitz_constant(params) * _trapz(times, du + inner)
    lhs = np.abs(np.asarray(r1, dtype=float) - np.asarray(r2, dtype=float))
    ratio = np.zeros_like(lhs)
    pos = rhs > 0
    ratio[pos] = lhs[pos] / rhs[pos]
    ratio[~pos & (lhs > 0)] = np.inf
    return float(ratio.max()) if ratio.size else 0.0


# --------------------------------------------------------------------------
# runtime monitor


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    u_min: list[float]
    u_max: list[float]
    v_min: float
    v_max: float
    r_min: float
    r_max: float
    clogged_fraction: float
    moment_total: float
    linf_violation: bool = False
    envelope_violation: bool = False
    corridor_violation: bool = False
    spd_violation: bool = False
    picard_iterations: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def any_violation(self) -> bool:
        return self.linf_violation or self.envelope_violation or self.corridor_violation or self.spd_violation

    def header(self) -> list[str]:
        n = len(self.u_min)
        cols = ["step", "t"]
        cols += [f"u{i + 1}_min" for i in range(n)] + [f"u{i + 1}_max" for i in range(n)]
        cols += ["v_min", "v_max", "r_min", "r_max", "clogged_fraction", "moment_total"]
        cols += ["linf", "envelope", "corridor", "spd", "picard_iterations"]
        return cols

    def row(self) -> list[str]:
        vals = [str(self.step), f"{self.t:.10g}"]
        vals += [f"{x:.10g}" for x in (*self.u_min, *self.u_max)]
        vals += [f"{x:.10g}" for x in (self.v_min, self.v_max, self.r_min, self.r_max, self.clogged_fraction, self.moment_total)]
        vals += [str(int(f)) for f in (self.linf_violation, self.envelope_violation, self.corridor_violation, self.spd_violation)]
        vals.append(str(self.picard_iterations))
        return vals


def reaction_envelope(params: ModelParams, box: AnalysisBox, t: float):
    """Upper bounds for the positive and negative parts of each ``F_i`` on ``|u| <= M``."""
    n = params.N
    k = np.arange(1, n + 1)
    gam = float(params.gamma.max())
    coag = box.M**2 * gam * (n - (k + 1) / 2.0)
    grow = t if box.b == 0 else math.expm1(box.b * t) / box.b
    v_bound = box.a_sum * box.M * grow
    bound = length_over_area(CLOG_RADIUS)
    pos = coag + bound * (params.a * box.M + params.beta * (box.sup_v0 + v_bound))
    neg = coag + bound * (params.a * box.M + params.beta * v_bound)
    return pos, neg


def moment_total(U: np.ndarray) -> float:
    """Trapezoid integral of ``sum_i i U_i`` over the unit square."""
    n0, n1 = U.shape[1:]
    w = np.ones((n0, n1))
    w[[0, -1], :] *= 0.5
    w[:, [0, -1]] *= 0.5
    k = np.arange(1, U.shape[0] + 1)[:, None, None]
    return float(np.sum(k * U * w) / ((n0 - 1) * (n1 - 1)))


def monitor_step(
    state: MacroState,
    params: ModelParams,
    box: AnalysisBox,
    table: TortuosityTable | None = None,
    step: int = 0,
    picard_iterations: int = 0,
    u0_sup=None,
    tol: float = 1e-9,
) -> DiagnosticsRecord:
    U, t = state.U, state.t
    flat = U.reshape(U.shape[0], -1)
    rec = DiagnosticsRecord(
        step=step,
        t=t,
        u_min=flat.min(axis=1).tolist(),
        u_max=flat.max(axis=1).tolist(),
        v_min=float(state.V.min()),
        v_max=float(state.V.max()),
        r_min=float(state.R.min()),
        r_max=float(state.R.max()),
        clogged_fraction=float(state.clogged.mean()),
        moment_total=moment_total(U),
        picard_iterations=picard_iterations,
    )
    if np.max(np.abs(U)) > box.M + tol:
        rec.linf_violation = True
        rec.notes.append("|U| exceeds M")
    pos, neg = reaction_envelope(params, box, t)
    u0 = np.zeros(params.N) if u0_sup is None else np.asarray(u0_sup, dtype=float)
    if np.any(flat.max(axis=1) > u0 + t * pos + tol) or np.any(flat.min(axis=1) < -t * neg - tol):
        rec.envelope_violation = True
        rec.notes.append("U outside reaction envelope")
    if t <= box.s_max:
        lo, hi = box.eps2, 0.5 * (1.0 - box.eps1)
        if rec.r_min < lo - tol or rec.r_max > hi + tol:
            rec.corridor_violation = True
            rec.notes.append("R left the feasible corridor")
    if table is not None:
        # the stencil uses only the diagonal; off-diagonals vanish by symmetry,
        # so D_i is SPD at a cell iff d_i, the porosity and both tau entries are positive
        t11, t22 = interpolate_field(table, state.R)
        open_ = ~state.clogged
        phi = porosity(state.R[open_], params.domain_area)
        if np.any(params.d <= 0) or np.any(phi <= 0) or np.any(t11[open_] <= 0) or np.any(t22[open_] <= 0):
            rec.spd_violation = True
            rec.notes.append("D not positive definite at an open cell")
    return rec


# --------------------------------------------------------------------------
# finite-volume reference for the cell problem


def _face_fluid_fraction(offset, lo, h, r):
    """Fluid share of a grid face at distance ``offset`` from the centre spanning ``[lo, lo+h]``."""
    half = np.sqrt(np.clip(r * r - offset * offset, 0.0, None))
    covered = np.clip(np.minimum(lo + h, half) - np.maximum(lo, -half), 0.0, None)
    return 1.0 - covered / h


def fv_tortuosity(r: float, n: int = 400) -> float:
    """``tau_11`` from a cut-face finite-volume solve on an ``n x n`` cell grid.

    Solves for the potential ``p = y1 + w1``, periodic up to a unit jump in
    ``y1``. Face conductances are the exact fluid fraction of each face, and
    ``tau_11`` is the net flux through the line ``y1 = 0``.
    """
    h = 1.0 / n
    lo = np.arange(n) * h - 0.5  # face/cell lower coordinates relative to the centre
    fx = _face_fluid_fraction(lo[:, None], lo[None, :], h, r)  # face x = i h, cell row j
    fy = fx.T  # by symmetry of the disc
    idx = np.arange(n * n).reshape(n, n)
    jump = np.zeros((n, n))
    jump[0, :] = 1.0  # crossing x = 0 from the left adds 1 to p
    rows, cols, vals = [], [], []
    rhs = np.zeros(n * n)
    for left, g, jm in ((np.roll(idx, 1, axis=0), fx, jump), (np.roll(idx, 1, axis=1), fy, np.zeros((n, n)))):
        a, b, g, jm = left.ravel(), idx.ravel(), g.ravel(), jm.ravel()
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [g, g, -g, -g]
        np.add.at(rhs, a, g * jm)
        np.add.at(rhs, b, -g * jm)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n))
    live = np.flatnonzero(A.diagonal() > 0)
    keep = live[1:]  # pin one potential
    p = np.zeros(n * n)
    p[keep] = spla.spsolve(A[keep][:, keep].tocsc(), rhs[keep])
    p = p.reshape(n, n)
    return float(np.sum(fx[0, :] * (p[0, :] - p[-1, :] + 1.0)))


def fv_tortuosity_extrapolated(r: float, n: int = 200) -> float:
    """Richardson extrapolation from grids ``n`` and ``2n`` (second-order scheme)."""
    return (4.0 * fv_tortuosity(r, 2 * n) - fv_tortuosity(r, n)) / 3.0
