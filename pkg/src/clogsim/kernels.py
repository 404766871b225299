"""Hot numeric kernels, each in a numba loop form and a numpy form.

The public names at the bottom of the module dispatch on
:data:`clogsim._accel.USE_NUMBA`. Both forms are kept importable as
``_<name>_nb`` / ``_<name>_np`` so tests and the benchmark can compare them.

Grid conventions for the macro kernels: a field ``u`` has shape ``(n, n)``
with axis 0 along ``x1`` and axis 1 along ``x2``; node ``(i, j)`` sits at
``(i dx, j dx)``. Edge ``x2 = 0`` (``j = 0``) carries the Robin condition,
the other three edges are homogeneous Neumann, both closed with ghost nodes.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# P1 stiffness on triangles


def _p1_stiffness_np(nodes, tris):
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    b = np.stack((p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]), axis=1)
    c = np.stack((p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]), axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[:, None, None]
    return local.reshape(-1, 9), area


@njit
def _p1_stiffness_nb(nodes, tris):
    m = tris.shape[0]
    vals = np.empty((m, 9))
    area = np.empty(m)
    b = np.empty(3)
    c = np.empty(3)
    for e in range(m):
        i0, i1, i2 = tris[e, 0], tris[e, 1], tris[e, 2]
        x0, y0 = nodes[i0, 0], nodes[i0, 1]
        x1, y1 = nodes[i1, 0], nodes[i1, 1]
        x2, y2 = nodes[i2, 0], nodes[i2, 1]
        b[0], b[1], b[2] = y1 - y2, y2 - y0, y0 - y1
        c[0], c[1], c[2] = x2 - x1, x0 - x2, x1 - x0
        a = 0.5 * (b[0] * c[1] - b[1] * c[0])
        area[e] = a
        for k in range(3):
            for l in range(3):
                vals[e, 3 * k + l] = (b[k] * b[l] + c[k] * c[l]) / (4.0 * a)
    return vals, area


# --------------------------------------------------------------------------
# piecewise-linear table lookup (np.interp semantics, clamped both ends)


def _interp_np(x, xp, fp):
    return np.interp(x, xp, fp)


@njit
def _interp_nb(x, xp, fp):
    flat = x.ravel()
    out = np.empty(flat.size)
    n = xp.size
    for k in range(flat.size):
        v = flat[k]
        if v <= xp[0]:
            out[k] = fp[0]
        elif v >= xp[n - 1]:
            out[k] = fp[n - 1]
        else:
            lo, hi = 0, n - 1
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if xp[mid] <= v:
                    lo = mid
                else:
                    hi = mid
            if v == xp[lo]:
                out[k] = fp[lo]
            else:
                slope = (fp[lo + 1] - fp[lo]) / (xp[lo + 1] - xp[lo])
                out[k] = slope * (v - xp[lo]) + fp[lo]
    return out.reshape(x.shape)


# --------------------------------------------------------------------------
# truncated Smoluchowski rates; U has shape (N, ...) with species first


def _smoluchowski_np(U, gamma):
    n = U.shape[0]
    out = np.zeros_like(U)
    for p in range(n):
        for q in range(p):
            out[p] += 0.5 * gamma[q, p - 1 - q] * U[q] * U[p - 1 - q]
        loss = np.zeros_like(U[0])
        for q in range(n - p - 1):
            loss += gamma[p, q] * U[q]
        out[p] -= U[p] * loss
    return out


@njit
def _smoluchowski_nb(U, gamma):
    n = U.shape[0]
    flat = U.reshape(n, -1)
    out = np.zeros_like(flat)
    for k in range(flat.shape[1]):
        for p in range(n):
            acc = 0.0
            for q in range(p):
                acc += 0.5 * gamma[q, p - 1 - q] * flat[q, k] * flat[p - 1 - q, k]
            loss = 0.0
            for q in range(n - p - 1):
                loss += gamma[p, q] * flat[q, k]
            out[p, k] = acc - flat[p, k] * loss
    return out.reshape(U.shape)


# --------------------------------------------------------------------------
# flux-form diffusion with arithmetic-mean face coefficients


def _diffusion_np(u, D1, D2, dx, g, b_r):
    h2 = dx * dx
    f1 = 0.5 * (D1[1:, :] + D1[:-1, :]) * (u[1:, :] - u[:-1, :])
    f2 = 0.5 * (D2[:, 1:] + D2[:, :-1]) * (u[:, 1:] - u[:, :-1])
    out = np.empty_like(u)
    out[1:-1, :] = f1[1:, :] - f1[:-1, :]
    out[0, :] = 2.0 * f1[0, :]
    out[-1, :] = -2.0 * f1[-1, :]
    out[:, 1:-1] += f2[:, 1:] - f2[:, :-1]
    out[:, 0] += 2.0 * f2[:, 0]
    out[:, -1] -= 2.0 * f2[:, -1]
    out /= h2
    # Robin ghost on x2 = 0: u_{-1} = u_1 + 2 dx (g - b_r u_0), D_{-1} = D_1
    out[:, 0] += 2.0 * 0.5 * (D2[:, 0] + D2[:, 1]) * (g - b_r * u[:, 0]) / dx
    return out


@njit
def _diffusion_nb(u, D1, D2, dx, g, b_r):
    n0, n1 = u.shape
    h2 = dx * dx
    out = np.zeros_like(u)
    for i in range(n0):
        for j in range(n1):
            acc = 0.0
            if i < n0 - 1:
                fp = 0.5 * (D1[i + 1, j] + D1[i, j]) * (u[i + 1, j] - u[i, j])
                acc += 2.0 * fp if i == 0 else fp
            if i > 0:
                fm = 0.5 * (D1[i, j] + D1[i - 1, j]) * (u[i, j] - u[i - 1, j])
                acc -= 2.0 * fm if i == n0 - 1 else fm
            acc2 = 0.0
            if j < n1 - 1:
                fp = 0.5 * (D2[i, j + 1] + D2[i, j]) * (u[i, j + 1] - u[i, j])
                acc2 += 2.0 * fp if j == 0 else fp
            if j > 0:
                fm = 0.5 * (D2[i, j] + D2[i, j - 1]) * (u[i, j] - u[i, j - 1])
                acc2 -= 2.0 * fm if j == n1 - 1 else fm
            val = acc / h2 + acc2 / h2
            if j == 0:
                val += 2.0 * 0.5 * (D2[i, 0] + D2[i, 1]) * (g[i] - b_r * u[i, 0]) / dx
            out[i, j] = val
    return out


# --------------------------------------------------------------------------
# pointwise deposit / radius ODE update (forward Euler)


def _deposit_np(U, V, R, clogged, a, alpha_v, b, alpha_r, dt, r_floor):
    cv = np.tensordot(alpha_v, U, axes=1)
    cr = np.tensordot(a, U, axes=1) - b * V
    V_new = V + dt * (cv - b * V)
    safe = np.where(R > r_floor, R, 1.0)
    by_length = R + dt * (1.0 / safe) * alpha_r * cr * (2.0 * np.pi * safe)
    direct = R + 2.0 * np.pi * alpha_r * dt * cr
    R_new = np.where(R > r_floor, by_length, direct)
    clog_new = clogged | (R_new >= 0.5)
    R_new = np.where(clog_new, 0.5, np.maximum(R_new, r_floor))
    return V_new, R_new, clog_new


@njit
def _deposit_nb(U, V, R, clogged, a, alpha_v, b, alpha_r, dt, r_floor):
    n = U.shape[0]
    V_new = np.empty_like(V)
    R_new = np.empty_like(R)
    clog_new = np.empty_like(clogged)
    for i in range(V.shape[0]):
        for j in range(V.shape[1]):
            cv = 0.0
            ca = 0.0
            for s in range(n):
                cv += alpha_v[s] * U[s, i, j]
                ca += a[s] * U[s, i, j]
            v = V[i, j]
            r = R[i, j]
            cr = ca - b * v
            V_new[i, j] = v + dt * (cv - b * v)
            if r > r_floor:
                rn = r + dt * (1.0 / r) * alpha_r * cr * (2.0 * np.pi * r)
            else:
                rn = r + 2.0 * np.pi * alpha_r * dt * cr
            c = clogged[i, j] or rn >= 0.5
            clog_new[i, j] = c
            if c:
                R_new[i, j] = 0.5
            else:
                R_new[i, j] = max(rn, r_floor)
    return V_new, R_new, clog_new


# --------------------------------------------------------------------------
# backward-Euler diffusion solve by matrix-free Jacobi-preconditioned CG.
# The operator is w * (u/dt - L0 u), w the trapezoid node weights, which is
# symmetric positive definite for the ghost-node closure above.


def _trap_weights(n0, n1):
    w0 = np.ones(n0)
    w0[[0, -1]] = 0.5
    w1 = np.ones(n1)
    w1[[0, -1]] = 0.5
    return np.outer(w0, w1)


def _implicit_op_np(u, D1, D2, dx, dt, b_r, w):
    zero = np.zeros(u.shape[0])
    return w * (u / dt - _diffusion_np(u, D1, D2, dx, zero, b_r))


def _implicit_diag_np(D1, D2, dx, dt, b_r, w):
    h2 = dx * dx
    f1 = 0.5 * (D1[1:, :] + D1[:-1, :])
    f2 = 0.5 * (D2[:, 1:] + D2[:, :-1])
    d = np.zeros_like(D1)
    d[1:-1, :] += f1[1:, :] + f1[:-1, :]
    d[0, :] += 2.0 * f1[0, :]
    d[-1, :] += 2.0 * f1[-1, :]
    d[:, 1:-1] += f2[:, 1:] + f2[:, :-1]
    d[:, 0] += 2.0 * f2[:, 0]
    d[:, -1] += 2.0 * f2[:, -1]
    d /= h2
    d[:, 0] += 2.0 * f2[:, 0] * b_r / dx
    return w * (1.0 / dt + d)


def _pcg_np(x, rhs, D1, D2, dx, dt, b_r, rtol, maxiter):
    w = _trap_weights(*x.shape)
    bvec = w * rhs
    minv = 1.0 / _implicit_diag_np(D1, D2, dx, dt, b_r, w)
    x = x.copy()
    r = bvec - _implicit_op_np(x, D1, D2, dx, dt, b_r, w)
    bnorm = np.sqrt(np.sum(bvec * bvec))
    if bnorm == 0.0:
        bnorm = 1.0
    z = minv * r
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(maxiter):
        if np.sqrt(np.sum(r * r)) <= rtol * bnorm:
            return x, it, np.sqrt(np.sum(r * r)) / bnorm
        q = _implicit_op_np(p, D1, D2, dx, dt, b_r, w)
        alpha = rz / np.sum(p * q)
        x += alpha * p
        r -= alpha * q
        z = minv * r
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, np.sqrt(np.sum(r * r)) / bnorm


@njit
def _implicit_op_nb(u, D1, D2, dx, dt, b_r, w, out):
    n0, n1 = u.shape
    h2 = dx * dx
    for i in range(n0):
        for j in range(n1):
            acc = 0.0
            if i < n0 - 1:
                fp = 0.5 * (D1[i + 1, j] + D1[i, j]) * (u[i + 1, j] - u[i, j])
                acc += 2.0 * fp if i == 0 else fp
            if i > 0:
                fm = 0.5 * (D1[i, j] + D1[i - 1, j]) * (u[i, j] - u[i - 1, j])
                acc -= 2.0 * fm if i == n0 - 1 else fm
            acc2 = 0.0
            if j < n1 - 1:
                fp = 0.5 * (D2[i, j + 1] + D2[i, j]) * (u[i, j + 1] - u[i, j])
                acc2 += 2.0 * fp if j == 0 else fp
            if j > 0:
                fm = 0.5 * (D2[i, j] + D2[i, j - 1]) * (u[i, j] - u[i, j - 1])
                acc2 -= 2.0 * fm if j == n1 - 1 else fm
            lap = acc / h2 + acc2 / h2
            if j == 0:
                lap -= 2.0 * 0.5 * (D2[i, 0] + D2[i, 1]) * b_r * u[i, 0] / dx
            out[i, j] = w[i, j] * (u[i, j] / dt - lap)


@njit
def _pcg_nb(x, rhs, D1, D2, dx, dt, b_r, rtol, maxiter):
    n0, n1 = x.shape
    w = np.ones((n0, n1))
    for i in range(n0):
        for j in range(n1):
            if i == 0 or i == n0 - 1:
                w[i, j] *= 0.5
            if j == 0 or j == n1 - 1:
                w[i, j] *= 0.5
    h2 = dx * dx
    minv = np.empty((n0, n1))
    for i in range(n0):
        for j in range(n1):
            d = 0.0
            if i < n0 - 1:
                f = 0.5 * (D1[i + 1, j] + D1[i, j])
                d += 2.0 * f if i == 0 else f
            if i > 0:
                f = 0.5 * (D1[i, j] + D1[i - 1, j])
                d += 2.0 * f if i == n0 - 1 else f
            if j < n1 - 1:
                f = 0.5 * (D2[i, j + 1] + D2[i, j])
                d += 2.0 * f if j == 0 else f
            if j > 0:
                f = 0.5 * (D2[i, j] + D2[i, j - 1])
                d += 2.0 * f if j == n1 - 1 else f
            d /= h2
            if j == 0:
                d += 2.0 * 0.5 * (D2[i, 0] + D2[i, 1]) * b_r / dx
            minv[i, j] = 1.0 / (w[i, j] * (1.0 / dt + d))
    x = x.copy()
    q = np.empty((n0, n1))
    _implicit_op_nb(x, D1, D2, dx, dt, b_r, w, q)
    r = w * rhs - q
    bnorm = np.sqrt(np.sum((w * rhs) ** 2))
    if bnorm == 0.0:
        bnorm = 1.0
    z = minv * r
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(maxiter):
        rn = np.sqrt(np.sum(r * r))
        if rn <= rtol * bnorm:
            return x, it, rn / bnorm
        _implicit_op_nb(p, D1, D2, dx, dt, b_r, w, q)
        alpha = rz / np.sum(p * q)
        x += alpha * p
        r -= alpha * q
        z = minv * r
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, np.sqrt(np.sum(r * r)) / bnorm


# --------------------------------------------------------------------------

if USE_NUMBA:
    p1_stiffness = _p1_stiffness_nb
    interp = _interp_nb
    smoluchowski = _smoluchowski_nb
    diffusion = _diffusion_nb
    deposit = _deposit_nb
    pcg = _pcg_nb
else:
    p1_stiffness = _p1_stiffness_np
    interp = _interp_np
    smoluchowski = _smoluchowski_np
    diffusion = _diffusion_np
    deposit = _deposit_np
    pcg = _pcg_np

trap_weights = _trap_weights
