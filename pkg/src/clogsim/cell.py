"""Periodic cell problems and the tortuosity / effective diffusivity tensors.

For ``k = 1, 2`` the corrector ``w_k`` solves ``-Lap w_k = 0`` in the fluid
part of the cell, ``-grad w_k . n = e_k . n`` on the obstacle boundary (``n``
pointing out of the fluid, into the ball) and is ``Y``-periodic. With
piecewise-linear elements the weak form reads::

    int grad w_k . grad eta  =  int_Sigma (e_k . nu) eta

where ``nu = (y - a) / |y - a|`` points from the ball into the fluid. The
boundary load is integrated exactly on the polygonal obstacle, so the
compatibility condition holds to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .geometry import CellMesh, build_cell_mesh


class CellSolveError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CellSolution:
    radius: float
    w: np.ndarray  # (2, n_nodes)
    mean: np.ndarray  # area-weighted means after normalisation (~0)
    residual: float  # relative residual of the assembled system


@dataclass(frozen=True)
class TortuosityTensor:
    matrix: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float).reshape(2, 2))

    @classmethod
    def zero(cls) -> "TortuosityTensor":
        return cls(np.zeros((2, 2)))

    def __getitem__(self, key):
        return self.matrix[key]

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def check(self, tol: float = 1e-6) -> None:
        m = self.matrix
        if abs(m[0, 1] - m[1, 0]) > 1e-10:
            raise ValueError("tortuosity tensor not symmetric")
        ev = self.eigvals()
        if ev[0] < -tol or ev[1] > 1.0 + tol:
            raise ValueError(f"tortuosity eigenvalues {ev} outside [0, 1]")


def _assemble(mesh: CellMesh):
    vals, area = kernels.p1_stiffness(mesh.nodes, mesh.triangles)
    dofs = mesh.dof_map[mesh.triangles]
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    n = mesh.dof_count
    K = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K, area


def boundary_load(mesh: CellMesh) -> np.ndarray:
    """Nodal loads ``int_Sigma (e_k . nu) phi_v`` for k = 1, 2, shape (2, n_nodes)."""
    ring = mesh.inner_boundary
    p = mesh.nodes[ring]
    q = np.roll(p, -1, axis=0)
    t = q - p
    # ring is counter-clockwise, so (t_y, -t_x) points away from the centre
    nl = np.column_stack((t[:, 1], -t[:, 0]))  # length-weighted normal
    f = np.zeros((2, mesh.node_count))
    for k in range(2):
        half = 0.5 * nl[:, k]
        np.add.at(f[k], ring, half)
        np.add.at(f[k], np.roll(ring, -1), half)
    return f


def solve_cell_problem(mesh: CellMesh, rtol: float = 1e-10) -> CellSolution:
    K, area = _assemble(mesh)
    n = mesh.dof_count
    f_nodes = boundary_load(mesh)
    F = np.zeros((2, n))
    for k in range(2):
        np.add.at(F[k], mesh.dof_map, f_nodes[k])
        if abs(F[k].sum()) > 1e-8:
            raise CellSolveError(f"boundary load not compatible: sum={F[k].sum():.3e}")

    pin = mesh.dof_map[mesh.inner_boundary[0]]
    keep = np.setdiff1d(np.arange(n), [pin])
    lu = spla.splu(K[keep][:, keep].tocsc())

    tri_mean = np.zeros(mesh.node_count)
    np.add.at(tri_mean, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    total = area.sum()

    w = np.zeros((2, mesh.node_count))
    means = np.zeros(2)
    worst = 0.0
    for k in range(2):
        x = np.zeros(n)
        x[keep] = lu.solve(F[k][keep])
        res = np.linalg.norm(K @ x - F[k]) / max(np.linalg.norm(F[k]), 1e-300)
        worst = max(worst, res)
        wk = x[mesh.dof_map]
        wk -= tri_mean @ wk / total
        w[k] = wk
        means[k] = tri_mean @ wk / total
    if not np.isfinite(worst) or worst > rtol:
        raise CellSolveError(f"cell solve residual {worst:.3e} above {rtol:.1e} at r={mesh.radius}")
    return CellSolution(mesh.radius, w, means, worst)


def _gradients(mesh: CellMesh, field: np.ndarray):
    p = mesh.nodes[mesh.triangles]
    u = field[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    du1 = u[:, 1] - u[:, 0]
    du2 = u[:, 2] - u[:, 0]
    gx = (du1 * e2[:, 1] - du2 * e1[:, 1]) / det
    gy = (du2 * e1[:, 0] - du1 * e2[:, 0]) / det
    return np.column_stack((gx, gy)), 0.5 * det


def tortuosity(mesh: CellMesh, sol: CellSolution) -> TortuosityTensor:
    """``tau_jk = int (delta_jk + d_j w_k)`` over the fluid, symmetrised."""
    tau = np.zeros((2, 2))
    for k in range(2):
        g, area = _gradients(mesh, sol.w[k])
        for j in range(2):
            tau[j, k] = np.sum(area * ((j == k) + g[:, j]))
    asym = abs(tau[0, 1] - tau[1, 0])
    return TortuosityTensor(0.5 * (tau + tau.T), asym)


def tortuosity_energy(mesh: CellMesh, sol: CellSolution) -> np.ndarray:
    """``int (grad w_k + e_k) . (grad w_j + e_j)``; symmetric by construction."""
    grads = []
    for k in range(2):
        g, area = _gradients(mesh, sol.w[k])
        g[:, k] += 1.0
        grads.append(g)
    return np.array([[np.sum(area * np.sum(grads[j] * grads[k], axis=1)) for k in range(2)] for j in range(2)])


def porosity(r, domain_area: float = 1.0):
    return (1.0 - np.pi * np.asarray(r, dtype=float) ** 2) / domain_area


def effective_diffusivity(tau, r: float, d_i: float, domain_area: float = 1.0) -> np.ndarray:
    """``D = d_i * phi(r) * tau`` with ``phi(r) = (1 - pi r^2) / |Omega|``."""
    m = tau.matrix if isinstance(tau, TortuosityTensor) else np.asarray(tau, dtype=float)
    return d_i * float(porosity(r, domain_area)) * m


def cell_tortuosity(r: float, n_theta: int = 64, n_rho: int = 16) -> TortuosityTensor:
    mesh = build_cell_mesh(r, n_theta, n_rho)
    return tortuosity(mesh, solve_cell_problem(mesh))


def maxwell_tortuosity(r: float) -> float:
    """Dilute-limit reference ``(1 - f) / (1 + f)`` with ``f = pi r^2``."""
    f = np.pi * r * r
    return (1.0 - f) / (1.0 + f)

