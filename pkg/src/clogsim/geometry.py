"""Triangulated meshes of the perforated unit cell ``Y \\ B(r)``.

The mesh is a structured polar blend: ``n_theta`` rays leave the cell
centre ``a = (1/2, 1/2)`` and each ray is split into ``n_rho`` layers
between the obstacle circle and the square boundary. Because ``n_theta`` is
a multiple of 8 the four corners are ray end points and opposite edges carry
nodes at identical heights/abscissae, which makes periodic identification
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CENTER = np.array([0.5, 0.5])
R_MAX_MESH = 0.5 - 1e-4


class MeshError(ValueError):
    """Invalid mesh request or a mesh that violates its invariants."""


class DegenerateMeshError(MeshError):
    """A mapped mesh contains a non-positive triangle; rebuild from scratch."""


@dataclass(frozen=True, eq=False)
class CellMesh:
    radius: float
    nodes: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) counter-clockwise
    inner_boundary: np.ndarray  # ordered by angle, counter-clockwise
    periodic_pairs: np.ndarray  # (p, 2) rows (master, slave)
    n_theta: int = 0
    n_rho: int = 0
    dof_map: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.dof_map is None:
            object.__setattr__(self, "dof_map", _dof_map(len(self.nodes), self.periodic_pairs))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def dof_count(self) -> int:
        return int(self.dof_map.max()) + 1

    def triangle_areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    def check(self, tol: float = 1e-12) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        p = self.nodes
        if np.any(p < -tol) or np.any(p > 1 + tol):
            raise MeshError("node outside the unit square")
        dist = np.hypot(p[:, 0] - 0.5, p[:, 1] - 0.5)
        if np.any(dist < self.radius - 1e-12):
            raise MeshError("node inside the obstacle")
        ring = dist[self.inner_boundary]
        if np.max(np.abs(ring - self.radius)) > 1e-10:
            raise MeshError("inner boundary node off the circle")
        if np.min(self.triangle_areas()) <= 0.0:
            raise MeshError("non-positive triangle area")
        masters, slaves = self.periodic_pairs[:, 0], self.periodic_pairs[:, 1]
        if np.intersect1d(masters, slaves).size:
            raise MeshError("node is both master and slave")
        shift = p[slaves] - p[masters]
        if not np.all(np.isin(np.round(shift, 14), (0.0, 1.0))) or np.any(shift.sum(axis=1) == 0):
            raise MeshError("periodic pair not related by a lattice shift")


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (nodes[triangles[:, k]] for k in range(3))
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _dof_map(n_nodes: int, pairs: np.ndarray) -> np.ndarray:
    """Compress node indices to degrees of freedom after identification."""
    rep = np.arange(n_nodes)
    if len(pairs):
        rep[pairs[:, 1]] = pairs[:, 0]
    _, dof = np.unique(rep, return_inverse=True)
    return dof.astype(np.int64)


def square_exit_distance(theta: np.ndarray) -> np.ndarray:
    """Distance from the cell centre to the square boundary along ``theta``."""
    return 0.5 / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))


def _outer_points(n_theta: int) -> np.ndarray:
    """Exact square-boundary end points of the rays (corners snapped)."""
    q = n_theta // 8
    pts = np.empty((n_theta, 2))
    for i in range(n_theta):
        theta = 2.0 * np.pi * i / n_theta
        c, s = np.cos(theta), np.sin(theta)
        if abs(c) >= abs(s):
            pts[i] = (0.5 + 0.5 * np.sign(c), 0.5 + 0.5 * s / abs(c))
        else:
            pts[i] = (0.5 + 0.5 * c / abs(s), 0.5 + 0.5 * np.sign(s))
    for i, corner in ((q, (1.0, 1.0)), (3 * q, (0.0, 1.0)), (5 * q, (0.0, 0.0)), (7 * q, (1.0, 0.0))):
        pts[i] = corner
    return pts


def _boundary_pairs(n_theta: int) -> list[tuple[int, int]]:
    """(master ray, slave ray) pairs for the outer ring, masters on x=0 or y=0."""
    q = n_theta // 8
    pairs = []
    for i in range(-q + 1, q):  # right edge, excluding corners
        pairs.append(((n_theta // 2 - i) % n_theta, i % n_theta))
    for i in range(q + 1, 3 * q):  # top edge, excluding corners
        pairs.append(((n_theta - i) % n_theta, i))
    corner00 = 5 * q
    for i in (q, 3 * q, 7 * q):
        pairs.append((corner00, i))
    return pairs


def build_cell_mesh(r: float, n_theta: int = 64, n_rho: int = 16) -> CellMesh:
    """Structured triangulation of ``Y \\ B(r)`` with periodic node pairs.

    Parameters
    ----------
    r : float
        Obstacle radius, ``0 < r < 1/2 - 1e-4``.
    n_theta : int
        Number of rays; must be divisible by 8.
    n_rho : int
        Number of radial layers per ray (``>= 2``).
    """
    if not (0.0 < r < R_MAX_MESH):
        raise MeshError(f"radius {r!r} outside (0, {R_MAX_MESH})")
    if n_theta <= 0 or n_theta % 8:
        raise MeshError(f"n_theta={n_theta} must be a positive multiple of 8")
    if n_rho < 2:
        raise MeshError(f"n_rho={n_rho} must be >= 2")

    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    inner = CENTER + r * np.column_stack((np.cos(theta), np.sin(theta)))
    outer = _outer_points(n_theta)
    frac = np.arange(n_rho + 1) / n_rho
    # nodes[i, j]: ray i, layer j; layer 0 on the circle, layer n_rho on the square
    nodes = inner[:, None, :] + frac[None, :, None] * (outer - inner)[:, None, :]
    nodes[:, -1, :] = outer

    ray_pairs = _boundary_pairs(n_theta)
    for master, slave in ray_pairs:
        shift = np.round(outer[slave] - outer[master])
        nodes[slave, -1] = nodes[master, -1] + shift
    nodes = nodes.reshape(-1, 2)

    def idx(i, j):
        return (i % n_theta) * (n_rho + 1) + j

    tris = []
    for i in range(n_theta):
        for j in range(n_rho):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, d))
            tris.append((b, c, d))
    tris = np.array(tris, dtype=np.int64)
    neg = signed_areas(nodes, tris) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]

    pairs = np.array([(idx(m, n_rho), idx(s, n_rho)) for m, s in ray_pairs], dtype=np.int64)
    ring = np.array([idx(i, 0) for i in range(n_theta)], dtype=np.int64)
    mesh = CellMesh(r, nodes, tris, ring, pairs, n_theta, n_rho)
    mesh.check()
    return mesh


@dataclass(frozen=True)
class RadialMap:
    """Radial blend carrying ``Y \\ B(r_source)`` onto ``Y \\ B(r_target)``.

    Inside the source circle the map scales by ``r_target / r_source``; for
    ``|y - a| >= 1/2`` it is the identity. In the annulus the radius is
    blended linearly, ``rho -> r_t + (rho - r_s) (1/2 - r_t) / (1/2 - r_s)``,
    which written as ``(1 - chi) y + chi (s (y - a) + a)`` defines the
    cut-off ``chi``. Maps with swapped radii are exact inverses.
    """

    r_source: float
    r_target: float

    @property
    def scale(self) -> float:
        return self.r_target / self.r_source

    def radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        rs, rt = self.r_source, self.r_target
        blend = rt + (rho - rs) * (0.5 - rt) / (0.5 - rs)
        out = np.where(rho <= rs, rho * self.scale, blend)
        return np.where(rho >= 0.5, rho, out)

    def radial_derivative(self, rho):
        rho = np.asarray(rho, dtype=float)
        k = (0.5 - self.r_target) / (0.5 - self.r_source)
        out = np.where(rho <= self.r_source, self.scale, k)
        return np.where(rho >= 0.5, 1.0, out)

    def chi(self, rho):
        """Cut-off profile on ``[r_source, 1/2]`` (1 at the circle, 0 at 1/2)."""
        rho = np.asarray(rho, dtype=float)
        if self.r_source == self.r_target:
            return np.clip((0.5 - rho) / (0.5 - self.r_source), 0.0, 1.0)
        return (self.radial(rho) / rho - 1.0) / (self.scale - 1.0)

    def chi_prime(self, rho):
        rho = np.asarray(rho, dtype=float)
        rs = self.r_source
        if self.r_source == self.r_target:
            return np.full_like(rho, -1.0 / (0.5 - rs))
        # d/drho (g/rho) = (g' rho - g) / rho^2
        d = (self.radial_derivative(rho) * rho - self.radial(rho)) / rho**2
        return d / (self.scale - 1.0)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        rel = points - CENTER
        rho = np.hypot(rel[..., 0], rel[..., 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            factor = np.where(rho > 0, self.radial(rho) / np.where(rho > 0, rho, 1.0), self.scale)
        return CENTER + rel * factor[..., None]

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """``a(z) I + b(z) (y-a)(y-a)^T`` with ``z = |y - a|``, in the annulus."""
        rel = np.asarray(points, dtype=float) - CENTER
        z = np.hypot(rel[..., 0], rel[..., 1])
        a = self.radial(z) / z
        b = (self.radial_derivative(z) - a) / z**2
        eye = np.eye(2)
        return a[..., None, None] * eye + b[..., None, None] * rel[..., :, None] * rel[..., None, :]

    def det(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points, dtype=float) - CENTER
        z = np.hypot(rel[..., 0], rel[..., 1])
        return self.radial(z) / z * self.radial_derivative(z)


def apply_radial_map(mesh: CellMesh, r_target: float) -> CellMesh:
    """Move the nodes of ``mesh`` onto a cell with obstacle radius ``r_target``.

    Connectivity, periodic pairs and boundary index lists are kept. Raises
    :class:`DegenerateMeshError` if a triangle collapses.
    """
    if not (0.0 < r_target < 0.5) or not (0.0 < mesh.radius < 0.5):
        raise MeshError("radii must lie in (0, 1/2)")
    if r_target == mesh.radius:
        return mesh
    xi = RadialMap(mesh.radius, r_target)
    nodes = xi(mesh.nodes)
    # the outer square never moves (|y-a| >= 1/2 there); re-snap ring nodes exactly
    ring = mesh.inner_boundary
    ang = np.arctan2(mesh.nodes[ring, 1] - 0.5, mesh.nodes[ring, 0] - 0.5)
    nodes[ring] = CENTER + r_target * np.column_stack((np.cos(ang), np.sin(ang)))
    if np.min(signed_areas(nodes, mesh.triangles)) <= 0.0:
        raise DegenerateMeshError(f"mapping {mesh.radius} -> {r_target} produced a degenerate triangle")
    out = CellMesh(r_target, nodes, mesh.triangles, mesh.inner_boundary, mesh.periodic_pairs,
                   mesh.n_theta, mesh.n_rho, mesh.dof_map)
    out.check()
    return out


def jacobian_determinant_bounds(xi: RadialMap, n_rho: int = 401, n_ang: int = 64) -> tuple[float, float]:
    """Sampled min/max of ``det D xi`` over the blend annulus."""
    if xi.r_source == xi.r_target:
        return 1.0, 1.0
    rho = np.linspace(xi.r_source, 0.5, n_rho)
    ang = np.linspace(0.0, 2.0 * np.pi, n_ang, endpoint=False)
    rr, aa = np.meshgrid(rho, ang, indexing="ij")
    pts = CENTER + np.stack((rr * np.cos(aa), rr * np.sin(aa)), axis=-1)
    d = np.linalg.det(xi.jacobian(pts))
    return float(d.min()), float(d.max())


def dump_mesh(mesh: CellMesh, path) -> None:
    """Plain-text listing: ``index x y`` per node, then triangle triples."""
    lines = [f"# cell mesh r={mesh.radius!r} nodes={mesh.node_count} triangles={len(mesh.triangles)}"]
    lines += [f"{k} {x:.17g} {y:.17g}" for k, (x, y) in enumerate(mesh.nodes)]
    lines.append("# triangles")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
