import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clogsim.geometry import (
    CENTER,
    DegenerateMeshError,
    MeshError,
    RadialMap,
    apply_radial_map,
    build_cell_mesh,
    dump_mesh,
    jacobian_determinant_bounds,
)


def test_small_mesh_counts():
    m = build_cell_mesh(0.25, 8, 2)
    assert m.node_count == 24
    assert len(m.triangles) == 32
    assert len(m.inner_boundary) == 8


@pytest.mark.parametrize("r,nt,nr", [(0.25, 8, 2), (0.25, 64, 16), (0.1, 32, 4), (0.45, 48, 6)])
def test_mesh_invariants(r, nt, nr):
    m = build_cell_mesh(r, nt, nr)
    m.check()
    d = np.hypot(*(m.nodes - CENTER).T)
    assert np.all(d >= r - 1e-12)
    assert np.all((m.nodes >= 0) & (m.nodes <= 1))
    assert np.all(np.abs(d[m.inner_boundary] - r) <= 1e-10)
    assert np.all(m.triangle_areas() > 0)


def test_near_touching_radius_is_valid():
    m = build_cell_mesh(0.49, 16, 4)
    assert m.triangle_areas().min() > 0


def test_periodic_pairs_shift_by_unit_vectors():
    m = build_cell_mesh(0.25, 32, 4)
    p = m.periodic_pairs
    shift = m.nodes[p[:, 1]] - m.nodes[p[:, 0]]
    allowed = np.array([[1, 0], [0, 1], [1, 1]])
    ok = np.min(np.abs(shift[:, None, :] - allowed[None]).max(axis=2), axis=1)
    assert np.all(ok <= 1e-14)
    # the diagonal shift only occurs for the (1,1) corner
    diag = np.all(np.abs(shift - 1) <= 1e-14, axis=1)
    assert diag.sum() == 1
    assert np.allclose(m.nodes[p[diag, 1]], [[1.0, 1.0]])
    # no node is both master and slave
    assert not set(p[:, 0]) & set(p[:, 1])


def test_dof_count_after_identification():
    nt, nr = 32, 4
    m = build_cell_mesh(0.25, nt, nr)
    # outer ring has nt nodes; nt/2 - 1 edge pairs plus three corner slaves are removed
    assert m.dof_count == m.node_count - (nt // 2 - 2) - 3


def test_area_matches_and_converges():
    exact = 1 - np.pi * 0.25**2
    errs = []
    for nt in (16, 32, 64, 128):
        area = build_cell_mesh(0.25, nt, nt // 4).triangle_areas().sum()
        errs.append(abs(area - exact))
    assert errs[2] / exact < 0.02
    assert all(b < a for a, b in zip(errs, errs[1:]))


@pytest.mark.parametrize("bad", [0.0, -0.1, 0.5, 0.49995])
def test_radius_out_of_range(bad):
    with pytest.raises(MeshError):
        build_cell_mesh(bad, 16, 4)


def test_n_theta_must_be_multiple_of_eight():
    with pytest.raises(MeshError):
        build_cell_mesh(0.25, 12, 4)
    with pytest.raises(MeshError):
        build_cell_mesh(0.25, 16, 1)


def test_identity_map_keeps_coordinates():
    m = build_cell_mesh(0.25, 16, 4)
    assert np.array_equal(apply_radial_map(m, 0.25).nodes, m.nodes)


def test_map_corners_unmoved_and_scaling_example():
    m = build_cell_mesh(0.25, 16, 4)
    out = apply_radial_map(m, 0.2)
    corners = np.all(np.isin(m.nodes, [0.0, 1.0]), axis=1)
    assert corners.sum() == 4
    assert np.array_equal(out.nodes[corners], m.nodes[corners])
    k = int(np.argmin(np.hypot(*(m.nodes - [0.75, 0.5]).T)))
    assert np.allclose(m.nodes[k], [0.75, 0.5])
    assert np.allclose(out.nodes[k], [0.70, 0.5], atol=1e-15)
    assert np.array_equal(out.triangles, m.triangles)
    assert np.array_equal(out.periodic_pairs, m.periodic_pairs)
    assert np.array_equal(out.inner_boundary, m.inner_boundary)


def test_radial_map_scaling_inside_and_identity_outside():
    xi = RadialMap(0.25, 0.2)
    inside = CENTER + np.array([[0.1, 0.05], [-0.2, 0.1]])
    assert np.allclose(xi(inside), CENTER + (inside - CENTER) * 0.8)
    outside = np.array([[0.0, 0.0], [1.0, 0.5], [0.0, 0.3]])
    assert np.array_equal(xi(outside), outside)
    assert xi.chi(0.25) == pytest.approx(1.0)
    assert xi.chi(0.5) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(0.05, 0.49), st.floats(0.05, 0.49))
def test_round_trip(r1, r2):
    m = build_cell_mesh(r1, 16, 4)
    try:
        there = apply_radial_map(m, r2)
    except DegenerateMeshError:
        return  # caller rebuilds; nothing to round-trip
    back = apply_radial_map(there, r1)
    assert np.max(np.abs(back.nodes - m.nodes)) <= 1e-10


def test_determinant_bounds_examples():
    assert jacobian_determinant_bounds(RadialMap(0.3, 0.3)) == (1.0, 1.0)
    lo, hi = jacobian_determinant_bounds(RadialMap(0.25, 0.2))
    assert lo >= (0.2 / 0.25) ** 2 - 1e-12
    lo, hi = jacobian_determinant_bounds(RadialMap(0.2, 0.25))
    assert hi <= (0.25 / 0.2) ** 2 + 1e-12


@given(st.floats(0.05, 0.49), st.floats(0.05, 0.49))
def test_determinant_bound_direction(r_small, r_big):
    r1, r2 = sorted((r_small, r_big))
    if r2 - r1 < 1e-9:
        return
    shrink = RadialMap(r2, r1)
    lo, hi = jacobian_determinant_bounds(shrink, n_rho=101, n_ang=16)
    assert lo > 0
    assert lo >= (r1 / r2) ** 2 - 1e-8
    grow = RadialMap(r1, r2)
    lo, hi = jacobian_determinant_bounds(grow, n_rho=101, n_ang=16)
    assert lo > 0
    assert hi <= (r2 / r1) ** 2 + 1e-8


def test_jacobian_matches_finite_differences():
    xi = RadialMap(0.3, 0.22)
    y = np.array([0.5 + 0.35 * np.cos(0.7), 0.5 + 0.35 * np.sin(0.7)])
    h = 1e-6
    fd = np.column_stack([(xi(y + h * e) - xi(y - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(xi.jacobian(y), fd, atol=1e-7)
    assert xi.det(y) == pytest.approx(np.linalg.det(fd), rel=1e-6)


def test_dump_mesh(tmp_path):
    m = build_cell_mesh(0.25, 8, 2)
    path = tmp_path / "mesh.txt"
    dump_mesh(m, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 24 + 1 + 32
    assert lines[1].split()[0] == "0"
