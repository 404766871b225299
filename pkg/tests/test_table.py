import warnings

import numpy as np
import pytest

from clogsim.cell import cell_tortuosity
from clogsim.table import (
    MeshMetaMismatch,
    TableError,
    TortuosityTable,
    build_table,
    interpolate,
    interpolate_field,
    lipschitz_constant,
    load_table,
    partition,
    save_table,
    validate,
)


def test_partition_example():
    r = partition(0.05, 0.05)
    assert np.allclose(r, [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45])


def test_build_example_entries(coarse_table):
    assert len(coarse_table) == 10
    assert coarse_table.radii[-1] == 0.5
    assert coarse_table.clog_anchor
    assert np.all(coarse_table.tensors[-1] == 0)
    assert coarse_table.tau11[0] > coarse_table.tau11[-2]


def test_default_table(table):
    assert table.radii[0] == pytest.approx(0.02)
    assert table.r_cap == pytest.approx(0.49)
    assert table.mesh_meta == (64, 16)
    validate(table)


def test_parallel_build_matches_serial():
    a = build_table(0.1, 0.1, (16, 4), workers=1)
    b = build_table(0.1, 0.1, (16, 4), workers=2)
    assert np.array_equal(a.tensors, b.tensors)


@pytest.mark.parametrize("args", [(0.0, 0.1), (0.5, 0.1), (0.3, 0.25), (0.1, -0.1)])
def test_bad_partition(args):
    with pytest.raises(TableError):
        partition(*args)


def test_interpolate_at_node_is_exact(table):
    for m in (0, 7, len(table) - 2):
        out = interpolate(table, table.radii[m])
        assert np.array_equal(out.matrix, table.tensors[m])


def test_interpolate_midpoint_and_clamps(table):
    m = 10
    mid = 0.5 * (table.radii[m] + table.radii[m + 1])
    expect = 0.5 * (table.tensors[m] + table.tensors[m + 1])
    assert np.allclose(interpolate(table, mid).matrix, expect, atol=1e-15)
    assert np.array_equal(interpolate(table, 0.001).matrix, table.tensors[0])
    assert np.array_equal(interpolate(table, 0.6).matrix, np.zeros((2, 2)))
    assert np.array_equal(interpolate(table, 0.5).matrix, np.zeros((2, 2)))


def test_field_interpolation_matches_scalar(table, rng):
    R = rng.uniform(0.0, 0.55, size=(7, 5))
    t11, t22 = interpolate_field(table, R)
    for idx in np.ndindex(R.shape):
        tau = interpolate(table, R[idx])
        assert t11[idx] == pytest.approx(tau[0, 0], abs=1e-15)
        assert t22[idx] == pytest.approx(tau[1, 1], abs=1e-15)


def test_interpolation_lipschitz(table, rng):
    L = lipschitz_constant(table, include_anchor=True)
    r = rng.uniform(0.0, 0.6, size=(200, 2))
    for a, b in r:
        da = np.abs(interpolate(table, a).matrix - interpolate(table, b).matrix).max()
        assert da <= L * abs(a - b) + 1e-12


def test_refinement_reduces_interpolation_gap():
    probes = np.array([0.13, 0.21, 0.27, 0.33, 0.38])
    exact = np.array([cell_tortuosity(r, 32, 8)[0, 0] for r in probes])
    gaps = []
    for dr in (0.04, 0.02, 0.01):
        tb = build_table(0.05, dr, (32, 8))
        approx = np.array([interpolate(tb, r)[0, 0] for r in probes])
        gaps.append(np.max(np.abs(approx - exact)))
    assert gaps[1] < gaps[0] and gaps[2] < gaps[1]


def test_round_trip(tmp_path, coarse_table):
    path = tmp_path / "tau.txt"
    save_table(coarse_table, path)
    assert path.read_text().splitlines()[0] == "clogsim-tau v1 n_theta=32 n_rho=8"
    loaded = load_table(path)
    assert np.array_equal(loaded.radii, coarse_table.radii)
    assert np.array_equal(loaded.tensors, coarse_table.tensors)
    assert loaded.mesh_meta == (32, 8)
    assert loaded.clog_anchor


def test_load_rejects_non_monotone(tmp_path, coarse_table):
    path = tmp_path / "tau.txt"
    save_table(coarse_table, path)
    lines = path.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TableError):
        load_table(path)


@pytest.mark.parametrize("text", ["", "garbage\n0.1 1 0 0 1\n", "clogsim-tau v1 n_theta=x n_rho=2\n", "clogsim-tau v1 n_theta=8 n_rho=2\n0.1 1 0 0\n"])
def test_load_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(TableError):
        load_table(path)


def test_mesh_meta_mismatch_warns(tmp_path, coarse_table):
    path = tmp_path / "tau.txt"
    save_table(coarse_table, path)
    with pytest.warns(MeshMetaMismatch):
        load_table(path, expected_meta=(64, 16))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_table(path, expected_meta=(32, 8))


def test_validate_rejects_increasing_tau():
    bad = TortuosityTable([0.1, 0.2, 0.5], [np.eye(2) * 0.9, np.eye(2) * 0.95, np.zeros((2, 2))], (8, 2))
    with pytest.raises(TableError):
        validate(bad)
