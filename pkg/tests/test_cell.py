import numpy as np
import pytest

from clogsim.cell import (
    CellSolveError,
    TortuosityTensor,
    boundary_load,
    cell_tortuosity,
    effective_diffusivity,
    maxwell_tortuosity,
    porosity,
    solve_cell_problem,
    tortuosity,
    tortuosity_energy,
)
from clogsim.geometry import build_cell_mesh
from clogsim.oracles import fv_tortuosity

# cut-face finite-volume reference for tau11(0.25), N=400 (see oracles.fv_tortuosity)
FV_TAU11_025 = 0.67162954


def test_boundary_load_integrates_to_zero():
    for r in (0.05, 0.25, 0.45):
        m = build_cell_mesh(r, 32, 4)
        f = boundary_load(m)
        assert abs(f[0].sum()) <= 1e-12 and abs(f[1].sum()) <= 1e-12


def test_solution_zero_mean_and_residual():
    m = build_cell_mesh(0.25, 32, 8)
    sol = solve_cell_problem(m)
    assert np.all(np.abs(sol.mean) <= 1e-10)
    assert sol.residual <= 1e-10
    # single-valued on identified nodes
    p = m.periodic_pairs
    assert np.array_equal(sol.w[:, p[:, 0]], sol.w[:, p[:, 1]])


def test_tiny_obstacle_limit():
    m = build_cell_mesh(1e-3, 64, 16)
    sol = solve_cell_problem(m)
    assert np.max(np.abs(sol.w)) <= 1e-2
    tau = tortuosity(m, sol)
    assert np.allclose(tau.matrix, np.eye(2), atol=1e-3)


def test_tau_symmetry_and_isotropy():
    tau = cell_tortuosity(0.25)
    assert abs(tau[0, 0] - tau[1, 1]) <= 1e-3
    assert abs(tau[0, 1]) <= 1e-3
    assert tau.asymmetry <= 1e-10
    tau.check()


def test_tau_against_maxwell_and_finite_volume():
    t11 = cell_tortuosity(0.25)[0, 0]
    maxwell = maxwell_tortuosity(0.25)
    assert maxwell == pytest.approx(0.672, abs=5e-4)
    assert abs(t11 - maxwell) / maxwell <= 0.03
    assert abs(t11 - FV_TAU11_025) / FV_TAU11_025 <= 0.01
    assert t11 < 1.0


def test_fv_reference_is_converged():
    assert fv_tortuosity(0.25, 200) == pytest.approx(FV_TAU11_025, rel=1e-4)


def test_energy_form_agrees():
    m = build_cell_mesh(0.3, 64, 16)
    sol = solve_cell_problem(m)
    tau = tortuosity(m, sol)
    assert np.allclose(tortuosity_energy(m, sol), tau.matrix, atol=1e-10)


def test_mesh_convergence():
    vals = [cell_tortuosity(0.25, nt, nt // 4)[0, 0] for nt in (16, 32, 64, 128)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])


def test_monotone_and_lipschitz_across_radii():
    radii = np.arange(0.05, 0.491, 0.02)
    t11 = np.array([cell_tortuosity(r, 32, 8)[0, 0] for r in radii])
    assert np.all(np.diff(t11) < 0)
    slope = np.abs(np.diff(t11)) / np.diff(radii)
    assert np.all(np.isfinite(slope))


def test_lipschitz_constant_stable_under_refinement():
    radii = np.arange(0.05, 0.4801, 0.01)

    def max_slope(nt):
        t = np.array([cell_tortuosity(r, nt, nt // 4)[0, 0] for r in radii])
        return np.max(np.abs(np.diff(t)) / np.diff(radii))

    coarse, fine = max_slope(32), max_slope(64)
    assert fine <= 4 * coarse and coarse <= 4 * fine


@pytest.mark.parametrize("r", [0.05, 0.2, 0.35, 0.49])
def test_diffusivity_spd(r):
    tau = cell_tortuosity(r, 32, 8)
    for d in (0.3, 0.5, 0.99):
        D = effective_diffusivity(tau, r, d)
        assert np.allclose(D, D.T)
        assert np.all(np.linalg.eigvalsh(D) > 0)


def test_effective_diffusivity_examples():
    assert np.allclose(effective_diffusivity(np.eye(2), 0.0, 0.3), 0.3 * np.eye(2))
    assert float(porosity(0.25)) == pytest.approx(1 - np.pi / 16)
    assert float(porosity(0.25)) == pytest.approx(0.80365, abs=1e-5)
    D = effective_diffusivity(TortuosityTensor(np.diag([0.672, 0.672])), 0.25, 1.0)
    assert D[0, 0] == pytest.approx(0.540, abs=5e-4)


def test_tensor_check_rejects_bad_tensors():
    with pytest.raises(ValueError):
        TortuosityTensor(np.array([[1.0, 0.1], [0.0, 1.0]])).check()
    with pytest.raises(ValueError):
        TortuosityTensor(np.diag([1.2, 0.5])).check()


def test_broken_load_is_reported(monkeypatch):
    m = build_cell_mesh(0.25, 16, 4)
    import clogsim.cell as cell

    monkeypatch.setattr(cell, "boundary_load", lambda mesh: np.ones((2, mesh.node_count)))
    with pytest.raises(CellSolveError):
        cell.solve_cell_problem(m)
