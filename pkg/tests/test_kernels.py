"""Both kernel back-ends must agree; the numba path is compiled even when disabled."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from clogsim import _accel, kernels
from clogsim.geometry import build_cell_mesh

pytestmark = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba not installed")


def test_backend_flag_respected():
    assert _accel.backend_name() in ("numba", "numpy")
    expected = kernels._smoluchowski_nb if _accel.USE_NUMBA else kernels._smoluchowski_np
    assert kernels.smoluchowski is expected


def test_p1_stiffness_equivalent():
    m = build_cell_mesh(0.3, 32, 8)
    v1, a1 = kernels._p1_stiffness_np(m.nodes, m.triangles)
    v2, a2 = kernels._p1_stiffness_nb(m.nodes, m.triangles)
    assert np.allclose(v1, v2, rtol=1e-13, atol=1e-13)
    assert np.allclose(a1, a2, rtol=1e-14)
    # rows of each local stiffness sum to zero
    assert np.allclose(v1.reshape(-1, 3, 3).sum(axis=2), 0, atol=1e-12)


@given(hnp.arrays(float, st.integers(1, 30), elements=st.floats(-0.2, 0.8)))
def test_interp_equivalent(x):
    xp = np.linspace(0.02, 0.5, 17)
    fp = np.cos(3 * xp)
    assert np.array_equal(kernels._interp_np(x, xp, fp), kernels._interp_nb(x, xp, fp))


@given(st.integers(1, 6), st.data())
def test_smoluchowski_equivalent(n, data):
    U = data.draw(hnp.arrays(float, (n, 4, 3), elements=st.floats(0, 5)))
    g = data.draw(hnp.arrays(float, (n, n), elements=st.floats(0, 5)))
    g = g + g.T
    assert np.allclose(kernels._smoluchowski_np(U, g), kernels._smoluchowski_nb(U, g), rtol=1e-12, atol=1e-12)


def _fields(rng, n=9):
    u = rng.random((n, n))
    D1 = rng.uniform(0.1, 1.0, (n, n))
    D2 = rng.uniform(0.1, 1.0, (n, n))
    g = rng.random(n)
    return u, D1, D2, g


def test_diffusion_equivalent(rng):
    for _ in range(10):
        u, D1, D2, g = _fields(rng)
        a = kernels._diffusion_np(u, D1, D2, 0.125, g, 0.5)
        b = kernels._diffusion_nb(u, D1, D2, 0.125, g, 0.5)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-10)


def test_diffusion_neumann_conserves_with_trapezoid_weights(rng):
    u, D1, D2, _ = _fields(rng)
    w = kernels.trap_weights(*u.shape)
    lap = kernels._diffusion_np(u, D1, D2, 0.125, np.zeros(u.shape[0]), 0.0)
    assert abs(np.sum(w * lap)) <= 1e-11


def test_implicit_operator_symmetric(rng):
    n = 6
    _, D1, D2, _ = _fields(rng, n)
    w = kernels.trap_weights(n, n)
    A = np.zeros((n * n, n * n))
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        A[:, k] = kernels._implicit_op_np(e.reshape(n, n), D1, D2, 0.2, 0.01, 0.5, w).ravel()
    assert np.allclose(A, A.T, atol=1e-9)
    assert np.all(np.linalg.eigvalsh(0.5 * (A + A.T)) > 0)
    out = np.empty((n, n))
    x = rng.random((n, n))
    kernels._implicit_op_nb(x, D1, D2, 0.2, 0.01, 0.5, w, out)
    assert np.allclose(out, kernels._implicit_op_np(x, D1, D2, 0.2, 0.01, 0.5, w))
    assert np.allclose(np.diag(A).reshape(n, n), kernels._implicit_diag_np(D1, D2, 0.2, 0.01, 0.5, w))


def test_pcg_equivalent_and_accurate(rng):
    u, D1, D2, _ = _fields(rng, 15)
    rhs = rng.random(u.shape)
    xa, ia, ra = kernels._pcg_np(np.zeros_like(u), rhs, D1, D2, 1 / 14, 1e-3, 0.5, 1e-12, 500)
    xb, ib, rb = kernels._pcg_nb(np.zeros_like(u), rhs, D1, D2, 1 / 14, 1e-3, 0.5, 1e-12, 500)
    assert ra <= 1e-12 and rb <= 1e-12
    assert np.allclose(xa, xb, rtol=1e-9, atol=1e-12)
    zero = np.zeros(u.shape[0])
    resid = xa / 1e-3 - kernels._diffusion_np(xa, D1, D2, 1 / 14, zero, 0.5) - rhs
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(rhs / 1e-3))


def test_deposit_equivalent(rng):
    n = 7
    U = rng.random((3, n, n))
    V = rng.random((n, n))
    R = rng.uniform(0.0005, 0.499, (n, n))
    clog = rng.random((n, n)) < 0.2
    R[clog] = 0.5
    a = np.array([0.9, 0.5, 0.3])
    av = np.array([0.1, 0.1, 0.1])
    out_np = kernels._deposit_np(U, V, R, clog, a, av, 3.0, 2.0, 1e-3, 1e-3)
    out_nb = kernels._deposit_nb(U, V, R, clog, a, av, 3.0, 2.0, 1e-3, 1e-3)
    for x, y in zip(out_np, out_nb):
        assert np.allclose(x, y, rtol=1e-14, atol=1e-15)
    assert np.all(out_np[2][clog])


def test_env_flag_selects_numpy_fallback():
    import os
    import subprocess
    import sys

    code = "from clogsim import _accel, kernels; print(_accel.backend_name(), kernels.diffusion is kernels._diffusion_np)"
    env = dict(os.environ, CLOGSIM_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
