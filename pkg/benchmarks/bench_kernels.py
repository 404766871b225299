"""Time each hot kernel on its numba and numpy paths.

    python3 benchmarks/bench_kernels.py [--points 41] [--repeat 200]

Both paths are always importable; the numba functions are compiled once
before timing so JIT cost is excluded.
"""

import argparse
import timeit

import numpy as np

from clogsim import _accel, kernels
from clogsim.geometry import build_cell_mesh


def cases(points: int):
    rng = np.random.default_rng(0)
    n = points
    U = rng.random((3, n, n))
    V = rng.random((n, n))
    R = rng.uniform(0.05, 0.45, (n, n))
    clog = np.zeros((n, n), dtype=bool)
    D1 = rng.uniform(0.1, 1.0, (n, n))
    D2 = rng.uniform(0.1, 1.0, (n, n))
    g = rng.random(n)
    gamma = np.full((3, 3), 10.0)
    a = np.array([0.9, 0.5, 0.3])
    av = np.full(3, 0.1)
    dx = 1.0 / (n - 1)
    xp = np.linspace(0.02, 0.5, 49)
    fp = np.cos(xp)
    mesh = build_cell_mesh(0.25, 64, 16)
    rhs = rng.random((n, n))
    return {
        "smoluchowski": lambda f: f(U, gamma),
        "diffusion": lambda f: f(U[0], D1, D2, dx, g, 0.5),
        "deposit": lambda f: f(U, V, R, clog, a, av, 3.0, 0.1, 1e-4, 1e-3),
        "interp": lambda f: f(R.ravel(), xp, fp),
        "pcg": lambda f: f(np.zeros((n, n)), rhs, D1, D2, dx, 1e-3, 0.5, 1e-10, 500),
        "p1_stiffness": lambda f: f(mesh.nodes, mesh.triangles),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=41)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"grid {args.points}x{args.points}, {args.repeat} calls per kernel")
    print(f"{'kernel':<14}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, call in cases(args.points).items():
        f_np = getattr(kernels, f"_{name}_np")
        f_nb = getattr(kernels, f"_{name}_nb")
        call(f_nb)  # compile
        t_np = min(timeit.repeat(lambda: call(f_np), number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(lambda: call(f_nb), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<14}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
