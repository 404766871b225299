"""Radius-indexed tortuosity table: build, persist, interpolate."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .cell import CellSolveError, TortuosityTensor, cell_tortuosity, porosity

FORMAT_TAG = "clogsim-tau v1"
CLOG_RADIUS = 0.5


class TableError(ValueError):
    pass


class MeshMetaMismatch(UserWarning):
    """Loaded table was built at a different cell-mesh resolution."""


@dataclass(frozen=True, eq=False)
class TortuosityTable:
    radii: np.ndarray  # (M,)
    tensors: np.ndarray  # (M, 2, 2)
    mesh_meta: tuple[int, int]  # (n_theta, n_rho)
    clog_anchor: bool = True

    def __post_init__(self):
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=float))
        object.__setattr__(self, "tensors", np.asarray(self.tensors, dtype=float).reshape(-1, 2, 2))
        object.__setattr__(self, "mesh_meta", tuple(int(v) for v in self.mesh_meta))

    def __len__(self):
        return self.radii.size

    @property
    def tau11(self) -> np.ndarray:
        return self.tensors[:, 0, 0]

    @property
    def tau22(self) -> np.ndarray:
        return self.tensors[:, 1, 1]

    @property
    def r_cap(self) -> float:
        """Largest radius backed by an actual cell solve."""
        return float(self.radii[-2] if self.clog_anchor else self.radii[-1])

    def tensor(self, m: int) -> TortuosityTensor:
        return TortuosityTensor(self.tensors[m])


def partition(r_min: float, delta_r: float) -> np.ndarray:
    if not (0.0 < r_min < 0.5):
        raise TableError(f"r_min={r_min} outside (0, 1/2)")
    if not (0.0 < delta_r < 0.5 - r_min):
        raise TableError(f"delta_r={delta_r} outside (0, 1/2 - r_min)")
    r_cap = 0.5 - delta_r
    count = int(np.floor((r_cap - r_min) / delta_r + 1e-9)) + 1
    # rounding keeps nodes like 0.05 + 8*0.05 exactly on the decimal grid
    return np.round(r_min + delta_r * np.arange(count), 12)


def _solve_one(args):
    r, n_theta, n_rho = args
    try:
        return cell_tortuosity(r, n_theta, n_rho).matrix
    except Exception as exc:  # re-raised with the radius attached
        raise CellSolveError(f"cell solve failed at r={r}: {exc}") from exc


def build_table(r_min: float = 0.02, delta_r: float = 0.01, mesh_meta=(64, 16), workers: int = 1) -> TortuosityTable:
    n_theta, n_rho = mesh_meta
    radii = partition(r_min, delta_r)
    jobs = [(float(r), n_theta, n_rho) for r in radii]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(_solve_one, jobs))
    else:
        mats = [_solve_one(j) for j in jobs]
    radii = np.append(radii, CLOG_RADIUS)
    tensors = np.concatenate([np.array(mats), np.zeros((1, 2, 2))])
    table = TortuosityTable(radii, tensors, (n_theta, n_rho), clog_anchor=True)
    validate(table)
    return table


def validate(table: TortuosityTable, tol: float = 1e-6) -> None:
    r = table.radii
    if r.ndim != 1 or r.size < 2 or table.tensors.shape != (r.size, 2, 2):
        raise TableError("table needs at least two entries with matching tensors")
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(table.tensors)):
        raise TableError("non-finite table entries")
    if np.any(np.diff(r) <= 0):
        raise TableError("table radii are not strictly increasing")
    if r[0] <= 0 or r[-1] > CLOG_RADIUS:
        raise TableError("table radii outside (0, 1/2]")
    if table.clog_anchor:
        if r[-1] != CLOG_RADIUS or np.any(table.tensors[-1] != 0.0):
            raise TableError("clog anchor must be (1/2, zero tensor)")
    for m in range(r.size):
        try:
            TortuosityTensor(table.tensors[m]).check(tol)
        except ValueError as exc:
            raise TableError(f"entry r={r[m]}: {exc}") from exc
    if np.any(np.diff(table.tau11) >= 0):
        raise TableError("tau11 is not strictly decreasing in r")


def interpolate(table: TortuosityTable, r: float) -> TortuosityTensor:
    """Entrywise linear interpolation, clamped below ``r_0``, zero for ``r >= 1/2``."""
    if r >= CLOG_RADIUS:
        return TortuosityTensor.zero()
    flat = table.tensors.reshape(len(table), 4)
    x = np.array([float(r)])
    vals = [kernels.interp(x, table.radii, flat[:, k])[0] for k in range(4)]
    return TortuosityTensor(np.array(vals))


def interpolate_field(table: TortuosityTable, R: np.ndarray):
    """Diagonal entries ``(tau11, tau22)`` sampled on a field of radii."""
    R = np.ascontiguousarray(R, dtype=float)
    t11 = kernels.interp(R, table.radii, np.ascontiguousarray(table.tau11))
    t22 = kernels.interp(R, table.radii, np.ascontiguousarray(table.tau22))
    clogged = R >= CLOG_RADIUS
    t11[clogged] = 0.0
    t22[clogged] = 0.0
    return t11, t22


def lipschitz_constant(table: TortuosityTable, include_anchor: bool = False) -> float:
    """Max over segments of ``|delta tau|_inf / delta r``."""
    stop = len(table) if include_anchor or not table.clog_anchor else len(table) - 1
    dt = np.abs(np.diff(table.tensors[:stop], axis=0)).reshape(stop - 1, 4).max(axis=1)
    return float(np.max(dt / np.diff(table.radii[:stop])))


def max_phi_tau(table: TortuosityTable, domain_area: float = 1.0) -> float:
    return float(np.max(porosity(table.radii, domain_area) * table.tau11))


def save_table(table: TortuosityTable, path) -> None:
    n_theta, n_rho = table.mesh_meta
    lines = [f"{FORMAT_TAG} n_theta={n_theta} n_rho={n_rho}"]
    for r, t in zip(table.radii, table.tensors):
        lines.append(" ".join(f"{v:.17g}" for v in (r, t[0, 0], t[0, 1], t[1, 0], t[1, 1])))
    Path(path).write_text("\n".join(lines) + "\n")


def load_table(path, expected_meta=None) -> TortuosityTable:
    """Read and validate a table file.

    A mismatch between the stored mesh resolution and ``expected_meta`` is
    reported through a :class:`MeshMetaMismatch` warning, not an error.
    """
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(FORMAT_TAG):
        raise TableError(f"{path}: missing '{FORMAT_TAG}' header")
    meta = {}
    for tok in text[0][len(FORMAT_TAG):].split():
        key, _, val = tok.partition("=")
        meta[key] = val
    try:
        mesh_meta = (int(meta["n_theta"]), int(meta["n_rho"]))
    except (KeyError, ValueError) as exc:
        raise TableError(f"{path}: bad header {text[0]!r}") from exc
    rows = []
    for k, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise TableError(f"{path}:{k}: expected 5 columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TableError(f"{path}:{k}: {exc}") from exc
    if len(rows) < 2:
        raise TableError(f"{path}: fewer than two entries")
    data = np.array(rows)
    radii = data[:, 0]
    anchor = bool(radii[-1] == CLOG_RADIUS and np.all(data[-1, 1:] == 0.0))
    table = TortuosityTable(radii, data[:, 1:].reshape(-1, 2, 2), mesh_meta, clog_anchor=anchor)
    validate(table)
    if expected_meta is not None and tuple(expected_meta) != mesh_meta:
        warnings.warn(
            f"table built with (n_theta, n_rho)={mesh_meta}, requested {tuple(expected_meta)}",
            MeshMetaMismatch,
            stacklevel=2,
        )
    return table
