"""Two-scale simulator for colloid transport, deposition and pore clogging."""

__version__ = "0.1.0"

from ._accel import backend_name
from .cell import TortuosityTensor, cell_tortuosity, effective_diffusivity, solve_cell_problem, tortuosity
from .geometry import CellMesh, RadialMap, apply_radial_map, build_cell_mesh
from .macro import BoundaryConfig, GridSpec, MacroState, ModelParams, step_explicit, step_picard
from .scenario import ScenarioConfig, preset_bumps, preset_uniform, run
from .table import TortuosityTable, build_table, interpolate, load_table, save_table
