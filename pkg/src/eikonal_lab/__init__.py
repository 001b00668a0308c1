"""Eikonal solvers on uniform 3D grids: serial, heap-cell and parallel variants."""
from .grid import (CATALOG, ConfigurationError, GridGeometry, Problem, SolverState, SpeedModel,
                   build_problem, linear_index, neighbor_indices)
from .heap_cell import decompose, solve_hcm
from .local_update import directional_minima, solve_local, update_gridpoint
from .parallel_heap_cell import solve_phcm
from .parallel_sweep import plane_members, solve_dfsm, solve_dlsm
from .serial_solvers import SolveStats, SweepDirection, solve_fmm, solve_fsm, solve_lsm

__all__ = [
    "CATALOG", "ConfigurationError", "GridGeometry", "Problem", "SolverState", "SpeedModel",
    "SolveStats", "SweepDirection", "build_problem", "decompose", "directional_minima",
    "linear_index", "neighbor_indices", "plane_members", "solve_dfsm", "solve_dlsm",
    "solve_fmm", "solve_fsm", "solve_hcm", "solve_local", "solve_lsm", "solve_phcm",
    "update_gridpoint",
]
