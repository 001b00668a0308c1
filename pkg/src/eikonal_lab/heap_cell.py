"""Serial Heap-Cell Method: a cell-level heap driving locking sweeps inside cells."""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import INF, ConfigurationError, GridGeometry, Problem, SolverState, neighbor_indices
from .local_update import CHANGED, RECOMPUTED, DownwindSet
from .serial_solvers import SolveStats, sweep_box_kernel

HEURISTICS = ("min_inflow", "legacy")

# face -> (axis, sign); the order below lists neighbor cells by ascending id
_FACE_AXIS = (0, 0, 1, 1, 2, 2)
_FACE_SIGN = (-1, 1, -1, 1, -1, 1)
ASCENDING_FACES = (4, 2, 0, 1, 3, 5)
_AXIS_BIT = (4, 2, 1)


@dataclass(frozen=True)
class CellDecomposition:
    geometry: GridGeometry
    r: int

    def __post_init__(self):
        side = self.geometry.side
        if self.r < 1 or side % self.r:
            raise ConfigurationError(
                f"cell size r={self.r} must divide the points per side n+1={side}")

    @property
    def cells_per_side(self) -> int:
        return self.geometry.side // self.r

    @property
    def num_cells(self) -> int:
        return self.cells_per_side ** 3

    @property
    def cell_width(self) -> float:
        """Physical cell side ``r * h``."""
        return self.r * self.geometry.h

    def cell_coords(self, cell: int) -> tuple[int, int, int]:
        c = self.cells_per_side
        return cell % c, (cell // c) % c, cell // (c * c)

    def cell_of(self, idx: int) -> int:
        s, r, c = self.geometry.side, self.r, self.cells_per_side
        k, rem = divmod(idx, s * s)
        j, i = divmod(rem, s)
        return i // r + c * (j // r) + c * c * (k // r)

    def cell_box(self, cell: int) -> tuple[tuple[int, int], ...]:
        r = self.r
        return tuple((a * r, (a + 1) * r) for a in self.cell_coords(cell))

    def face_neighbor(self, cell: int, face: int) -> int:
        """Cell across ``face`` of ``cell``, or -1 at the domain boundary."""
        c = self.cells_per_side
        coords = list(self.cell_coords(cell))
        axis = _FACE_AXIS[face]
        coords[axis] += _FACE_SIGN[face]
        if not 0 <= coords[axis] < c:
            return -1
        a, b, d = coords
        return a + c * b + c * c * d

    def neighbors(self, cell: int) -> list[int]:
        return [nb for f in ASCENDING_FACES if (nb := self.face_neighbor(cell, f)) >= 0]


def decompose(geometry: GridGeometry, r: int) -> CellDecomposition:
    return CellDecomposition(geometry, r)


class CellTable:
    """Per-cell records stored column-wise: value, preferred flags, heap slot, locks."""

    def __init__(self, num_cells: int):
        self.value = np.full(num_cells, INF)
        self.preferred = np.zeros((num_cells, 8), dtype=np.uint8)
        self.heap_id = np.full(num_cells, -1, dtype=np.int64)
        self.heap_pos = np.full(num_cells, -1, dtype=np.int64)
        self.position_lock = [threading.Lock() for _ in range(num_cells)]
        self.compute_lock = [threading.Lock() for _ in range(num_cells)]

    def __len__(self) -> int:
        return self.value.shape[0]

    def on_heap(self, cell: int) -> bool:
        return self.heap_id[cell] >= 0

    def mark_preferred(self, cell: int, face: int) -> None:
        """Flag sweeps of ``cell`` that move away from the face shared with the sender.

        ``face`` is the side of the processed cell on which ``cell`` lies.
        """
        bit = _AXIS_BIT[_FACE_AXIS[face]]
        want = _FACE_SIGN[face] > 0
        row = self.preferred[cell]
        for d in range(8):
            if bool(d & bit) == want:
                row[d] = 1


class CellHeap:
    """Binary min-heap of cell ids keyed by ``table.value`` with tracked positions."""

    def __init__(self, table: CellTable, heap_id: int = 0):
        self.table = table
        self.heap_id = heap_id
        self.items: list[int] = []
        self.lock = threading.Lock()
        # read without the lock by placement heuristics; may be stale
        self.size = 0

    def __len__(self) -> int:
        return len(self.items)

    def _place(self, slot: int, cell: int) -> None:
        self.items[slot] = cell
        self.table.heap_pos[cell] = slot

    def _sift_up(self, slot: int) -> None:
        items, key = self.items, self.table.value
        cell = items[slot]
        kv = key[cell]
        while slot > 0:
            parent = (slot - 1) >> 1
            pc = items[parent]
            if key[pc] <= kv:
                break
            self._place(slot, pc)
            slot = parent
        self._place(slot, cell)

    def _sift_down(self, slot: int) -> None:
        items, key = self.items, self.table.value
        size = len(items)
        cell = items[slot]
        kv = key[cell]
        while True:
            child = 2 * slot + 1
            if child >= size:
                break
            if child + 1 < size and key[items[child + 1]] < key[items[child]]:
                child += 1
            cc = items[child]
            if key[cc] >= kv:
                break
            self._place(slot, cc)
            slot = child
        self._place(slot, cell)

    def push(self, cell: int) -> None:
        if self.table.heap_id[cell] >= 0:
            raise RuntimeError(f"cell {cell} is already on heap {self.table.heap_id[cell]}")
        self.items.append(cell)
        self.table.heap_id[cell] = self.heap_id
        self._sift_up(len(self.items) - 1)
        self.size = len(self.items)

    def peek(self) -> int:
        return self.items[0]

    def pop(self) -> int:
        items = self.items
        top = items[0]
        last = items.pop()
        if items:
            self._place(0, last)
            self._sift_down(0)
        self.table.heap_id[top] = -1
        self.table.heap_pos[top] = -1
        self.size = len(items)
        return top

    def resort(self, cell: int) -> None:
        """Restore heap order after ``cell``'s key decreased."""
        self._sift_up(int(self.table.heap_pos[cell]))

    def check(self) -> None:
        items, key, table = self.items, self.table.value, self.table
        for slot, cell in enumerate(items):
            assert table.heap_id[cell] == self.heap_id and table.heap_pos[cell] == slot
            if slot:
                assert key[items[(slot - 1) >> 1]] <= key[cell]


def init_cell_values(problem: Problem, decomposition: CellDecomposition,
                     table: CellTable | None = None) -> tuple[np.ndarray, list[int]]:
    """Initial cell values and the cells to seed the heap with.

    A cell holding exits gets their minimum value.  An exit on a cell border
    also seeds the cell across that border when the neighbour there is not an
    exit, since that neighbour starts out active; it gets the exit's value as
    if the exit had tagged it downwind.  Other cells start at +inf.
    """
    values = table.value if table is not None else np.full(decomposition.num_cells, INF)
    is_exit = problem.exit_mask()
    seeds = set()
    for idx, q in problem.exit_points:
        c = decomposition.cell_of(idx)
        values[c] = min(values[c], q)
        seeds.add(c)
        for nb in neighbor_indices(idx, problem.geometry):
            if nb is None or is_exit[nb]:
                continue
            cn = decomposition.cell_of(nb)
            if cn != c:
                values[cn] = min(values[cn], q)
                seeds.add(cn)
    return values, sorted(seeds)


@njit(cache=True, nogil=True)
def process_cell_kernel(V, active, is_exit, s, n, h, kind, params, lo_i, lo_j, lo_k, r,
                        prefs, kappa, dn_min, dn_max, counters):
    """Gated sweeps over one cell until a sweep changes at most ``kappa``.

    Flagged directions go first in canonical order, then the canonical cycle.
    Clears ``prefs`` and returns the number of sweeps performed.
    """
    sweeps = 0
    done = False
    for d in range(8):
        if prefs[d]:
            mc = sweep_box_kernel(V, active, is_exit, s, n, h, kind, params,
                                  lo_i, lo_i + r, lo_j, lo_j + r, lo_k, lo_k + r, d, True, r,
                                  dn_min, dn_max, kappa, counters)
            sweeps += 1
            if mc <= kappa:
                done = True
                break
    d = 0
    while not done:
        mc = sweep_box_kernel(V, active, is_exit, s, n, h, kind, params,
                              lo_i, lo_i + r, lo_j, lo_j + r, lo_k, lo_k + r, d, True, r,
                              dn_min, dn_max, kappa, counters)
        sweeps += 1
        d = (d + 1) % 8
        if mc <= kappa:
            done = True
    for d in range(8):
        prefs[d] = 0
    return sweeps


class CellSweeper:
    """Binds a problem, grid state and decomposition for repeated cell processing."""

    def __init__(self, problem: Problem, state: SolverState, decomposition: CellDecomposition,
                 kappa: float = 0.0):
        g = problem.geometry
        self.problem = problem
        self.state = state
        self.dec = decomposition
        self.kappa = float(kappa)
        self._args = (state.values, state.active, state.is_exit, g.side, g.n, g.h,
                      problem.speed.kind, problem.speed.param_array)

    def run(self, cell: int, prefs: np.ndarray, counters: np.ndarray):
        """Process ``cell``; returns (sweeps, dn_min, dn_max) with per-face inflow values."""
        r = self.dec.r
        ci, cj, ck = self.dec.cell_coords(cell)
        dn_min = np.full(6, INF)
        dn_max = np.full(6, -INF)
        sweeps = process_cell_kernel(*self._args, ci * r, cj * r, ck * r, r, prefs, self.kappa,
                                     dn_min, dn_max, counters)
        return sweeps, dn_min, dn_max


def process_cell(state: SolverState, problem: Problem, decomposition: CellDecomposition,
                 cell: int, kappa: float = 0.0, preferred: np.ndarray | None = None,
                 counters: np.ndarray | None = None) -> DownwindSet:
    """Converge one cell with gated sweeps; returns its currently downwind neighbors.

    The returned set carries the number of sweeps as ``dn.sweeps``.
    """
    prefs = preferred if preferred is not None else np.zeros(8, dtype=np.uint8)
    if counters is None:
        counters = np.zeros(2, dtype=np.int64)
    sweeps, dn_min, dn_max = CellSweeper(problem, state, decomposition, kappa).run(
        cell, prefs, counters)
    dn = DownwindSet()
    for face in ASCENDING_FACES:
        if dn_min[face] < INF:
            nb = decomposition.face_neighbor(cell, face)
            dn.inflow_min[nb] = float(dn_min[face])
            dn.inflow_max[nb] = float(dn_max[face])
    dn.sweeps = sweeps
    return dn


def legacy_candidate(v_max: float, problem: Problem, decomposition: CellDecomposition,
                     target: int, face: int) -> float:
    """Older cell value: largest inflow value plus travel time to a point inside the target.

    The point sits on the target's center axis through the shared face, a
    distance ``(cell_width + h) / 2`` beyond that face.
    """
    g = problem.geometry
    h, r = g.h, decomposition.r
    D = 0.5 * (decomposition.cell_width + h)
    coords = decomposition.cell_coords(target)
    point = [(a * r + 0.5 * (r - 1)) * h for a in coords]
    axis = _FACE_AXIS[face]
    if _FACE_SIGN[face] > 0:
        face_pos = (coords[axis] * r - 0.5) * h
        point[axis] = face_pos + D
    else:
        face_pos = ((coords[axis] + 1) * r - 0.5) * h
        point[axis] = face_pos - D
    point = [min(max(p, 0.0), 1.0) for p in point]
    return legacy_cell_value(v_max, decomposition.cell_width, h, problem.speed(*point))


def legacy_cell_value(v_max: float, cell_width: float, h: float, speed: float) -> float:
    """``v_max + D / F`` with ``D = (cell_width + h) / 2``."""
    return v_max + 0.5 * (cell_width + h) / speed


def update_cell_value(current: float, candidate: float) -> float:
    return min(current, candidate)


def cell_candidate(heuristic: str, dn_min: float, dn_max: float, problem: Problem,
                   decomposition: CellDecomposition, target: int, face: int) -> float:
    if heuristic == "min_inflow":
        return dn_min
    return legacy_candidate(dn_max, problem, decomposition, target, face)


def _check_heuristic(heuristic: str) -> str:
    heuristic = heuristic.replace("-", "_")
    if heuristic not in HEURISTICS:
        raise ConfigurationError(f"unknown heuristic {heuristic!r}; use min-inflow or legacy")
    return heuristic


def solve_hcm(problem: Problem, r: int, kappa: float = 0.0, heuristic: str = "min_inflow",
              use_preferred: bool = True) -> tuple[SolverState, SolveStats]:
    heuristic = _check_heuristic(heuristic)
    dec = decompose(problem.geometry, r)
    state = SolverState.initial(problem, activate_exit_neighbors=True)
    table = CellTable(dec.num_cells)
    _, exit_cells = init_cell_values(problem, dec, table)
    heap = CellHeap(table)
    sweeper = CellSweeper(problem, state, dec, kappa)
    counters = np.zeros(2, dtype=np.int64)
    stats = SolveStats(method="hcm", num_cells=dec.num_cells)
    no_prefs = np.zeros(8, dtype=np.uint8)

    t0 = time.perf_counter()
    for c in exit_cells:
        heap.push(c)
    while len(heap):
        c = heap.pop()
        stats.heap_removal_count += 1
        if heuristic == "min_inflow":
            table.value[c] = INF
        tc = time.perf_counter()
        prefs = table.preferred[c] if use_preferred else no_prefs
        sweeps, dn_min, dn_max = sweeper.run(c, prefs, counters)
        stats.cell_time += time.perf_counter() - tc
        stats.cell_sweep_count += sweeps
        for face in ASCENDING_FACES:
            if not dn_min[face] < INF:
                continue
            ck = dec.face_neighbor(c, face)
            cand = cell_candidate(heuristic, dn_min[face], dn_max[face], problem, dec, ck, face)
            table.value[ck] = update_cell_value(table.value[ck], cand)
            if table.on_heap(ck):
                heap.resort(ck)
            else:
                heap.push(ck)
            table.mark_preferred(ck, face)
    stats.wall_time = time.perf_counter() - t0
    stats.gridpoint_update_count = int(counters[RECOMPUTED])
    stats.value_change_count = int(counters[CHANGED])
    stats.sweep_count = stats.cell_sweep_count
    return state, stats
