"""Reference serial solvers: fast marching, fast sweeping and locking sweeping."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .grid import INF, Problem, SolverState
from .local_update import (CHANGED, RECOMPUTED, candidate_kernel, gated_update_kernel,
                           plain_update_kernel)


class SweepDirection(NamedTuple):
    """Per-axis traversal signs; ``index`` gives the canonical (lexicographic) order."""

    s_i: int
    s_j: int
    s_k: int

    @property
    def index(self) -> int:
        return 4 * (self.s_i > 0) + 2 * (self.s_j > 0) + (self.s_k > 0)

    @classmethod
    def from_index(cls, d: int) -> SweepDirection:
        return cls(1 if d & 4 else -1, 1 if d & 2 else -1, 1 if d & 1 else -1)


ALL_DIRECTIONS = tuple(SweepDirection.from_index(d) for d in range(8))


@dataclass
class SolveStats:
    method: str = ""
    sweep_count: int = 0
    gridpoint_update_count: int = 0
    value_change_count: int = 0
    wall_time: float = 0.0
    # heap-cell methods only
    heap_removal_count: int = 0
    cell_sweep_count: int = 0
    num_cells: int = 0
    cell_time: float = 0.0
    threads: int = 1
    worker_sweeps: list[int] = field(default_factory=list)
    worker_removals: list[int] = field(default_factory=list)

    @property
    def avs(self) -> float | None:
        """Average sweeps per cell (total cell sweeps / J)."""
        if not self.num_cells:
            return None
        return self.cell_sweep_count / self.num_cells

    @property
    def overhead_fraction(self) -> float | None:
        if not self.num_cells or self.wall_time <= 0:
            return None
        return max(0.0, 1.0 - self.cell_time / (self.wall_time * self.threads))


@njit(cache=True, nogil=True)
def _axis_range(lo, hi, sign):
    if sign > 0:
        return lo, hi, 1
    return hi - 1, lo - 1, -1


@njit(cache=True, nogil=True)
def sweep_box_kernel(V, active, is_exit, s, n, h, kind, params,
                     lo_i, hi_i, lo_j, hi_j, lo_k, hi_k, d, gated, r,
                     dn_min, dn_max, kappa, counters):
    """One Gauss-Seidel pass over the half-open box; returns the largest decrease."""
    i0, i1, di = _axis_range(lo_i, hi_i, 1 if d & 4 else -1)
    j0, j1, dj = _axis_range(lo_j, hi_j, 1 if d & 2 else -1)
    k0, k1, dk = _axis_range(lo_k, hi_k, 1 if d & 1 else -1)
    sq = s * s
    max_change = 0.0
    for k in range(k0, k1, dk):
        for j in range(j0, j1, dj):
            base = s * j + sq * k
            for i in range(i0, i1, di):
                idx = base + i
                if gated:
                    c = gated_update_kernel(V, active, is_exit, idx, i, j, k, s, n, h, kind,
                                            params, r, dn_min, dn_max, kappa, counters)
                else:
                    c = plain_update_kernel(V, is_exit, idx, i, j, k, s, n, h, kind, params,
                                            counters)
                if c > max_change:
                    max_change = c
    return max_change


def _full_box(problem: Problem):
    s = problem.geometry.side
    return ((0, s), (0, s), (0, s))


def sweep_once(state: SolverState, problem: Problem, direction, region=None,
               gated: bool = False, counters: np.ndarray | None = None) -> tuple[float, bool]:
    """Sweep ``region`` (half-open index box per axis) once in ``direction``."""
    g = problem.geometry
    (li, hi_), (lj, hj), (lk, hk) = region if region is not None else _full_box(problem)
    if not (0 <= li <= hi_ <= g.side and 0 <= lj <= hj <= g.side and 0 <= lk <= hk <= g.side):
        raise ValueError(f"region {region} outside grid")
    d = direction.index if isinstance(direction, SweepDirection) else int(direction)
    if counters is None:
        counters = np.zeros(2, dtype=np.int64)
    before = counters[CHANGED]
    dn_min = np.full(6, INF)
    dn_max = np.full(6, -INF)
    mc = sweep_box_kernel(state.values, state.active, state.is_exit, g.side, g.n, g.h,
                          problem.speed.kind, problem.speed.param_array,
                          li, hi_, lj, hj, lk, hk, d, gated, g.side, dn_min, dn_max, 0.0,
                          counters)
    return float(mc), bool(counters[CHANGED] > before)


def _sweep_until_converged(problem: Problem, state: SolverState, kappa: float, gated: bool,
                           method: str, max_sweeps: int | None) -> SolveStats:
    counters = np.zeros(2, dtype=np.int64)
    stats = SolveStats(method=method)
    t0 = time.perf_counter()
    d = 0
    while True:
        mc, _ = sweep_once(state, problem, d, gated=gated, counters=counters)
        stats.sweep_count += 1
        d = (d + 1) % 8
        if mc <= kappa or (max_sweeps is not None and stats.sweep_count >= max_sweeps):
            break
    stats.wall_time = time.perf_counter() - t0
    stats.gridpoint_update_count = int(counters[RECOMPUTED])
    stats.value_change_count = int(counters[CHANGED])
    return stats


def solve_fsm(problem: Problem, kappa: float = 0.0,
              max_sweeps: int | None = None) -> tuple[SolverState, SolveStats]:
    """Fast sweeping: cycle the 8 orderings until a sweep changes at most ``kappa``."""
    state = SolverState.initial(problem)
    return state, _sweep_until_converged(problem, state, kappa, False, "fsm", max_sweeps)


def solve_lsm(problem: Problem, kappa: float = 0.0,
              max_sweeps: int | None = None) -> tuple[SolverState, SolveStats]:
    """Locking sweeping: fast sweeping restricted to active gridpoints."""
    state = SolverState.initial(problem, activate_exit_neighbors=True)
    return state, _sweep_until_converged(problem, state, kappa, True, "lsm", max_sweeps)


# ---------------------------------------------------------------------------
# fast marching

FAR, CONSIDERED, ACCEPTED = 0, 1, 2


@njit(cache=True, nogil=True)
def _sift_up(heap, pos, key, slot):
    node = heap[slot]
    kv = key[node]
    while slot > 0:
        parent = (slot - 1) >> 1
        pn = heap[parent]
        if key[pn] <= kv:
            break
        heap[slot] = pn
        pos[pn] = slot
        slot = parent
    heap[slot] = node
    pos[node] = slot


@njit(cache=True, nogil=True)
def _sift_down(heap, pos, key, slot, size):
    node = heap[slot]
    kv = key[node]
    while True:
        child = 2 * slot + 1
        if child >= size:
            break
        if child + 1 < size and key[heap[child + 1]] < key[heap[child]]:
            child += 1
        cn = heap[child]
        if key[cn] >= kv:
            break
        heap[slot] = cn
        pos[cn] = slot
        slot = child
    heap[slot] = node
    pos[node] = slot


@njit(cache=True, nogil=True)
def fmm_kernel(V, is_exit, s, n, h, kind, params, order, counters):
    """Dijkstra-like marching; records accepted gridpoints in ``order``.

    Returns the number of accepted (non-exit) gridpoints.
    """
    M = V.shape[0]
    status = np.zeros(M, dtype=np.uint8)
    heap = np.empty(M, dtype=np.int64)
    pos = np.full(M, -1, dtype=np.int64)
    size = 0
    sq = s * s
    for idx in range(M):
        if is_exit[idx]:
            status[idx] = ACCEPTED
    # seed: every exit acts as an accepted point whose neighbors get updated
    seeds = np.nonzero(is_exit)[0]
    accepted = 0
    queue_head = 0
    while True:
        if queue_head < seeds.shape[0]:
            cur = seeds[queue_head]
            queue_head += 1
        else:
            if size == 0:
                break
            cur = heap[0]
            size -= 1
            pos[cur] = -1
            if size > 0:
                heap[0] = heap[size]
                _sift_down(heap, pos, V, 0, size)
            status[cur] = ACCEPTED
            order[accepted] = cur
            accepted += 1
        k = cur // sq
        rem = cur - k * sq
        j = rem // s
        i = rem - j * s
        for face in range(6):
            if face == 0:
                if i == 0:
                    continue
                nb = cur - 1
            elif face == 1:
                if i == n:
                    continue
                nb = cur + 1
            elif face == 2:
                if j == 0:
                    continue
                nb = cur - s
            elif face == 3:
                if j == n:
                    continue
                nb = cur + s
            elif face == 4:
                if k == 0:
                    continue
                nb = cur - sq
            else:
                if k == n:
                    continue
                nb = cur + sq
            if status[nb] == ACCEPTED:
                continue
            nk = nb // sq
            nrem = nb - nk * sq
            nj = nrem // s
            ni = nrem - nj * s
            counters[RECOMPUTED] += 1
            cand = candidate_kernel(V, nb, ni, nj, nk, s, n, h, kind, params)
            if cand < V[nb]:
                V[nb] = cand
                counters[CHANGED] += 1
                if status[nb] == FAR:
                    status[nb] = CONSIDERED
                    heap[size] = nb
                    pos[nb] = size
                    size += 1
                _sift_up(heap, pos, V, pos[nb])
    return accepted


def solve_fmm(problem: Problem, return_order: bool = False):
    """Fast marching with a binary min-heap and per-gridpoint back-pointers.

    With ``return_order`` the acceptance sequence is returned as a third item.
    """
    state = SolverState.initial(problem)
    g = problem.geometry
    counters = np.zeros(2, dtype=np.int64)
    order = np.empty(g.size, dtype=np.int64)
    t0 = time.perf_counter()
    accepted = fmm_kernel(state.values, state.is_exit, g.side, g.n, g.h, problem.speed.kind,
                          problem.speed.param_array, order, counters)
    stats = SolveStats(method="fmm", wall_time=time.perf_counter() - t0,
                       gridpoint_update_count=int(counters[RECOMPUTED]),
                       value_change_count=int(counters[CHANGED]),
                       heap_removal_count=int(accepted))
    if return_order:
        return state, stats, order[:accepted].copy()
    return state, stats
