"""Asynchronous parallel Heap-Cell Method.

Each worker thread pops cells from its own heap and sweeps them with the GIL
released.  Cells tagged for reprocessing go to the least loaded heap.  Two
locks per cell keep heap moves ("position") and gridpoint sweeps ("compute")
serialized independently of each other.  There is no locking at the gridpoint
level: neighbouring cells may be swept at the same time.
"""
from __future__ import annotations

import threading
import time
from contextlib import contextmanager

import numpy as np

from .grid import INF, ConfigurationError, Problem, SolverState
from .heap_cell import (ASCENDING_FACES, CellHeap, CellSweeper, CellTable, _check_heuristic,
                        cell_candidate, decompose, init_cell_values)
from .local_update import CHANGED, RECOMPUTED
from .serial_solvers import SolveStats


class AtomicCounter:
    def __init__(self, value: int = 0):
        self._value = value
        self._lock = threading.Lock()
        self.increments = 0
        self.decrements = 0

    @property
    def value(self) -> int:
        return self._value

    def increment(self) -> None:
        with self._lock:
            self._value += 1
            self.increments += 1

    def decrement(self) -> None:
        with self._lock:
            self._value -= 1
            self.decrements += 1
            if self._value < 0:
                raise RuntimeError("active cell count went negative")


class WorkerPool:
    """P cell heaps (one per worker) sharing one cell table and an active-cell count.

    ``race_hook(event, cell)``, if set, is called at the windows between an
    unlocked check and the subsequent lock acquisition; tests use it to force
    interleavings.
    """

    def __init__(self, P: int, table: CellTable):
        if P < 1:
            raise ConfigurationError(f"thread count must be >= 1, got {P}")
        self.P = P
        self.table = table
        self.heaps = [CellHeap(table, p) for p in range(P)]
        self.active_cells = AtomicCounter()
        self.race_hook = None

    def _hook(self, event: str, cell: int) -> None:
        if self.race_hook is not None:
            self.race_hook(event, cell)

    def on_heap_count(self) -> int:
        return sum(len(h) for h in self.heaps)

    @contextmanager
    def quiesce(self):
        """Hold every heap lock (in index order) so heap membership cannot change."""
        for h in self.heaps:
            h.lock.acquire()
        try:
            yield self
        finally:
            for h in reversed(self.heaps):
                h.lock.release()

    def check_membership(self) -> None:
        """Stop-the-world consistency check: every cell is on at most one heap."""
        with self.quiesce():
            seen = set()
            for h in self.heaps:
                for cell in h.items:
                    assert cell not in seen, f"cell {cell} on more than one heap"
                    seen.add(cell)
                h.check()
            on = set(np.nonzero(self.table.heap_id >= 0)[0].tolist())
            assert on == seen, "heap_id flags disagree with heap contents"


def set_cell_value(cell: int, candidate: float, pool: WorkerPool) -> bool:
    """Lower ``cell``'s value to ``candidate`` wherever the cell currently lives.

    Retries until the cell's heap membership observed before locking is still
    valid after locking.
    """
    table = pool.table
    plock = table.position_lock[cell]
    while True:
        j = int(table.heap_id[cell])
        pool._hook("set_cell_value", cell)
        if j < 0:
            with plock:
                if table.heap_id[cell] < 0:
                    table.value[cell] = min(candidate, table.value[cell])
                    return True
        else:
            heap = pool.heaps[j]
            with heap.lock:
                with plock:
                    if table.heap_id[cell] == j:
                        table.value[cell] = min(candidate, table.value[cell])
                        heap.resort(cell)
                        return True


def add_cell(cell: int, pool: WorkerPool) -> int | None:
    """Insert ``cell`` into the emptiest heap whose lock is free right now.

    Returns the heap id, or None when another worker already placed the cell.
    """
    P = pool.P
    # sizes are read without locking and may be stale
    j = min(range(P), key=lambda p: pool.heaps[p].size)
    t = 0
    while not pool.heaps[(j + t) % P].lock.acquire(blocking=False):
        t += 1
        if t % P == 0:
            time.sleep(0)
    heap = pool.heaps[(j + t) % P]
    try:
        pool._hook("add_cell", cell)
        with pool.table.position_lock[cell]:
            if pool.table.heap_id[cell] >= 0:
                return None
            heap.push(cell)
            pool.active_cells.increment()
            return heap.heap_id
    finally:
        heap.lock.release()


class ParallelHeapCellSolver:
    def __init__(self, problem: Problem, r: int, P: int, kappa: float = 0.0,
                 heuristic: str = "min_inflow", seed: int = 0):
        self.problem = problem
        self.heuristic = _check_heuristic(heuristic)
        self.dec = decompose(problem.geometry, r)
        if P < 1:
            raise ConfigurationError(f"thread count must be >= 1, got {P}")
        self.P = P
        self.seed = seed
        self.state = SolverState.initial(problem, activate_exit_neighbors=True)
        self.table = CellTable(self.dec.num_cells)
        _, exit_cells = init_cell_values(problem, self.dec, self.table)
        self.pool = WorkerPool(P, self.table)
        for t, c in enumerate(exit_cells):
            self.pool.heaps[t % P].push(c)
        self.pool.active_cells = AtomicCounter(len(exit_cells))
        self.sweeper = CellSweeper(problem, self.state, self.dec, kappa)
        self.counters = np.zeros((P, 2), dtype=np.int64)
        self.sweeps = [0] * P
        self.removals = [0] * P
        self.cell_time = [0.0] * P
        self.errors: list[BaseException] = []

    def _worker(self, p: int) -> None:
        try:
            self._work(p)
        except BaseException as exc:  # surfaced by run()
            self.errors.append(exc)
            self.pool.active_cells._value = 0

    def _work(self, p: int) -> None:
        pool, table, dec = self.pool, self.table, self.dec
        heap = pool.heaps[p]
        reset = self.heuristic == "min_inflow"
        counters = self.counters[p]
        while pool.active_cells.value > 0:
            while heap.size > 0:
                with heap.lock:
                    if not heap.items:
                        break
                    c = heap.peek()
                    with table.position_lock[c]:
                        heap.pop()
                        if reset:
                            table.value[c] = INF
                self.removals[p] += 1
                with table.compute_lock[c]:
                    tc = time.perf_counter()
                    # the kernel clears the preferred flags when done
                    nsw, dn_min, dn_max = self.sweeper.run(c, table.preferred[c], counters)
                    self.cell_time[p] += time.perf_counter() - tc
                self.sweeps[p] += nsw
                for face in ASCENDING_FACES:
                    if not dn_min[face] < INF:
                        continue
                    ck = dec.face_neighbor(c, face)
                    cand = cell_candidate(self.heuristic, dn_min[face], dn_max[face],
                                          self.problem, dec, ck, face)
                    if cand < table.value[ck]:
                        set_cell_value(ck, cand, pool)
                    if table.heap_id[ck] < 0:
                        add_cell(ck, pool)
                    table.mark_preferred(ck, face)
                pool.active_cells.decrement()
            time.sleep(0)

    def run(self) -> tuple[SolverState, SolveStats]:
        t0 = time.perf_counter()
        if self.P == 1:
            self._worker(0)
        else:
            threads = [threading.Thread(target=self._worker, args=(p,), name=f"phcm-{p}")
                       for p in range(self.P)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        wall = time.perf_counter() - t0
        if self.errors:
            raise self.errors[0]
        stats = SolveStats(method="phcm", wall_time=wall, threads=self.P,
                           num_cells=self.dec.num_cells,
                           heap_removal_count=sum(self.removals),
                           cell_sweep_count=sum(self.sweeps),
                           cell_time=sum(self.cell_time),
                           gridpoint_update_count=int(self.counters[:, RECOMPUTED].sum()),
                           value_change_count=int(self.counters[:, CHANGED].sum()),
                           worker_sweeps=list(self.sweeps),
                           worker_removals=list(self.removals))
        stats.sweep_count = stats.cell_sweep_count
        return self.state, stats


def solve_phcm(problem: Problem, r: int, P: int, kappa: float = 0.0,
               heuristic: str = "min_inflow", seed: int = 0) -> tuple[SolverState, SolveStats]:
    """Parallel HCM with ``P`` worker threads; ``seed`` only labels the repetition."""
    return ParallelHeapCellSolver(problem, r, P, kappa, heuristic, seed).run()
