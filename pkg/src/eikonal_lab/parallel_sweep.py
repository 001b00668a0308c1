"""Plane-parallel sweeping (DFSM) and its active-flag variant (DLSM).

For a sweep direction with signs ``(s_i, s_j, s_k)`` the gridpoints are
grouped into the planes ``s_i*i + s_j*j + s_k*k = C``.  Axis neighbours always
sit on adjacent planes, so all members of one plane can be updated at once.
Planes are visited from the level nearest the direction's start corner, which
gives every update the same inputs as the serial lexicographic sweep.
"""
from __future__ import annotations

import threading
import time

import numpy as np
from numba import njit

from .grid import INF, ConfigurationError, GridGeometry, Problem, SolverState, linear_index
from .local_update import CHANGED, RECOMPUTED, gated_update_kernel, plain_update_kernel
from .serial_solvers import SolveStats, SweepDirection


def plane_members(alpha, C: int, geometry: GridGeometry) -> list[int]:
    """Gridpoint indices with ``alpha . (i, j, k) == C``, ordered by (k, j)."""
    ai, aj, ak = (int(a) for a in alpha)
    if any(a not in (-1, 1) for a in (ai, aj, ak)):
        raise ValueError(f"alpha must be a sign triple, got {alpha}")
    n = geometry.n
    out = []
    for k in range(n + 1):
        for j in range(n + 1):
            rest = C - aj * j - ak * k
            i = rest * ai
            if 0 <= i <= n:
                out.append(linear_index(i, j, k, geometry))
    return out


@njit(cache=True, nogil=True)
def _plane_block_kernel(V, active, is_exit, s, n, h, kind, params, d, level, start, stop,
                        gated, dn_min, dn_max, counters):
    """Update ordinals [start, stop) of plane ``level`` in transformed coordinates."""
    fi = d & 4
    fj = d & 2
    fk = d & 1
    sq = s * s
    max_change = 0.0
    ordinal = 0
    k_lo = max(0, level - 2 * n)
    k_hi = min(n, level)
    for kt in range(k_lo, k_hi + 1):
        rem = level - kt
        j_lo = max(0, rem - n)
        j_hi = min(n, rem)
        row = j_hi - j_lo + 1
        if ordinal + row <= start:
            ordinal += row
            continue
        if ordinal >= stop:
            break
        for jt in range(j_lo, j_hi + 1):
            if ordinal >= stop:
                break
            if ordinal >= start:
                it = rem - jt
                i = it if fi else n - it
                j = jt if fj else n - jt
                k = kt if fk else n - kt
                idx = i + s * j + sq * k
                if gated:
                    c = gated_update_kernel(V, active, is_exit, idx, i, j, k, s, n, h, kind,
                                            params, s, dn_min, dn_max, 0.0, counters)
                else:
                    c = plain_update_kernel(V, is_exit, idx, i, j, k, s, n, h, kind, params,
                                            counters)
                if c > max_change:
                    max_change = c
            ordinal += 1
    return max_change


@njit(cache=True, nogil=True)
def _update_list_kernel(V, active, is_exit, idxs, s, n, h, kind, params, gated,
                        dn_min, dn_max, counters):
    sq = s * s
    max_change = 0.0
    for p in range(idxs.shape[0]):
        idx = idxs[p]
        k = idx // sq
        j = (idx - k * sq) // s
        i = idx - k * sq - j * s
        if gated:
            c = gated_update_kernel(V, active, is_exit, idx, i, j, k, s, n, h, kind, params,
                                    s, dn_min, dn_max, 0.0, counters)
        else:
            c = plain_update_kernel(V, is_exit, idx, i, j, k, s, n, h, kind, params, counters)
        if c > max_change:
            max_change = c
    return max_change


def plane_size(level: int, n: int) -> int:
    total = 0
    for kt in range(max(0, level - 2 * n), min(n, level) + 1):
        rem = level - kt
        total += min(n, rem) - max(0, rem - n) + 1
    return total


def plane_level_order(direction: SweepDirection, geometry: GridGeometry) -> list[int]:
    """Plane levels ``C`` in visiting order for ``direction`` (alpha = its sign triple)."""
    n = geometry.n
    offset = n * sum(1 for a in direction if a < 0)
    return [t - offset for t in range(3 * n + 1)]


def update_plane(state: SolverState, problem: Problem, direction: SweepDirection, C: int,
                 order=None, gated: bool = False) -> float:
    """Update every member of plane ``C`` serially, in ``order`` if given."""
    g = problem.geometry
    idxs = np.asarray(order if order is not None else plane_members(direction, C, g),
                      dtype=np.int64)
    counters = np.zeros(2, dtype=np.int64)
    return float(_update_list_kernel(state.values, state.active, state.is_exit, idxs, g.side,
                                     g.n, g.h, problem.speed.kind, problem.speed.param_array,
                                     gated, np.full(6, INF), np.full(6, -INF), counters))


class _PlaneSweeper:
    def __init__(self, problem: Problem, P: int, kappa: float, gated: bool,
                 max_sweeps: int | None):
        if P < 1:
            raise ConfigurationError(f"thread count must be >= 1, got {P}")
        g = problem.geometry
        self.problem, self.P, self.kappa, self.gated = problem, P, float(kappa), gated
        self.max_sweeps = max_sweeps
        self.state = SolverState.initial(problem, activate_exit_neighbors=gated)
        self.args = (self.state.values, self.state.active, self.state.is_exit, g.side, g.n, g.h,
                     problem.speed.kind, problem.speed.param_array)
        self.sizes = [plane_size(t, g.n) for t in range(3 * g.n + 1)]
        self.counters = np.zeros((P, 2), dtype=np.int64)
        self.worker_mc = np.zeros(P)
        self.barrier = threading.Barrier(P)
        self.sweeps = 0
        self.errors: list[BaseException] = []

    def _work(self, p: int) -> None:
        P, n = self.P, self.problem.geometry.n
        dn_min, dn_max = np.full(6, INF), np.full(6, -INF)
        counters = self.counters[p]
        d = 0
        sweeps = 0
        while True:
            mc = 0.0
            for level in range(3 * n + 1):
                size = self.sizes[level]
                lo, hi = p * size // P, (p + 1) * size // P
                if hi > lo:
                    c = _plane_block_kernel(*self.args, d, level, lo, hi, self.gated,
                                            dn_min, dn_max, counters)
                    if c > mc:
                        mc = c
                self.barrier.wait()
            self.worker_mc[p] = mc
            self.barrier.wait()
            sweep_max = self.worker_mc.max()
            sweeps += 1
            # everyone must read worker_mc before it is overwritten next sweep
            self.barrier.wait()
            d = (d + 1) % 8
            if sweep_max <= self.kappa or (self.max_sweeps is not None
                                           and sweeps >= self.max_sweeps):
                break
        if p == 0:
            self.sweeps = sweeps

    def _worker(self, p: int) -> None:
        try:
            self._work(p)
        except BaseException as exc:
            self.errors.append(exc)
            self.barrier.abort()

    def run(self, method: str) -> tuple[SolverState, SolveStats]:
        t0 = time.perf_counter()
        if self.P == 1:
            self._worker(0)
        else:
            threads = [threading.Thread(target=self._worker, args=(p,), name=f"{method}-{p}")
                       for p in range(self.P)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        wall = time.perf_counter() - t0
        if self.errors:
            raise next((e for e in self.errors if not isinstance(e, threading.BrokenBarrierError)),
                       self.errors[0])
        stats = SolveStats(method=method, sweep_count=self.sweeps, wall_time=wall,
                           threads=self.P,
                           gridpoint_update_count=int(self.counters[:, RECOMPUTED].sum()),
                           value_change_count=int(self.counters[:, CHANGED].sum()))
        return self.state, stats


def solve_dfsm(problem: Problem, P: int, kappa: float = 0.0, gated: bool = False,
               max_sweeps: int | None = None) -> tuple[SolverState, SolveStats]:
    """Plane-parallel fast sweeping on ``P`` threads; ``gated=True`` gives DLSM."""
    return _PlaneSweeper(problem, P, kappa, gated, max_sweeps).run("dlsm" if gated else "dfsm")


def solve_dlsm(problem: Problem, P: int, kappa: float = 0.0,
               max_sweeps: int | None = None) -> tuple[SolverState, SolveStats]:
    return solve_dfsm(problem, P, kappa, gated=True, max_sweeps=max_sweeps)
