"""Single-gridpoint upwind update and the active-flag update shared by LSM/HCM.

The compiled kernels here operate on flat arrays so that every solver (serial,
cell based, plane parallel) runs the exact same arithmetic.  They release the
GIL, which lets worker threads run cell sweeps concurrently.

Face codes used throughout: 0 = -x, 1 = +x, 2 = -y, 3 = +y, 4 = -z, 5 = +z.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .grid import INF, Problem, SolverState, axis_indices, speed_at

# counters[] slots shared by all sweep kernels
RECOMPUTED = 0
CHANGED = 1


class DirectionalMinima(NamedTuple):
    m_x: float
    m_y: float
    m_z: float


@dataclass
class DownwindSet:
    """Cells tagged as currently downwind, with the inflow values that tagged them.

    ``inflow_min[c]`` is the smallest newly updated border value seen for ``c``;
    ``inflow_max[c]`` the largest (used by the legacy cell-value heuristic).
    """

    inflow_min: dict[int, float] = field(default_factory=dict)
    inflow_max: dict[int, float] = field(default_factory=dict)
    sweeps: int = 0

    def add(self, cell: int, value: float) -> None:
        self.inflow_min[cell] = min(self.inflow_min.get(cell, INF), value)
        self.inflow_max[cell] = max(self.inflow_max.get(cell, -INF), value)

    def __contains__(self, cell) -> bool:
        return cell in self.inflow_min

    def __iter__(self):
        return iter(sorted(self.inflow_min))

    def __len__(self) -> int:
        return len(self.inflow_min)


@njit(cache=True, nogil=True)
def solve_local_kernel(a, b, c, f, h):
    # sort ascending; infinities end up last
    if a > b:
        a, b = b, a
    if b > c:
        b, c = c, b
    if a > b:
        a, b = b, a
    if a == INF:
        return INF
    count = 1
    if b < INF:
        count = 2
        if c < INF:
            count = 3
    rhs = (h * h) / (f * f)
    m = (a, b, c)
    # grow the upwind set while the current solution strictly exceeds the next minimum;
    # sums are taken relative to the smallest minimum to avoid cancellation
    U = a + h / f
    S = 0.0
    Q = 0.0
    for k in range(2, count + 1):
        nxt = m[k - 1]
        if not U > nxt:
            break
        d = nxt - a
        S += d
        Q += d * d
        disc = S * S - k * (Q - rhs)
        if disc < 0.0:
            break
        U = a + (S + np.sqrt(disc)) / k
        # cancellation in disc can undershoot a minimum the solve used
        if U < nxt:
            U = nxt
    return U


@njit(cache=True, nogil=True)
def minima_kernel(V, idx, i, j, k, s, n):
    mx = INF
    if i > 0:
        mx = V[idx - 1]
    if i < n and V[idx + 1] < mx:
        mx = V[idx + 1]
    my = INF
    if j > 0:
        my = V[idx - s]
    if j < n and V[idx + s] < my:
        my = V[idx + s]
    sq = s * s
    mz = INF
    if k > 0:
        mz = V[idx - sq]
    if k < n and V[idx + sq] < mz:
        mz = V[idx + sq]
    return mx, my, mz


@njit(cache=True, nogil=True)
def candidate_kernel(V, idx, i, j, k, s, n, h, kind, params):
    mx, my, mz = minima_kernel(V, idx, i, j, k, s, n)
    if mx == INF and my == INF and mz == INF:
        return INF
    f = speed_at(kind, params, i * h, j * h, k * h)
    return solve_local_kernel(mx, my, mz, f, h)


@njit(cache=True, nogil=True)
def _activate(V, active, is_exit, nb, value, crosses, face, dn_min, dn_max, tag):
    if is_exit[nb]:
        return
    nv = V[nb]
    if nv < value:
        return
    # ties activate (round-off can still lower nb) but never tag a cell
    active[nb] = 1
    if crosses and tag and nv > value:
        if value < dn_min[face]:
            dn_min[face] = value
        if value > dn_max[face]:
            dn_max[face] = value


@njit(cache=True, nogil=True)
def gated_update_kernel(V, active, is_exit, idx, i, j, k, s, n, h, kind, params,
                        r, dn_min, dn_max, kappa, counters):
    """Active-flag gated update of one gridpoint; returns the value decrease.

    The point is marked inactive *before* its value is recomputed, and the new
    value is stored before any neighbor is activated.  ``r`` is the cell side
    used to decide whether an activated neighbor lies in another cell.
    """
    if active[idx] == 0:
        return 0.0
    active[idx] = 0
    counters[RECOMPUTED] += 1
    cand = candidate_kernel(V, idx, i, j, k, s, n, h, kind, params)
    old = V[idx]
    if not cand < old:
        return 0.0
    V[idx] = cand
    counters[CHANGED] += 1
    change = old - cand
    tag = not change < kappa
    sq = s * s
    if i > 0:
        _activate(V, active, is_exit, idx - 1, cand, i % r == 0, 0, dn_min, dn_max, tag)
    if i < n:
        _activate(V, active, is_exit, idx + 1, cand, (i + 1) % r == 0, 1, dn_min, dn_max, tag)
    if j > 0:
        _activate(V, active, is_exit, idx - s, cand, j % r == 0, 2, dn_min, dn_max, tag)
    if j < n:
        _activate(V, active, is_exit, idx + s, cand, (j + 1) % r == 0, 3, dn_min, dn_max, tag)
    if k > 0:
        _activate(V, active, is_exit, idx - sq, cand, k % r == 0, 4, dn_min, dn_max, tag)
    if k < n:
        _activate(V, active, is_exit, idx + sq, cand, (k + 1) % r == 0, 5, dn_min, dn_max, tag)
    return change


@njit(cache=True, nogil=True)
def plain_update_kernel(V, is_exit, idx, i, j, k, s, n, h, kind, params, counters):
    if is_exit[idx]:
        return 0.0
    counters[RECOMPUTED] += 1
    cand = candidate_kernel(V, idx, i, j, k, s, n, h, kind, params)
    old = V[idx]
    if cand < old:
        V[idx] = cand
        counters[CHANGED] += 1
        return old - cand
    return 0.0


# ---------------------------------------------------------------------------
# Python-level operations


def directional_minima(state: SolverState, idx: int, problem: Problem) -> DirectionalMinima:
    g = problem.geometry
    i, j, k = axis_indices(idx, g)
    return DirectionalMinima(*minima_kernel(state.values, idx, i, j, k, g.side, g.n))


def solve_local(m, f: float, h: float) -> float:
    """Upwind solution of the local quadratic given per-axis minima ``m``."""
    if not (f > 0 and h > 0):
        raise ValueError("speed and spacing must be positive")
    a, b, c = (float(x) for x in m)
    return float(solve_local_kernel(a, b, c, float(f), float(h)))


def update_gridpoint(state: SolverState, idx: int, problem: Problem,
                     decomposition=None, dn: DownwindSet | None = None,
                     kappa: float = 0.0) -> bool:
    """Gated update at ``idx``; cross-cell activations are recorded in ``dn``."""
    if state.is_exit[idx]:
        raise ValueError(f"gridpoint {idx} is an exit point; its value is fixed")
    g = problem.geometry
    i, j, k = axis_indices(idx, g)
    r = decomposition.r if decomposition is not None else g.side
    dn_min = np.full(6, INF)
    dn_max = np.full(6, -INF)
    counters = np.zeros(2, dtype=np.int64)
    change = gated_update_kernel(state.values, state.active, state.is_exit, idx, i, j, k,
                                 g.side, g.n, g.h, problem.speed.kind,
                                 problem.speed.param_array, r, dn_min, dn_max,
                                 float(kappa), counters)
    if decomposition is not None and dn is not None:
        cell = decomposition.cell_of(idx)
        for face in range(6):
            if dn_min[face] < INF:
                nb = decomposition.face_neighbor(cell, face)
                dn.add(nb, dn_min[face])
                dn.inflow_max[nb] = max(dn.inflow_max[nb], dn_max[face])
    return change > 0.0


def residual_field(state: SolverState, problem: Problem) -> np.ndarray:
    """Relative residual of the discrete equation at every gridpoint.

    Entries are ``F^2/h^2 * sum_axes max(U - m_axis, 0)^2 - 1``.  Exit points
    and points whose value is infinite get 0, and infinite points whose
    neighbours are not all infinite get ``inf``.
    """
    g = problem.geometry
    s, h = g.side, g.h
    U = state.values.reshape(s, s, s)
    padded = np.pad(U, 1, constant_values=INF)
    total = np.zeros_like(U)
    any_finite = np.zeros(U.shape, dtype=bool)
    core = (slice(1, -1),) * 3
    for axis in range(3):
        lo = list(core)
        hi = list(core)
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        m = np.minimum(padded[tuple(lo)], padded[tuple(hi)])
        any_finite |= np.isfinite(m)
        with np.errstate(invalid="ignore"):
            diff = np.where(np.isfinite(m), U - m, 0.0)
        total += np.maximum(diff, 0.0) ** 2
    ax = np.arange(s) * h
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    F = problem.speed(x, y, z)
    with np.errstate(invalid="ignore"):
        res = total * (F * F) / (h * h) - 1.0
    res = np.where(np.isfinite(U), res, np.where(any_finite, INF, 0.0))
    res[state.is_exit.reshape(s, s, s).astype(bool)] = 0.0
    return res.reshape(-1)
