import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from eikonal_lab.grid import (INF, GridGeometry, Problem, SolverState, SpeedModel, build_problem,
                              linear_index)
from eikonal_lab.heap_cell import decompose
from eikonal_lab.local_update import (DownwindSet, directional_minima, residual_field,
                                      solve_local, update_gridpoint)


def eq_residual(U, m, f, h):
    return sum(max(U - a, 0.0) ** 2 for a in m if a < INF) - (h / f) ** 2


def scan_oracle(m, f, h, resolution=1e-9):
    """Zooming grid scan of [m1, m1 + h/f] for the minimum |residual|."""
    lo = min(m)
    hi = lo + h / f
    while True:
        grid = np.linspace(lo, hi, 1001)
        res = np.abs([eq_residual(u, m, f, h) for u in grid])
        best = int(np.argmin(res))
        step = grid[1] - grid[0]
        if step <= resolution:
            return grid[best]
        lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, 1000)]


def _state_with(values: dict, n=3, exits=((0, 0.0),)):
    p = Problem(GridGeometry(n), SpeedModel.constant(), exits)
    s = SolverState.initial(p)
    for idx, v in values.items():
        s.values[idx] = v
    return p, s


def test_minima_isolated():
    p, s = _state_with({}, exits=((63, 0.0),))
    idx = linear_index(1, 1, 1, p.geometry)
    assert directional_minima(s, idx, p) == (INF, INF, INF)


def test_minima_pair():
    g = GridGeometry(3)
    idx = linear_index(1, 1, 1, g)
    p, s = _state_with({idx - 1: 0.2, idx + 1: 0.5}, exits=((63, 0.0),))
    assert directional_minima(s, idx, p) == (0.2, INF, INF)


def test_minima_corner():
    p, s = _state_with({1: 0.1, 4: 0.3, 16: 0.2}, exits=((63, 0.0),))
    assert directional_minima(s, 0, p) == (0.1, 0.3, 0.2)


@pytest.mark.parametrize("m, f, h, expected", [
    ((0.0, INF, INF), 1.0, 0.1, 0.1),
    ((0.0, 0.0, 0.0), 1.0, 1.0, 1 / math.sqrt(3)),
    ((0.3, 0.4, INF), 2.0, 0.1, 0.35),
    ((0.0, 0.0, INF), 1.0, 1.0, math.sqrt(2) / 2),
])
def test_solve_local_examples(m, f, h, expected):
    assert solve_local(m, f, h) == pytest.approx(expected, abs=1e-12)


def test_solve_local_fallback_matches_scan_oracle():
    assert scan_oracle((0.3, 0.4, INF), 2.0, 0.1) == pytest.approx(0.35, abs=2e-9)


def test_solve_local_all_infinite_and_bad_args():
    assert solve_local((INF, INF, INF), 1.0, 0.1) == INF
    with pytest.raises(ValueError):
        solve_local((0, 0, 0), 0.0, 0.1)
    with pytest.raises(ValueError):
        solve_local((0, 0, 0), 1.0, -1)


minimum = st.one_of(st.floats(0, 2, allow_nan=False), st.just(INF))
triple = st.tuples(minimum, minimum, minimum)
speed = st.floats(0.01, 5)
spacing = st.floats(1e-3, 0.5)


@given(triple, speed, spacing)
def test_residual_of_solution(m, f, h):
    assume(min(m) < INF)
    U = solve_local(m, f, h)
    assert U > min(m)
    rel = abs(eq_residual(U, m, f, h)) / (h / f) ** 2
    # no double lies closer to the root than half a spacing of U, which bounds the
    # attainable residual at about spacing(U) * f / h when U is large relative to h/f
    floor = 8 * np.spacing(U) * f / h
    assert rel <= max(1e-12, floor)


@given(triple, st.tuples(*[st.floats(0, 1)] * 3), speed, spacing)
def test_monotone_in_minima(m, bump, f, h):
    assume(min(m) < INF)
    higher = tuple(a + b for a, b in zip(m, bump))
    assert solve_local(higher, f, h) >= solve_local(m, f, h)


@given(triple, speed, spacing)
def test_upwind_consistency(m, f, h):
    assume(min(m) < INF)
    U = solve_local(m, f, h)
    used = [a for a in m if a < U]
    excluded = [a for a in m if a >= U and a < INF]
    assert used and all(U > a for a in used)
    # each excluded minimum is at or above the value of the branch that omits it
    assert all(a >= U for a in excluded)


def test_against_scan_oracle_random():
    rng = np.random.default_rng(3)
    for _ in range(400):
        m = tuple(float(x) if rng.random() > 0.2 else INF for x in rng.uniform(0, 1, 3))
        if min(m) == INF:
            continue
        f, h = float(rng.uniform(0.2, 3)), float(rng.uniform(0.01, 0.3))
        U = solve_local(m, f, h)
        assert U == pytest.approx(scan_oracle(m, f, h), abs=2e-9)


def test_against_bisection_oracle_10k():
    """Vectorized bisection on the monotone residual; same role as the scan oracle."""
    rng = np.random.default_rng(11)
    N = 10_000
    m = rng.uniform(0, 1, (N, 3))
    m[rng.random((N, 3)) < 0.2] = INF
    m[:, 0] = np.where(np.isinf(m).all(axis=1), 0.5, m[:, 0])
    f = rng.uniform(0.2, 3, N)
    h = rng.uniform(0.01, 0.3, N)
    lo = m.min(axis=1)
    hi = lo + h / f
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        g = (np.maximum(mid[:, None] - m, 0) ** 2).sum(axis=1) - (h / f) ** 2
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g < 0, hi, mid)
    got = np.array([solve_local(tuple(m[t]), f[t], h[t]) for t in range(N)])
    assert np.max(np.abs(got - hi)) < 1e-12


def test_update_inactive_does_nothing():
    p, s = _state_with({})
    before = s.values.copy()
    assert update_gridpoint(s, 1, p) is False
    assert np.array_equal(before, s.values, equal_nan=True)


def test_update_active_isolated_point():
    p, s = _state_with({}, exits=((63, 0.0),))
    idx = linear_index(1, 1, 1, p.geometry)
    s.active[idx] = 1
    assert update_gridpoint(s, idx, p) is False
    assert s.active[idx] == 0 and s.values[idx] == INF


def test_update_exit_point_rejected():
    p, s = _state_with({})
    with pytest.raises(ValueError):
        update_gridpoint(s, 0, p)


def test_two_cell_instance_by_hand():
    # n=3, r=2: cell 0 holds i,j,k in {0,1}; cell 1 is its +x neighbor
    g = GridGeometry(3)
    p = Problem(g, SpeedModel.constant(), ((0, 0.0),))
    dec = decompose(g, 2)
    s = SolverState.initial(p, activate_exit_neighbors=True)
    x = linear_index(1, 0, 0, g)
    dn = DownwindSet()
    assert update_gridpoint(s, x, p, dec, dn) is True
    assert s.values[x] == pytest.approx(1 / 3)
    assert s.active[x] == 0
    # same-cell neighbors activated, cross-border neighbor activated and tagged
    assert s.active[linear_index(2, 0, 0, g)] == 1
    assert s.active[linear_index(1, 1, 0, g)] == 1
    assert s.active[linear_index(1, 0, 1, g)] == 1
    assert list(dn) == [1]
    assert dn.inflow_min[1] == pytest.approx(1 / 3)
    assert dec.cell_of(x) not in dn


def test_no_activation_without_strict_decrease():
    g = GridGeometry(3)
    p = Problem(g, SpeedModel.constant(), ((0, 0.0),))
    s = SolverState.initial(p)
    x = linear_index(1, 0, 0, g)
    s.values[x] = 1 / 3
    s.active[x] = 1
    assert update_gridpoint(s, x, p, decompose(g, 2), DownwindSet()) is False
    assert not s.active.any()


def test_downwind_set_container():
    dn = DownwindSet()
    dn.add(5, 0.4)
    dn.add(2, 0.7)
    dn.add(5, 0.3)
    assert list(dn) == [2, 5] and len(dn) == 2 and 5 in dn
    assert dn.inflow_min[5] == 0.3 and dn.inflow_max[5] == 0.4


def test_residual_field_flags_unconverged_state():
    p = build_problem("constant", 7)
    s = SolverState.initial(p)
    res = residual_field(s, p)
    # points touching the exits are infinite but have finite minima
    assert np.isinf(res).any()
    assert np.all(res[s.is_exit.astype(bool)] == 0)
