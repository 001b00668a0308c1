import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eikonal_lab.grid import (CATALOG, ConfigurationError, GridGeometry, SolverState, axis_indices,
                              build_problem)
from eikonal_lab.parallel_sweep import (plane_level_order, plane_members, plane_size, solve_dfsm,
                                        solve_dlsm, update_plane)
from eikonal_lab.serial_solvers import (ALL_DIRECTIONS, SweepDirection, solve_fmm, solve_fsm,
                                        solve_lsm, sweep_once)

signs = st.tuples(*[st.sampled_from((-1, 1))] * 3)


def _coords(idxs, g):
    return {axis_indices(i, g) for i in idxs}


def test_plane_corner():
    g = GridGeometry(3)
    assert _coords(plane_members((1, 1, 1), 0, g), g) == {(0, 0, 0)}


def test_plane_first_level():
    g = GridGeometry(3)
    assert _coords(plane_members((1, 1, 1), 1, g), g) == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}


def test_plane_out_of_range():
    g = GridGeometry(3)
    assert plane_members((1, 1, 1), 10, g) == []
    assert plane_members((1, 1, 1), -1, g) == []
    assert len(plane_members((1, 1, 1), 9, g)) == 1


def test_plane_rejects_non_sign_alpha():
    with pytest.raises(ValueError):
        plane_members((2, 1, 1), 0, GridGeometry(3))


@given(signs, st.integers(1, 9))
def test_partition(alpha, n):
    g = GridGeometry(n)
    lo = sum(min(0, a) * n for a in alpha)
    hi = sum(max(0, a) * n for a in alpha)
    members = [i for C in range(lo - 2, hi + 3) for i in plane_members(alpha, C, g)]
    assert len(members) == len(set(members)) == g.size
    assert plane_members(alpha, lo - 1, g) == [] and plane_members(alpha, hi + 1, g) == []


@given(signs, st.integers(1, 9), st.data())
def test_no_axis_neighbours_in_plane(alpha, n, data):
    g = GridGeometry(n)
    C = data.draw(st.integers(-3 * n, 3 * n))
    pts = _coords(plane_members(alpha, C, g), g)
    for (i, j, k) in pts:
        for d in itertools.product((-1, 0, 1), repeat=3):
            if sum(map(abs, d)) == 1:
                assert (i + d[0], j + d[1], k + d[2]) not in pts
        assert alpha[0] * i + alpha[1] * j + alpha[2] * k == C


@given(st.integers(1, 12))
def test_level_order_and_sizes(n):
    g = GridGeometry(n)
    for direction in ALL_DIRECTIONS:
        levels = plane_level_order(direction, g)
        assert len(levels) == 3 * n + 1
        # the first plane holds the direction's start corner
        first = plane_members(direction, levels[0], g)
        corner = tuple(0 if a > 0 else n for a in direction)
        assert _coords(first, g) == {corner}
        for t, C in enumerate(levels):
            assert plane_size(t, n) == len(plane_members(direction, C, g))


def _partial_state(problem, sweeps):
    state, _ = solve_fsm(problem, max_sweeps=sweeps)
    return state


@pytest.mark.parametrize("gated", [False, True])
def test_permutation_invariance_small(gated):
    p = build_problem("sine20", 7)
    base = _partial_state(p, 1)
    base.active[:] = 1
    rng = np.random.default_rng(3)
    direction = SweepDirection(1, 1, 1)
    for C in range(3 * 7 + 1):
        members = plane_members(direction, C, p.geometry)
        ref = base.copy()
        update_plane(ref, p, direction, C, gated=gated)
        for _ in range(5):
            trial = base.copy()
            update_plane(trial, p, direction, C, order=rng.permutation(members), gated=gated)
            assert np.array_equal(trial.values, ref.values)
            assert np.array_equal(trial.active, ref.active)


def test_plane_sweep_reproduces_serial_sweep():
    p = build_problem("checkerboard", 9)
    for d in range(8):
        direction = SweepDirection.from_index(d)
        a = SolverState.initial(p)
        for C in plane_level_order(direction, p.geometry):
            update_plane(a, p, direction, C)
        b = SolverState.initial(p)
        sweep_once(b, p, direction)
        assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("name", CATALOG)
def test_single_thread_identical_to_fsm(name):
    p = build_problem(name, 15)
    a, sa = solve_dfsm(p, 1)
    b, sb = solve_fsm(p)
    assert np.array_equal(a.values, b.values)
    assert sa.sweep_count == sb.sweep_count
    assert sa.gridpoint_update_count == sb.gridpoint_update_count


def test_constant_63_four_threads():
    p = build_problem("constant", 63)
    _, stats = solve_dfsm(p, 4)
    assert stats.sweep_count == 9 == solve_fsm(p)[1].sweep_count


@pytest.mark.parametrize("P", [2, 4, 8])
def test_sine20_matches_fmm(P):
    p = build_problem("sine20", 31)
    ref = solve_fmm(p)[0].values
    for solve in (solve_dfsm, solve_dlsm):
        state, _ = solve(p, P)
        assert np.max(np.abs(state.values - ref)) <= 1e-12


@pytest.mark.parametrize("name", CATALOG)
def test_locking_variant_parity(name):
    p = build_problem(name, 15)
    a, sa = solve_dlsm(p, 3)
    b, sb = solve_lsm(p)
    assert np.array_equal(a.values, b.values)
    assert sa.sweep_count == sb.sweep_count
    assert sa.gridpoint_update_count == sb.gridpoint_update_count


def test_kappa_and_max_sweeps():
    p = build_problem("sine2", 15)
    a, sa = solve_dfsm(p, 2, kappa=1e-3)
    b, sb = solve_fsm(p, kappa=1e-3)
    assert sa.sweep_count == sb.sweep_count and np.array_equal(a.values, b.values)
    _, sc = solve_dfsm(p, 2, max_sweeps=3)
    assert sc.sweep_count == 3


def test_invalid_threads():
    p = build_problem("constant", 7)
    with pytest.raises(ConfigurationError):
        solve_dfsm(p, 0)
    with pytest.raises(ConfigurationError):
        solve_dlsm(p, -1)
