"""Solver unit tests: LP correctness, duals, branch and bound, warm starts."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optembed.mio import (BINARY, EQ, GE, INF, LE, MioModel, solve_lp,
                          solve_mip)


def _toy_lp():
    """max x + y s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0 (as min -x - y)."""
    m = MioModel()
    x = m.add_variable("x", 0.0, INF)
    y = m.add_variable("y", 0.0, INF)
    m.add_constraint({x: 1.0, y: 2.0}, LE, 4.0)
    m.add_constraint({x: 3.0, y: 1.0}, LE, 6.0)
    m.set_objective({x: -1.0, y: -1.0})
    return m, x, y


def test_lp_known_optimum():
    m, x, y = _toy_lp()
    sol = solve_lp(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-2.8, abs=1e-9)
    assert sol.primal[x] == pytest.approx(1.6, abs=1e-8)
    assert sol.primal[y] == pytest.approx(1.2, abs=1e-8)


def test_lp_duals_satisfy_strong_duality():
    m, _, _ = _toy_lp()
    sol = solve_lp(m)
    b = np.array([4.0, 6.0])
    assert float(sol.dual @ b) == pytest.approx(sol.objective, abs=1e-8)


def test_lp_infeasible_and_unbounded():
    m = MioModel()
    x = m.add_variable("x", 0.0, INF)
    m.add_constraint({x: 1.0}, LE, -1.0)
    assert solve_lp(m).status == "infeasible"

    m2 = MioModel()
    x2 = m2.add_variable("x", 0.0, INF)
    m2.set_objective({x2: -1.0})
    assert solve_lp(m2).status == "unbounded"


def test_lp_equality_rows():
    m = MioModel()
    x = m.add_variable("x", -100.0, INF)
    y = m.add_variable("y", -100.0, INF)
    m.add_constraint({x: 1.0, y: 1.0}, EQ, 3.0)
    m.add_constraint({x: 1.0, y: -1.0}, EQ, 1.0)
    m.set_objective({x: 1.0, y: 1.0})
    sol = solve_lp(m)
    assert sol.status == "optimal"
    assert sol.primal[x] == pytest.approx(2.0, abs=1e-8)
    assert sol.primal[y] == pytest.approx(1.0, abs=1e-8)


def _random_lp(seed, n=5, mrows=4):
    rng = np.random.default_rng(seed)
    m = MioModel()
    ids = [m.add_variable(f"x{j}", -2.0, 2.0) for j in range(n)]
    A = rng.normal(size=(mrows, n))
    # rhs chosen so x=0 is feasible for the inequality rows
    for j in range(mrows):
        m.add_constraint({i: float(v) for i, v in zip(ids, A[j]) if v != 0.0},
                         LE, float(abs(rng.normal()) + 0.1))
    m.set_objective({i: float(c) for i, c in
                     zip(ids, rng.normal(size=n)) if c != 0.0})
    return m


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_lp_duality_gap_property(seed):
    m = _random_lp(seed)
    sol = solve_lp(m)
    assert sol.status == "optimal"
    # reduced costs certify optimality: dual objective equals primal
    b = np.array([c.rhs for c in m.constraints])
    lo = np.array([v.lower for v in m.variables])
    hi = np.array([v.upper for v in m.variables])
    dual_obj = float(sol.dual @ b)
    rc = sol.reduced_costs
    dual_obj += float(np.sum(np.where(rc > 0, rc * lo, rc * hi)))
    assert abs(dual_obj - sol.objective) <= 1e-6 * (1 + abs(sol.objective))


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_lp_respects_bounds_and_rows(seed):
    m = _random_lp(seed)
    sol = solve_lp(m)
    for v in m.variables:
        assert v.lower - 1e-7 <= sol.primal[v.id] <= v.upper + 1e-7
    for con in m.constraints:
        lhs = sum(c * sol.primal[i] for i, c in con.coefficients)
        assert lhs <= con.rhs + 1e-7


def test_lp_deterministic_bitwise():
    m = _random_lp(123)
    a = solve_lp(m)
    b = solve_lp(m)
    assert np.array_equal(a.primal, b.primal)
    assert a.objective == b.objective


def _brute_force(m):
    """Enumerate binary assignments, solve the pinned LP for each."""
    bins = m.binary_ids
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        pinned = m.copy()
        for vid, bit in zip(bins, bits):
            pinned.variables[vid].lower = pinned.variables[vid].upper = bit
        sol = solve_lp(pinned)
        if sol.status != "optimal":
            continue
        if best is None or sol.objective < best - 1e-12:
            best = sol.objective
    return best


def _random_mip(seed, nb=4, nc=3, mrows=4):
    rng = np.random.default_rng(seed)
    m = MioModel()
    ids = []
    for j in range(nb):
        ids.append(m.add_variable(f"b{j}", 0.0, 1.0, BINARY))
    for j in range(nc):
        ids.append(m.add_variable(f"c{j}", -1.5, 1.5))
    A = rng.normal(size=(mrows, len(ids)))
    for j in range(mrows):
        m.add_constraint({i: float(v) for i, v in zip(ids, A[j]) if v != 0.0},
                         LE, float(rng.uniform(0.5, 2.0)))
    m.set_objective({i: float(c) for i, c in
                     zip(ids, rng.normal(size=len(ids))) if c != 0.0})
    return m


@pytest.mark.parametrize("seed", range(25))
def test_mip_matches_brute_force(seed):
    m = _random_mip(seed)
    sol = solve_mip(m)
    truth = _brute_force(m)
    if truth is None:
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(truth, abs=1e-6)


def test_mip_integral_solution():
    m = _random_mip(7)
    sol = solve_mip(m)
    for vid in m.binary_ids:
        assert abs(sol.primal[vid] - round(sol.primal[vid])) <= 1e-6


def test_mip_infeasible():
    m = MioModel()
    b = m.add_variable("b", 0.0, 1.0, BINARY)
    m.add_constraint({b: 1.0}, GE, 0.5)
    m.add_constraint({b: 1.0}, LE, 0.4)
    assert solve_mip(m).status == "infeasible"


def test_warm_start_reoptimizes_after_objective_change():
    m = _random_lp(42)
    first = solve_lp(m)
    rng = np.random.default_rng(7)
    m.set_objective({v.id: float(c) for v, c in
                     zip(m.variables, rng.normal(size=len(m.variables)))})
    warm = solve_lp(m, warm=first.warm)
    cold = solve_lp(m)
    assert warm.status == cold.status == "optimal"
    assert warm.objective == pytest.approx(cold.objective, abs=1e-8)


def test_warm_start_with_tightened_bounds():
    m = _random_mip(3)
    root = m.copy()
    for vid in root.binary_ids:
        root.variables[vid].kind = "continuous"
    relax = solve_lp(root)
    assert relax.status == "optimal"
    vid = m.binary_ids[0]
    lo = [v.lower for v in root.variables]
    hi = [v.upper for v in root.variables]
    lo[vid] = hi[vid] = 1.0
    warm = solve_lp(root, lo_over=np.array(lo), hi_over=np.array(hi),
                    warm=relax.warm)
    cold = solve_lp(root, lo_over=np.array(lo), hi_over=np.array(hi))
    assert warm.status == cold.status
    if cold.status == "optimal":
        assert warm.objective == pytest.approx(cold.objective, abs=1e-8)
