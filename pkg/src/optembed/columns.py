"""Column selection for hull-constrained continuous problems.

Instead of attaching one barycentric weight per training point up front,
the master problem starts from a small random pool and grows it by
reduced-cost pricing: a point ``z`` outside the pool enters when its
column (objective ``c.z``, row coefficients ``a_j.z``, convexity
coefficient 1) prices negative against the master duals.  Linear
objectives and constraints only, so the gradients in the pricing rule
are the constant coefficient vectors.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BinaryVariablesPresent
from .hull import attach_hull
from .mio import EQ, GE, LE, MioModel, MipSolution, solve_lp
from .report_io import write_split_csv

RC_TOLERANCE = 1e-7
DEFAULT_POOL = 100


@dataclass
class PricingState:
    pool: list[int]                      # active indices I', grows only
    duals: np.ndarray | None = None      # master duals, convexity row last
    objective: float = float("inf")
    iteration: int = 0
    tolerance: float = RC_TOLERANCE


@dataclass
class PricingResult:
    index: int
    reduced_cost: float


@dataclass
class SelectionAudit:
    """Per-iteration record of what the pricing step added."""
    selected: list[list[int]] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    pool_sizes: list[int] = field(default_factory=list)


def _problem_rows(problem: MioModel):
    """Objective vector and row system (A, senses, b) of a continuous
    model, with finite variable bounds folded in as extra rows."""
    if problem.binary_ids:
        raise BinaryVariablesPresent(
            "column selection handles all-continuous problems only")
    n = len(problem.variables)
    c = np.zeros(n)
    for vid, coef in problem.objective.items():
        c[vid] += coef
    rows, senses, rhs = [], [], []
    for con in problem.constraints:
        a = np.zeros(n)
        for vid, coef in con.coefficients:
            a[vid] += coef
        rows.append(a)
        senses.append(con.sense)
        rhs.append(con.rhs)
    for vid, v in enumerate(problem.variables):
        e = np.zeros(n)
        e[vid] = 1.0
        if np.isfinite(v.lower):
            rows.append(e)
            senses.append(GE)
            rhs.append(v.lower)
        if np.isfinite(v.upper):
            rows.append(e)
            senses.append(LE)
            rhs.append(v.upper)
    A = np.vstack(rows) if rows else np.zeros((0, n))
    return c, A, senses, np.asarray(rhs, dtype=float)


def _solve_master(c, A, senses, b, Z, pool):
    """LP over barycentric weights restricted to ``pool``; returns the
    solution plus the dual vector ordered (rows..., convexity)."""
    cols_obj = Z[pool] @ c
    cols_rows = A @ Z[pool].T if len(A) else np.zeros((0, len(pool)))
    mio = MioModel()
    lams = [mio.add_variable(f"lam{i}", 0.0, np.inf) for i in pool]
    for j in range(len(A)):
        coeffs = {l: float(v) for l, v in zip(lams, cols_rows[j]) if v != 0.0}
        mio.add_constraint(coeffs, senses[j], float(b[j]))
    mio.add_constraint({l: 1.0 for l in lams}, EQ, 1.0)
    mio.set_objective({l: float(v) for l, v in zip(lams, cols_obj) if v != 0.0})
    return solve_lp(mio)


def _reduced_costs(state: PricingState, Z, c, A):
    """Vectorized column reduced costs c.z - y_rows.(A z) - y_convexity
    for every out-of-pool point; returns (indices, costs)."""
    in_pool = np.zeros(len(Z), dtype=bool)
    in_pool[state.pool] = True
    outside = np.flatnonzero(~in_pool)
    if len(outside) == 0:
        return outside, np.zeros(0)
    y = state.duals
    rc = Z[outside] @ c
    if len(A):
        rc = rc - (Z[outside] @ (A.T @ y[:-1]))
    return outside, rc - y[-1]


def price_candidates(state: PricingState, points, c, A) -> list[PricingResult]:
    """Reduced cost of every out-of-pool point against the current duals,
    sorted ascending (ties by lowest index)."""
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    outside, rc = _reduced_costs(state, Z, c, A)
    order = np.lexsort((outside, rc))
    return [PricingResult(int(outside[i]), float(rc[i])) for i in order]


def solve_with_column_selection(problem: MioModel, points, pool_size: int = DEFAULT_POOL,
                                batch: int = 1, seed: int = 0,
                                tolerance: float = RC_TOLERANCE):
    """Minimize the problem's objective over its rows intersected with the
    convex hull of ``points`` by iterative pricing.

    Returns ``(MipSolution, SelectionAudit)``; the solution's primal is in
    the original variable space (x = sum lam_i z_i).
    """
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    c, A, senses, b = _problem_rows(problem)
    if Z.shape[1] != len(c):
        raise ValueError("point dimension does not match the variable count")
    N = len(Z)
    rng = np.random.default_rng(seed)
    k0 = min(pool_size, N)
    pool = sorted(int(i) for i in rng.choice(N, size=k0, replace=False))
    state = PricingState(pool, tolerance=tolerance)
    audit = SelectionAudit()
    t0 = time.perf_counter()

    while True:
        sol = _solve_master(c, A, senses, b, Z, state.pool)
        state.iteration += 1
        if sol.status != "optimal":
            if len(state.pool) == N:
                return (MipSolution(status=sol.status, node_count=state.iteration,
                                    wall_time=time.perf_counter() - t0), audit)
            # restricted master infeasible: grow the pool blindly until the
            # full set is in (rare; only when I0 misses every feasible mix)
            missing = [i for i in range(N) if i not in set(state.pool)]
            add = missing[: max(batch, 1)]
            state.pool.extend(add)
            audit.selected.append(add)
            audit.objectives.append(float("nan"))
            audit.pool_sizes.append(len(state.pool))
            continue
        state.duals = sol.dual
        state.objective = sol.objective
        outside, rc = _reduced_costs(state, Z, c, A)
        nb = min(max(batch, 1), len(outside))
        if nb and len(outside) > nb:
            part = np.argpartition(rc, nb - 1)[:nb]
            part = part[np.lexsort((outside[part], rc[part]))]
        else:
            part = np.lexsort((outside, rc))
        entering = [int(outside[i]) for i in part[:nb]
                    if rc[i] < -state.tolerance]
        audit.objectives.append(sol.objective)
        audit.pool_sizes.append(len(state.pool))
        if not entering:
            audit.selected.append([])
            lam = sol.primal[: len(state.pool)]
            x = Z[state.pool].T @ lam
            return (MipSolution(status="optimal", primal=x,
                                objective=sol.objective,
                                node_count=state.iteration,
                                wall_time=time.perf_counter() - t0), audit)
        audit.selected.append(entering)
        state.pool.extend(entering)


def _full_hull_solve(problem: MioModel, points):
    """Oracle: the same problem with every point attached to the hull."""
    mio = problem.copy()
    x_ids = list(range(len(mio.variables)))
    attach_hull(mio, points, x_ids)
    return solve_lp(mio)


def _random_instance(n, k, N, seed):
    """Random linear instance: box-sampled points, k known rows that keep a
    healthy share of the sample feasible, and a linear cap on the total."""
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1.0, 1.0, size=(N, n))
    c = rng.normal(size=n)
    A = rng.normal(size=(k, n))
    # right-hand sides at the 70th percentile of row values over the sample
    b = np.quantile(Z @ A.T, 0.7, axis=0)
    cap_row = np.ones(n)
    cap = float(np.quantile(Z @ cap_row, 0.8))
    problem = MioModel()
    for j in range(n):
        problem.add_variable(f"x{j}", -1.5, 1.5)
    for j in range(k):
        problem.add_constraint({i: float(v) for i, v in enumerate(A[j])
                                if v != 0.0}, LE, float(b[j]))
    problem.add_constraint({i: 1.0 for i in range(n)}, LE, cap)
    problem.set_objective({i: float(v) for i, v in enumerate(c) if v != 0.0})
    return problem, Z


def scalability_experiment(n=10, k=5, sample_sizes=(500, 1000, 5000),
                           seeds=(0,), pool_size=DEFAULT_POOL,
                           out_csv=None):
    """Wall time with and without column selection across sample sizes.

    Returns rows of (N, mode, seed, wall_seconds, objective); optionally
    writes them as CSV.
    """
    records = []
    for N in sample_sizes:
        for seed in seeds:
            problem, Z = _random_instance(n, k, int(N), seed)
            t0 = time.perf_counter()
            full = _full_hull_solve(problem, Z)
            t_full = time.perf_counter() - t0
            records.append((int(N), "full", seed, t_full, full.objective))
            t0 = time.perf_counter()
            cs, _ = solve_with_column_selection(problem, Z, pool_size=pool_size,
                                                seed=seed)
            t_cs = time.perf_counter() - t0
            records.append((int(N), "column-selection", seed, t_cs, cs.objective))
    if out_csv is not None:
        rows = [{"N": N, "mode": mode, "seed": seed,
                 "wall_seconds": f"{secs:.6f}", "objective": repr(obj)}
                for N, mode, seed, secs, obj in records]
        write_split_csv(rows, out_csv, timing_fields=("wall_seconds",))
    return records
