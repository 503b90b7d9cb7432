"""Column selection: pricing, equivalence with the full hull, audits."""

import numpy as np
import pytest

from optembed.columns import (PricingState, _full_hull_solve, _random_instance,
                              price_candidates, _problem_rows,
                              scalability_experiment,
                              solve_with_column_selection)
from optembed.errors import BinaryVariablesPresent
from optembed.hull import hull_membership
from optembed.mio import BINARY, LE, MioModel


@pytest.mark.parametrize("seed", range(8))
def test_matches_full_hull(seed):
    problem, Z = _random_instance(n=4, k=3, N=300, seed=seed)
    cs, audit = solve_with_column_selection(problem, Z, pool_size=30,
                                            seed=seed)
    full = _full_hull_solve(problem, Z)
    assert cs.status == full.status == "optimal"
    assert cs.objective == pytest.approx(full.objective, abs=1e-6)
    assert audit.pool_sizes[-1] <= len(Z)


def test_solution_is_hull_member():
    problem, Z = _random_instance(n=3, k=2, N=200, seed=5)
    cs, _ = solve_with_column_selection(problem, Z, pool_size=20, seed=5)
    assert cs.status == "optimal"
    ok, _ = hull_membership(Z, cs.primal, tol=1e-6)
    assert ok


def test_selected_columns_have_negative_reduced_cost():
    problem, Z = _random_instance(n=3, k=2, N=200, seed=2)
    c, A, senses, b = _problem_rows(problem)
    cs, audit = solve_with_column_selection(problem, Z, pool_size=10, seed=2)
    assert cs.status == "optimal"
    # the audit's final pricing round found nothing to add
    assert audit.selected[-1] == []


def test_pricing_sorted_ascending():
    problem, Z = _random_instance(n=2, k=2, N=50, seed=0)
    c, A, senses, b = _problem_rows(problem)
    state = PricingState(pool=[0, 1, 2],
                         duals=np.zeros(A.shape[0] + 1))
    out = price_candidates(state, Z, c, A)
    costs = [r.reduced_cost for r in out]
    assert costs == sorted(costs)
    assert {r.index for r in out} == set(range(3, 50))


def test_rejects_binary_variables():
    m = MioModel()
    m.add_variable("b", 0.0, 1.0, BINARY)
    m.add_constraint({0: 1.0}, LE, 1.0)
    with pytest.raises(BinaryVariablesPresent):
        solve_with_column_selection(m, np.zeros((3, 1)))


def test_scalability_experiment_writes_split_csv(tmp_path):
    out = tmp_path / "scale.csv"
    records = scalability_experiment(n=3, k=2, sample_sizes=(100, 200),
                                     seeds=(0,), pool_size=20, out_csv=out)
    assert len(records) == 4  # two sizes x two modes
    header = out.read_text().splitlines()[0]
    assert header == "N,mode,seed,objective"
    timing_header = (tmp_path / "scale_timings.csv").read_text().splitlines()[0]
    assert "wall_seconds" in timing_header
