"""Trust-region hulls: membership certificates, k-means, unions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optembed.hull import (PointSet, attach_hull, attach_union_of_hulls,
                           hull_membership, kmeans)
from optembed.mio import MioModel, solve_lp, solve_mip


def test_pointset_validation():
    with pytest.raises(ValueError):
        PointSet(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        PointSet(np.array([[1.0, np.nan]]))


@given(st.integers(min_value=0, max_value=5000))
@settings(max_examples=30, deadline=None)
def test_sample_points_are_members(seed):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1, 1, size=(20, 3))
    ok, lam = hull_membership(Z, Z[seed % 20])
    assert ok
    assert np.allclose(Z.T @ lam, Z[seed % 20], atol=1e-6)
    assert lam.sum() == pytest.approx(1.0, abs=1e-7)


def test_convex_combination_is_member(rng):
    Z = rng.uniform(-1, 1, size=(15, 2))
    w = rng.dirichlet(np.ones(15))
    ok, _ = hull_membership(Z, Z.T @ w)
    assert ok


def test_outside_point_rejected(rng):
    Z = rng.uniform(-1, 1, size=(15, 2))
    ok, residual = hull_membership(Z, np.array([5.0, 5.0]))
    assert not ok
    assert residual > 1.0


def test_attach_hull_restricts_the_box(rng):
    Z = rng.uniform(0.2, 0.8, size=(25, 2))
    mio = MioModel()
    ids = [mio.add_variable(f"x{i}", -10.0, 10.0) for i in range(2)]
    attach_hull(mio, Z, ids)
    mio.set_objective({ids[0]: 1.0})
    sol = solve_lp(mio)
    assert sol.status == "optimal"
    assert sol.primal[ids[0]] == pytest.approx(Z[:, 0].min(), abs=1e-6)


def test_kmeans_deterministic_and_covering(rng):
    Z = rng.normal(size=(100, 3))
    a = kmeans(Z, 4, seed=7)
    b = kmeans(Z, 4, seed=7)
    assert np.array_equal(a.assignment, b.assignment)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.assignment.shape == (100,)
    assert set(np.unique(a.assignment)) == set(range(4))


def test_kmeans_separates_two_blobs(rng):
    Z = np.vstack([rng.normal(-5, 0.1, size=(30, 2)),
                   rng.normal(5, 0.1, size=(30, 2))])
    cl = kmeans(Z, 2, seed=0)
    assert len(set(cl.assignment[:30])) == 1
    assert len(set(cl.assignment[30:])) == 1
    assert cl.assignment[0] != cl.assignment[-1]


def test_union_hull_solution_stays_in_one_cluster(rng):
    Z = np.vstack([rng.uniform(-1.0, -0.5, size=(20, 2)),
                   rng.uniform(0.5, 1.0, size=(20, 2))])
    cl = kmeans(Z, 2, seed=0)
    mio = MioModel()
    ids = [mio.add_variable(f"x{i}", -5.0, 5.0) for i in range(2)]
    attach_union_of_hulls(mio, Z, ids, cl)
    mio.set_objective({ids[0]: 1.0, ids[1]: 1.0})
    sol = solve_mip(mio)
    assert sol.status == "optimal"
    x = np.array([sol.primal[i] for i in ids])
    in_any = any(hull_membership(Z[cl.members(k)], x)[0] for k in range(2))
    assert in_any
    # the union forbids the gap between the blobs
    assert not (-0.4 < x[0] < 0.4)


def test_union_at_least_as_tight_as_single(rng):
    Z = rng.uniform(-1, 1, size=(40, 2))
    cl = kmeans(Z, 3, seed=1)
    obj = {0: 1.0, 1: -0.5}

    single = MioModel()
    ids = [single.add_variable(f"x{i}", -5.0, 5.0) for i in range(2)]
    attach_hull(single, Z, ids)
    single.set_objective(obj)
    s1 = solve_lp(single)

    union = MioModel()
    ids = [union.add_variable(f"x{i}", -5.0, 5.0) for i in range(2)]
    attach_union_of_hulls(union, Z, ids, cl)
    union.set_objective(obj)
    s2 = solve_mip(union)
    assert s2.objective >= s1.objective - 1e-6
