"""End-to-end acceptance gate.

One test per release criterion, numbered for cross reference:

 1. branch-and-bound equals brute force on 200 random instances
 2. embedding fidelity across all eight model classes
 3. per-leaf decomposition equals the monolithic MIP
 4. trust-region soundness (membership certificates, union vs single hull)
 5. column selection: equivalence, vertex selection, scaling direction
 6. food-basket study: trust region improves prescription MSE, mandates hold
 7. clustered solves: nonnegative gaps, shrinking max-cluster time
 8. violation-limit sweep: monotone cost, alpha=1 unconstrained
 9. network trainer gradient check
10. rerun determinism: byte-identical CSVs
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import box_model, make_space, random_dataset, random_mlp
from optembed import embedding as emb
from optembed import pipeline as pl
from optembed import wfp
from optembed.columns import (_full_hull_solve, _random_instance,
                              scalability_experiment,
                              solve_with_column_selection)
from optembed.hull import (SINGLE_HULL, PointSet, TrustRegionSpec,
                           attach_hull, attach_union_of_hulls,
                           hull_membership, kmeans)
from optembed.mio import BINARY, LE, MioModel, solve_lp, solve_mip
from optembed.models import LinearModel, PredictiveModel, predict
from optembed.training import (mlp_loss_and_grad, select_model, train_cart,
                               train_forest, train_gbm)

FIDELITY_TOL = 1e-6
MLP_TOL = 1e-5


# -- 1: MIP exactness -------------------------------------------------


def _random_mip(seed):
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(2, 9))       # <= 8 binaries
    nc = int(rng.integers(1, 7))       # <= 6 continuous
    m = MioModel()
    ids = [m.add_variable(f"b{j}", 0.0, 1.0, BINARY) for j in range(nb)]
    ids += [m.add_variable(f"c{j}", -1.5, 1.5) for j in range(nc)]
    for j in range(int(rng.integers(2, 6))):
        row = rng.normal(size=len(ids))
        m.add_constraint({i: float(v) for i, v in zip(ids, row) if v != 0.0},
                         LE, float(rng.uniform(0.5, 2.5)))
    m.set_objective({i: float(c) for i, c in
                     zip(ids, rng.normal(size=len(ids))) if c != 0.0})
    return m


def _brute_force(m):
    best = None
    bins = m.binary_ids
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        pinned = m.copy()
        for vid, bit in zip(bins, bits):
            pinned.variables[vid].lower = pinned.variables[vid].upper = bit
        sol = solve_lp(pinned)
        if sol.status == "optimal" and (best is None or sol.objective < best):
            best = sol.objective
    return best


def test_01_mip_matches_brute_force_200_instances():
    t0 = time.perf_counter()
    for seed in range(200):
        m = _random_mip(seed)
        sol = solve_mip(m)
        truth = _brute_force(m)
        if truth is None:
            assert sol.status == "infeasible", f"seed {seed}"
        else:
            assert sol.status == "optimal", f"seed {seed}"
            assert abs(sol.objective - truth) <= 1e-6, f"seed {seed}"
    assert time.perf_counter() - t0 < 60.0


# -- 2: embedding fidelity --------------------------------------------


def _fidelity_case(cls, seed):
    """Build one random model of the given class, embed it over the unit
    box, optimize a random objective that includes the outcome, and
    return (embedded outcome, oracle prediction, tolerance) or a
    classifier feasibility verdict."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))

    if cls == "linear":
        model = LinearModel(float(rng.normal()), rng.normal(size=n),
                            np.zeros(0))
        pm = PredictiveModel("linear", model, make_space(n))
        mio, x_ids = box_model(n)
        art = emb.embed_linear(mio, model, x_ids, np.zeros(0))
    elif cls == "svc":
        # nonnegative intercept keeps the box center feasible
        model = LinearModel(abs(float(rng.normal())) + 0.05,
                            rng.normal(size=n), np.zeros(0),
                            task="classification")
        pm = PredictiveModel("linear", model, make_space(n))
        mio, x_ids = box_model(n)
        emb.embed_svc_halfspace(mio, model, x_ids, np.zeros(0))
        art = None
    elif cls in ("tree", "forest", "gbm"):
        data = random_dataset(rng, n=n, rows=60)
        if cls == "tree":
            model = train_cart(data, "y", max_depth=int(rng.integers(2, 5)))
            embedder = emb.embed_tree
        elif cls == "forest":
            model = train_forest(data, "y", trees=3, max_depth=2,
                                 seed=seed)
            embedder = emb.embed_forest_mean
        else:
            model = train_gbm(data, "y", trees=3, max_depth=2)
            embedder = emb.embed_gbm
        pm = PredictiveModel(cls if cls != "tree" else "tree", model,
                             data.feature_space())
        mio, x_ids = box_model(n)
        art = embedder(mio, model, x_ids, np.zeros(0))
    elif cls == "mlp":
        model = random_mlp(rng, n, widths=(4, 3) if seed % 2 else (5,))
        pm = PredictiveModel("mlp", model, make_space(n))
        emb.compute_activation_bounds(model, [-1.0] * n, [1.0] * n,
                                      np.zeros(0))
        mio, x_ids = box_model(n)
        art = emb.embed_mlp(mio, model, x_ids, np.zeros(0))
    elif cls == "mlp_classifier":
        model = random_mlp(rng, n, widths=(4,), output="sigmoid")
        if model.predict(np.zeros(n), np.zeros(0)) < 0.5:
            model.weights[-1] = -model.weights[-1]
            model.biases[-1] = -model.biases[-1]
        pm = PredictiveModel("mlp", model, make_space(n))
        emb.compute_activation_bounds(model, [-1.0] * n, [1.0] * n,
                                      np.zeros(0))
        mio, x_ids = box_model(n)
        emb.embed_mlp_classifier(mio, model, x_ids, np.zeros(0), tau=0.5)
        art = None
    else:  # multiclass argmax
        model = random_mlp(rng, n, widths=(4,), n_out=3, output="argmax")
        pm = PredictiveModel("mlp", model, make_space(n))
        target = int(predict(pm, np.zeros(n)))
        emb.compute_activation_bounds(model, [-1.0] * n, [1.0] * n,
                                      np.zeros(0))
        mio, x_ids = box_model(n)
        emb.embed_multiclass_argmax(mio, model, x_ids, np.zeros(0), target)
        art = None

    obj = {i: float(c) for i, c in zip(x_ids, rng.normal(size=n))}
    if art is not None and art.outcome_var is not None:
        obj[art.outcome_var] = float(rng.choice([-1.0, 1.0]))
    mio.set_objective(obj)
    sol = solve_mip(mio)
    assert sol.status == "optimal", f"{cls} seed {seed}: {sol.status}"
    x = np.array([sol.primal[i] for i in x_ids])
    oracle = predict(pm, x)
    if cls == "svc":
        assert oracle == 1.0, f"svc seed {seed}: boundary class flip"
        return
    if cls == "mlp_classifier":
        assert oracle >= 0.5, f"mlp_classifier seed {seed}: below threshold"
        return
    if cls == "argmax":
        target = int(predict(pm, np.zeros(n)))
        assert int(oracle) == target, f"argmax seed {seed}"
        return
    got = float(sol.primal[art.outcome_var])
    tol = MLP_TOL if cls == "mlp" else FIDELITY_TOL
    assert abs(got - oracle) <= tol, f"{cls} seed {seed}: |{got}-{oracle}|"


FIDELITY_CLASSES = ("linear", "svc", "tree", "forest", "gbm", "mlp",
                    "mlp_classifier", "argmax")


def test_02_embedding_fidelity_eight_classes():
    t0 = time.perf_counter()
    for cls in FIDELITY_CLASSES:
        for seed in range(50):
            _fidelity_case(cls, seed)
    assert time.perf_counter() - t0 < 300.0


# -- 3: per-leaf decomposition ----------------------------------------


def test_03_leaf_decomposition_equals_monolithic(tmp_path):
    for seed in range(30):
        rng = np.random.default_rng(seed)
        data = random_dataset(rng, n=2, rows=80)
        depth = int(rng.integers(2, 7))  # depth <= 6
        tree = train_cart(data, "y", max_depth=depth)
        pm = PredictiveModel("tree", tree, data.feature_space())
        tau = float(np.median([leaf.prediction for leaf in tree.leaves]))
        variables = [pl.VarSpec(nm, float(lo), float(hi)) for nm, lo, hi in
                     zip(pm.space.x_names, pm.space.x_lower,
                         pm.space.x_upper)]
        obj = {nm: float(c) for nm, c in
               zip(pm.space.x_names, rng.normal(size=2))}
        problem = pl.ConceptualProblem(
            variables, np.zeros(0), [], obj,
            [(pm, emb.OutcomeBinding("y", emb.ROLE_UPPER, tau=tau))])
        mono = pl.solve(problem)
        leaves = pl.solve_tree_by_leaves(problem)
        assert mono.solution.status == leaves.solution.status, f"seed {seed}"
        if mono.solution.status == "optimal":
            assert abs(leaves.solution.objective -
                       mono.solution.objective) <= 1e-6, f"seed {seed}"
    # the depth sweep table: leaf count growth with depth, same optima
    rng = np.random.default_rng(99)
    data = random_dataset(rng, n=2, rows=120)
    out = tmp_path / "leaf_depth.csv"
    rows = pl.leaf_count_experiment((2, 3, 4, 5, 6), data, "y", tau=0.0,
                                    out_csv=out)
    assert out.exists()
    for r in rows:
        if r["leaf_status"] == r["mono_status"] == "optimal":
            assert abs(r["leaf_objective"] - r["mono_objective"]) <= 1e-6


# -- 4: trust-region soundness ----------------------------------------


def test_04_trust_region_membership_and_union():
    solves = 0
    for seed in range(25):
        rng = np.random.default_rng(seed)
        Z = rng.uniform(-1, 1, size=(30, 3))
        obj = {i: float(c) for i, c in enumerate(rng.normal(size=3))}

        single = MioModel()
        ids = [single.add_variable(f"x{i}", -5.0, 5.0) for i in range(3)]
        attach_hull(single, Z, ids)
        single.set_objective(obj)
        s1 = solve_lp(single)
        assert s1.status == "optimal"
        x1 = np.array([s1.primal[i] for i in ids])
        ok, _ = hull_membership(Z, x1)
        assert ok, f"seed {seed}: single-hull optimum left the hull"
        solves += 1

        for K in (2, 4):
            union = MioModel()
            ids = [union.add_variable(f"x{i}", -5.0, 5.0) for i in range(3)]
            cl = kmeans(Z, K, seed=seed)
            attach_union_of_hulls(union, Z, ids, cl)
            union.set_objective(obj)
            s2 = solve_mip(union)
            assert s2.status == "optimal"
            x2 = np.array([s2.primal[i] for i in ids])
            member = any(hull_membership(Z[cl.members(k)], x2)[0]
                         for k in range(K))
            assert member, f"seed {seed} K={K}: union optimum outside"
            assert s2.objective >= s1.objective - 1e-6, f"seed {seed} K={K}"
            solves += 1
        if solves >= 100:
            break
    assert solves >= 75  # 25 seeds x 3 solves


# -- 5: column selection ----------------------------------------------


def test_05a_column_selection_equals_full_hull():
    for seed in range(50):
        problem, Z = _random_instance(n=3, k=2, N=250, seed=seed)
        cs, _ = solve_with_column_selection(problem, Z, pool_size=25,
                                            seed=seed)
        full = _full_hull_solve(problem, Z)
        assert cs.status == full.status, f"seed {seed}"
        if full.status == "optimal":
            assert abs(cs.objective - full.objective) <= 1e-6, f"seed {seed}"


def _is_vertex(Z, i):
    others = np.delete(Z, i, axis=0)
    ok, _ = hull_membership(others, Z[i])
    return not ok


def test_05b_priced_columns_are_hull_vertices():
    for seed in range(10):
        problem, Z = _random_instance(n=2, k=2, N=60, seed=seed)
        cs, audit = solve_with_column_selection(problem, Z, pool_size=8,
                                                seed=seed)
        assert cs.status == "optimal"
        priced = [i for batch, o in zip(audit.selected, audit.objectives)
                  if math.isfinite(o) for i in batch]
        for i in priced:
            assert _is_vertex(Z, i), f"seed {seed}: point {i} is interior"


def test_05c_scaling_direction():
    records = scalability_experiment(sample_sizes=(5000, 50000), seeds=(0,))
    by = {(N, mode): secs for N, mode, _s, secs, _o in records}
    assert by[(50000, "column-selection")] < by[(5000, "full")]


# -- shared large instances for the food-basket criteria --------------


@pytest.fixture(scope="module")
def wfp_data_20k():
    return wfp.generate_dataset(20000, seed=0)


@pytest.fixture(scope="module")
def wfp_data_3k():
    return wfp.generate_dataset(3000, seed=0)


# -- 6: trust region improves prescriptions ---------------------------


def test_06_wfp_trust_region_beats_box(wfp_data_20k):
    tables = wfp.load_nutrition_tables()
    salt = tables.commodities.index("salt")
    sugar = tables.commodities.index("sugar")
    energy_col = tables.values[:, tables.nutrients.index("energy_kcal")]
    t0 = time.perf_counter()
    results, per_run = wfp.run_trust_region_experiment(
        wfp_data_20k, model_classes=("linear", "cart"), repetitions=50,
        seed=0)
    elapsed = time.perf_counter() - t0
    for r in results:
        assert r["solved_tr"] > 0 and r["solved"] > 0, r["class"]
        assert r["mse_tr"] <= r["mse"] + 1e-12, \
            f"{r['class']}: trust region did not help ({r['mse_tr']} vs {r['mse']})"
    # ration-side feasibility of every prescription
    for run in per_run:
        x = np.asarray(run["basket"])
        assert abs(x[salt] - wfp.SALT_GRAMS) <= 1e-7
        assert abs(x[sugar] - wfp.SUGAR_GRAMS) <= 1e-7
        assert float(x @ energy_col) >= 2100.0 - 1e-6
        for li, nut in enumerate(tables.nutrients):
            lhs = float(x @ tables.values[:, li])
            assert lhs >= tables.requirements[li] - 1e-7, nut
    # full-system residuals (flow balance and delivery rows included)
    network = wfp.default_network(tables, seed=0)
    for cls in ("linear", "cart"):
        pm, _ = select_model(wfp_data_20k, "palatability", candidates=(cls,),
                             k_folds=5, seed=0, hyper=wfp._HYPER)
        tr = TrustRegionSpec(points=PointSet(wfp_data_20k.X),
                             policy=SINGLE_HULL, scope="x-only")
        prob = wfp.build_wfp_model(network, tables, pm, trust_region=tr)
        report = pl.solve(prob)
        assert report.solution.status == "optimal"
        residuals = wfp.check_solution(prob, report)
        assert max(residuals.values()) <= 1e-7, cls
    assert elapsed < 600.0


# -- 7: clustering shrinks the biggest subproblem ---------------------


def test_07_clustering_gaps_and_times(wfp_data_20k):
    rows, summary = wfp.run_clustering_experiment(
        wfp_data_20k, k_values=(1, 5, 10, 20), repetitions=3, seed=0,
        parallelism=1)
    for row in rows:
        assert row["status"] == "optimal", row
        assert row["gap"] >= -1e-6, row
        if row["K"] == 1:
            assert row["gap"] == 0.0
    by_k = {s["K"]: s for s in summary}
    assert by_k[20]["mean_max_cluster_seconds"] \
        < by_k[1]["mean_max_cluster_seconds"], summary


# -- 8: violation-limit sweep -----------------------------------------


def test_08_violation_sweep_monotone_and_alpha_one_free(wfp_data_3k):
    alphas = (0.0, 0.25, 0.5, 0.75, 1.0)
    reps = 2
    rows, _ = wfp.run_violation_limit_sweep(wfp_data_3k, alphas=alphas,
                                            repetitions=reps, seed=0)
    costs = {(r["rep"], r["alpha"]): r.get("cost") for r in rows}
    for rep in range(reps):
        for lo_a, hi_a in zip(alphas, alphas[1:]):
            a, b = costs[(rep, lo_a)], costs[(rep, hi_a)]
            assert a is not None and b is not None
            assert b <= a + 1e-6, f"rep {rep}: cost rose from {lo_a} to {hi_a}"
    # alpha=1 equals the model with the learned bound removed entirely
    tables = wfp.load_nutrition_tables()
    network = wfp.default_network(tables, seed=0)
    base = wfp.build_wfp_model(network, tables, None)
    rng = np.random.default_rng(0)  # same draw sequence as the sweep
    for rep in range(reps):
        draw = pl.sample_costs(base.objective, rng)
        free = pl.solve(pl.ConceptualProblem(
            base.variables, base.w, base.known_rows, draw, [],
            TrustRegionSpec()))
        assert free.solution.status == "optimal"
        assert abs(costs[(rep, 1.0)] - free.solution.objective) <= 1e-6


# -- 9: trainer gradient check ----------------------------------------


def test_09_mlp_gradient_matches_finite_differences():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        Z = rng.uniform(-1, 1, size=(30, 3))
        output = "linear" if seed % 2 == 0 else "sigmoid"
        y = rng.uniform(size=30) if output == "linear" \
            else rng.integers(0, 2, size=30).astype(float)
        weights = [rng.normal(size=(4, 3)), rng.normal(size=(1, 4))]
        biases = [rng.normal(size=4), rng.normal(size=1)]
        _, gw, gb = mlp_loss_and_grad(weights, biases, Z, y, output)
        flat_grads = [(gw, weights), (gb, biases)]
        checked = 0
        while checked < 10:
            kind = int(rng.integers(0, 2))
            grads, params = flat_grads[kind]
            li = int(rng.integers(0, len(params)))
            idx = tuple(rng.integers(0, s) for s in params[li].shape)
            h = 1e-6
            orig = params[li][idx]
            params[li][idx] = orig + h
            up, _, _ = mlp_loss_and_grad(weights, biases, Z, y, output)
            params[li][idx] = orig - h
            dn, _, _ = mlp_loss_and_grad(weights, biases, Z, y, output)
            params[li][idx] = orig
            numeric = (up - dn) / (2 * h)
            analytic = float(grads[li][idx])
            scale = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / scale <= 1e-4, \
                f"seed {seed} layer {li} index {idx}"
            checked += 1


# -- 10: rerun determinism --------------------------------------------


def test_10_experiment_csvs_byte_identical(tmp_path):
    small = wfp.generate_dataset(300, seed=0)

    def run_all(tag):
        out = tmp_path / tag
        out.mkdir()
        wfp.run_violation_limit_sweep(small, alphas=(0.0, 1.0),
                                      repetitions=1, seed=0,
                                      out_csv=out / "sweep.csv")
        wfp.run_trust_region_experiment(small, model_classes=("linear",),
                                        repetitions=2, seed=0,
                                        out_csv=out / "tr.csv")
        scalability_experiment(n=3, k=2, sample_sizes=(100, 200), seeds=(0,),
                               pool_size=20, out_csv=out / "scale.csv")
        rng = np.random.default_rng(0)
        data = random_dataset(rng, n=2, rows=80)
        pl.leaf_count_experiment((2, 3), data, "y", tau=0.0,
                                 out_csv=out / "leaves.csv")
        return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))
                if not p.stem.endswith("_timings")}

    first = run_all("a")
    second = run_all("b")
    assert set(first) == set(second)
    for name in first:
        assert first[name] == second[name], f"{name} differs between reruns"
