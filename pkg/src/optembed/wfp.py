"""Food-basket case study: nutrition data, supply network, simulator.

A month of food aid is planned as a capacitated multi-commodity flow
from source nodes through transshipment points to delivery sites, with
the daily ration per commodity driving both the delivered tonnage and a
set of per-person nutrition floors.  The basket's palatability is an
outcome no formula captures, so it is learned from (simulated) survey
data and embedded as a lower-bounded constraint.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import embedding as emb
from . import pipeline as pl
from .errors import NetworkDisconnected
from .hull import NO_REGION, SINGLE_HULL, PointSet, TrustRegionSpec
from .mio import EQ, GE, INF
from .models import PredictiveModel
from .report_io import write_split_csv
from .training import Dataset, binarize_outcome, select_model, train_forest

GAMMA = 1e6           # grams per metric ton
PALATABILITY_FLOOR = 0.5
FEEDING_DAYS = 30

SALT = "salt"
SUGAR = "sugar"
SALT_GRAMS = 5.0
SUGAR_GRAMS = 20.0
ENERGY = "energy_kcal"


@dataclass
class NutritionTables:
    commodities: list[str]
    nutrients: list[str]
    values: np.ndarray        # commodities x nutrients, per gram as published
    requirements: np.ndarray  # per person per day

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.requirements = np.asarray(self.requirements, dtype=float)
        if self.values.shape != (len(self.commodities), len(self.nutrients)):
            raise ValueError("value matrix shape mismatch")
        if len(self.requirements) != len(self.nutrients):
            raise ValueError("requirement vector length mismatch")
        if np.any(self.values < 0) or np.any(self.requirements < 0):
            raise ValueError("nutrition entries must be nonnegative")


def load_nutrition_tables() -> NutritionTables:
    """Published per-gram contents and per-person-day requirements."""
    pkg = resources.files("optembed") / "data"
    with (pkg / "nutrient_values.csv").open() as fh:
        rows = list(csv.reader(fh))
    nutrients = rows[0][1:]
    commodities = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    with (pkg / "nutrient_requirements.csv").open() as fh:
        req_rows = list(csv.reader(fh))[1:]
    req = {name: float(v) for name, v in req_rows}
    requirements = np.array([req[n] for n in nutrients])
    return NutritionTables(commodities, nutrients, values, requirements)


@dataclass
class SupplyNetwork:
    sources: list[str]
    transships: list[str]
    deliveries: list[str]
    procurement: dict[tuple[str, str], float]       # (source, commodity) $/mt
    transport: dict[tuple[str, str, str], float]    # (from, to, commodity) $/mt
    demand: dict[str, float]                        # beneficiaries per delivery
    days: int = FEEDING_DAYS
    gamma: float = GAMMA

    def arcs(self):
        seen = set()
        for i, j, _ in self.transport:
            if (i, j) not in seen:
                seen.add((i, j))
                yield i, j

    def validate(self, commodities):
        for cost in list(self.procurement.values()) + list(self.transport.values()):
            if cost < 0:
                raise ValueError("negative cost")
        inbound = {}
        for i, j in self.arcs():
            inbound.setdefault(j, []).append(i)
        reachable = set(self.sources)
        frontier = list(self.sources)
        outbound = {}
        for i, j in self.arcs():
            outbound.setdefault(i, []).append(j)
        while frontier:
            node = frontier.pop()
            for nxt in outbound.get(node, ()):
                if nxt not in reachable:
                    reachable.add(nxt)
                    frontier.append(nxt)
        for d in self.deliveries:
            if d not in reachable:
                raise NetworkDisconnected(f"delivery node {d!r} is unreachable")


def default_network(tables: NutritionTables, seed: int = 0) -> SupplyNetwork:
    """Synthetic desk-scale network: 3 sources, 2 transshipment points,
    2 delivery sites, complete stage-wise arcs, seeded costs."""
    rng = np.random.default_rng(seed)
    sources = ["src_a", "src_b", "src_c"]
    transships = ["hub_1", "hub_2"]
    deliveries = ["site_1", "site_2"]
    procurement = {(s, k): float(rng.uniform(250.0, 900.0))
                   for s in sources for k in tables.commodities}
    transport = {}
    for s in sources:
        for h in transships:
            base = rng.uniform(20.0, 80.0)
            for k in tables.commodities:
                transport[(s, h, k)] = float(base + rng.uniform(0.0, 15.0))
    for h in transships:
        for d in deliveries:
            base = rng.uniform(30.0, 120.0)
            for k in tables.commodities:
                transport[(h, d, k)] = float(base + rng.uniform(0.0, 20.0))
    demand = {"site_1": 800.0, "site_2": 1200.0}
    net = SupplyNetwork(sources, transships, deliveries, procurement,
                        transport, demand)
    net.validate(tables.commodities)
    return net


# -- palatability simulator -------------------------------------------

_STAPLES = {"bulgur", "maize", "maize_meal", "rice", "sorghum_millet",
            "wheat", "wheat_flour", "soya_fortified_bulgur_wheat",
            "soya_fortified_maize_meal", "soya_fortified_sorghum_grits",
            "soya_fortified_wheat_flour", "corn_soya_blend",
            "wheat_soya_blend"}
_PROTEINS = {"beans", "cheese", "fish", "meat", "lentils", "chickpeas",
             "dried_skim_milk", "milk"}

# documented surrogate: palatability peaks when roughly half the basket
# is staple, a fifth is protein-rich and a small share is oil, with a
# bonus for variety and a penalty for baskets far from ~520 g/day; the
# raw score is squashed to (0, 1) by a logistic
_IDEAL_TOTAL = 520.0


def _bump(share, mu, width):
    return math.exp(-((share - mu) / width) ** 2)


def ground_truth_palatability(basket, commodities=None) -> float:
    """Deterministic [0,1] acceptability score of a daily basket."""
    if commodities is None:
        commodities = load_nutrition_tables().commodities
    x = np.asarray(basket, dtype=float)
    total = float(np.sum(x))
    staple = sum(v for v, k in zip(x, commodities) if k in _STAPLES)
    protein = sum(v for v, k in zip(x, commodities) if k in _PROTEINS)
    oil = sum(v for v, k in zip(x, commodities) if k == "oil")
    denom = total + 1.0
    s_st, s_pr, s_oil = staple / denom, protein / denom, oil / denom
    diversity = float(np.sum(np.minimum(np.maximum(x, 0.0), 30.0))) / (30.0 * len(x))
    raw = (3.2 * _bump(s_st, 0.55, 0.25)
           + 2.4 * _bump(s_pr, 0.20, 0.12)
           + 1.6 * _bump(s_oil, 0.07, 0.05)
           + 1.2 * diversity
           - 0.004 * abs(total - _IDEAL_TOTAL)
           - 3.6)
    return 1.0 / (1.0 + math.exp(-raw))


def _random_baskets(count, commodities, rng):
    """Varied baskets: random active subsets, gamma-distributed grams,
    salt and sugar pinned at their mandated amounts."""
    K = len(commodities)
    X = np.zeros((count, K))
    salt_i = commodities.index(SALT)
    sugar_i = commodities.index(SUGAR)
    for r in range(count):
        n_active = rng.integers(2, 12)
        active = rng.choice(K, size=n_active, replace=False)
        scale = rng.uniform(20.0, 120.0)
        X[r, active] = rng.gamma(2.0, scale, size=n_active)
    X[:, salt_i] = SALT_GRAMS
    X[:, sugar_i] = SUGAR_GRAMS
    return X


def generate_dataset(count: int = 20000, seed: int = 0,
                     tables: NutritionTables | None = None) -> Dataset:
    """Score random baskets, then stratified-resample toward uniform
    coverage of 10 equal palatability bins."""
    if tables is None:
        tables = load_nutrition_tables()
    rng = np.random.default_rng(seed)
    raw_n = max(3 * count, 300)
    X = _random_baskets(raw_n, tables.commodities, rng)
    scores = np.array([ground_truth_palatability(x, tables.commodities)
                       for x in X])
    bins = np.minimum((scores * 10).astype(int), 9)
    per_bin = count // 10
    chosen = []
    for b in range(10):
        members = np.flatnonzero(bins == b)
        if len(members) == 0:
            continue
        take = rng.choice(members, size=per_bin, replace=len(members) < per_bin)
        chosen.append(take)
    idx = np.concatenate(chosen) if chosen else np.arange(raw_n)
    if len(idx) < count:
        extra = rng.choice(raw_n, size=count - len(idx), replace=True)
        idx = np.concatenate([idx, extra])
    idx = idx[:count]
    idx.sort()
    return Dataset(X[idx], np.zeros((count, 0)),
                   {"palatability": scores[idx]},
                   list(tables.commodities), [])


# -- optimization model -----------------------------------------------


def build_wfp_model(network: SupplyNetwork, tables: NutritionTables,
                    palatability: PredictiveModel | None,
                    t: float = PALATABILITY_FLOOR,
                    trust_region: TrustRegionSpec | None = None,
                    binding: emb.OutcomeBinding | None = None) -> pl.ConceptualProblem:
    """Flow-plus-diet problem with the learned palatability floor.

    Variables are the 25 daily rations (leading, so learned models bind
    to them) followed by one flow per arc and commodity, in metric tons.
    """
    network.validate(tables.commodities)
    comms = tables.commodities
    space = palatability.space if palatability is not None else None
    variables = []
    for j, k in enumerate(comms):
        hi = float(space.x_upper[j]) if space is not None else 1000.0
        variables.append(pl.VarSpec(k, 0.0, max(hi, SUGAR_GRAMS)))
    arcs = list(network.arcs())
    for i, j in arcs:
        for k in comms:
            variables.append(pl.VarSpec(f"F[{i}->{j}][{k}]", 0.0, INF))

    rows = []
    # transshipment balance: inflow equals outflow per node and commodity
    for h in network.transships:
        for k in comms:
            coeffs = {}
            for i, j in arcs:
                if j == h:
                    coeffs[f"F[{i}->{j}][{k}]"] = 1.0
                if i == h:
                    coeffs[f"F[{i}->{j}][{k}]"] = coeffs.get(
                        f"F[{i}->{j}][{k}]", 0.0) - 1.0
            rows.append(pl.KnownRow(coeffs, EQ, 0.0, name=f"balance[{h}][{k}]"))
    # delivered tonnage covers demand: gamma * inflow = d * x_k * days
    for d in network.deliveries:
        for k in comms:
            coeffs = {f"F[{i}->{j}][{k}]": network.gamma
                      for i, j in arcs if j == d}
            coeffs[k] = -network.demand[d] * network.days
            rows.append(pl.KnownRow(coeffs, EQ, 0.0, name=f"demand[{d}][{k}]"))
    # mandated condiment amounts
    rows.append(pl.KnownRow({SALT: 1.0}, EQ, SALT_GRAMS, name="salt_fixed"))
    rows.append(pl.KnownRow({SUGAR: 1.0}, EQ, SUGAR_GRAMS, name="sugar_fixed"))
    # nutrition floors
    for li, nut in enumerate(tables.nutrients):
        coeffs = {k: float(tables.values[ki, li])
                  for ki, k in enumerate(comms) if tables.values[ki, li] != 0.0}
        rows.append(pl.KnownRow(coeffs, GE, float(tables.requirements[li]),
                                name=f"nutrition[{nut}]"))

    objective = {}
    for i, j in arcs:
        for k in comms:
            cost = network.transport[(i, j, k)]
            if i in network.sources:
                cost += network.procurement[(i, k)]
            objective[f"F[{i}->{j}][{k}]"] = cost

    bindings = []
    if palatability is not None:
        if binding is None:
            binding = emb.OutcomeBinding("palatability", emb.ROLE_LOWER, tau=t)
        bindings.append((palatability, binding))
    tr = trust_region if trust_region is not None else TrustRegionSpec()
    return pl.ConceptualProblem(variables, np.zeros(0), rows, objective,
                                bindings, tr)


def check_solution(problem: pl.ConceptualProblem, report: pl.SolveReport,
                   tol: float = 1e-7) -> dict[str, float]:
    """Residuals of every known row at the reported solution."""
    asm = pl.assemble(problem)
    sol = report.solution
    out = {}
    for row in problem.known_rows:
        lhs = sum(c * sol.primal[asm.var_ids[nm]]
                  for nm, c in row.coefficients.items())
        if row.sense == EQ:
            out[row.name] = abs(lhs - row.rhs)
        elif row.sense == GE:
            out[row.name] = max(row.rhs - lhs, 0.0)
        else:
            out[row.name] = max(lhs - row.rhs, 0.0)
    return out


# -- experiments ------------------------------------------------------


def _perturbed(problem, costs):
    return pl.ConceptualProblem(problem.variables, problem.w,
                                problem.known_rows, costs,
                                problem.bindings, problem.trust_region)


class _RepeatSolver:
    """Solves one problem shape under many cost vectors.

    Tree bounds decompose into per-leaf LPs (no big-M work at all); the
    leaf models and their standardized forms are built once, and each new
    cost vector only refreshes objective coefficients.
    """

    def __init__(self, problem: pl.ConceptualProblem, pm: PredictiveModel):
        from .mio import _Standardized, solve_mip
        self.pm = pm
        self.nx = pm.space.n
        self.units = []          # (model, std or None, leaf_prediction)
        self._warm = {}          # unit index -> basis of the last solve
        if pm.kind == "tree":
            tree = pm.model
            binding = problem.bindings[0][1]
            stripped = pl.ConceptualProblem(problem.variables, problem.w,
                                            problem.known_rows, problem.objective,
                                            [], problem.trust_region)
            for leaf in tree.leaves:
                ok = (leaf.prediction <= binding.tau
                      if binding.role == emb.ROLE_UPPER
                      else leaf.prediction >= binding.tau)
                if not ok:
                    continue
                rows = emb._leaf_rows(tree, leaf, problem.w)
                if rows is None:
                    continue
                asm = pl.assemble(stripped)
                for coef_x, rhs in rows:
                    coeffs = {i: c for i, c in zip(asm.x_ids, coef_x)
                              if c != 0.0}
                    from .mio import LE
                    asm.model.add_constraint(coeffs, LE, rhs)
                self.units.append((asm, _Standardized(asm.model),
                                   leaf.prediction))
        else:
            asm = pl.assemble(problem)
            std = _Standardized(asm.model) if not asm.model.binary_ids else None
            self.units.append((asm, std, None))

    def solve(self, costs: dict[str, float]):
        """Returns (status, objective, x, embedded outcome)."""
        from .mio import solve_lp, solve_mip
        best = None
        for ui, (asm, std, leaf_pred) in enumerate(self.units):
            asm.model.set_objective({asm.var_ids[nm]: c
                                     for nm, c in costs.items()})
            if std is not None:
                std.refresh_objective(asm.model)
                sol = solve_lp(asm.model, _std=std,
                               warm=self._warm.get(ui))
                if sol.status == "optimal":
                    self._warm[ui] = sol.warm
            else:
                sol = solve_mip(asm.model)
            if sol.status != "optimal":
                continue
            if best is None or sol.objective < best[1] - 1e-12:
                embedded = leaf_pred
                if leaf_pred is None and asm.embeddings \
                        and asm.embeddings[0].outcome_var is not None:
                    embedded = float(sol.primal[asm.embeddings[0].outcome_var])
                best = (sol.status, sol.objective,
                        np.array(sol.primal[: self.nx]), embedded)
        if best is None:
            return ("infeasible", float("nan"), None, None)
        return best


def run_trust_region_experiment(data: Dataset, model_classes=("linear", "cart"),
                                repetitions: int = 50, seed: int = 0,
                                t: float = PALATABILITY_FLOOR,
                                tables: NutritionTables | None = None,
                                network: SupplyNetwork | None = None,
                                k_folds: int = 5, out_csv=None):
    """Prescription quality per model class, with and without the trust
    region, over perturbed cost vectors."""
    if tables is None:
        tables = load_nutrition_tables()
    if network is None:
        network = default_network(tables, seed=seed)
    space = data.feature_space()
    points = PointSet(data.X)
    tr = TrustRegionSpec(points=points, policy=SINGLE_HULL, scope="x-only")
    rng = np.random.default_rng(seed)
    results = []
    per_run = []
    for cls in model_classes:
        pm, cv = select_model(data, "palatability", candidates=(cls,),
                              k_folds=k_folds, seed=seed, hyper=_HYPER)
        base = build_wfp_model(network, tables, pm, t=t, trust_region=tr)
        box = pl.ConceptualProblem(base.variables, base.w, base.known_rows,
                                   base.objective, base.bindings,
                                   TrustRegionSpec())
        solvers = {"trust-region": _RepeatSolver(base, pm),
                   "box-only": _RepeatSolver(box, pm)}
        errors = {"trust-region": [], "box-only": []}
        times = {"trust-region": [], "box-only": []}
        for rep in range(repetitions):
            costs = pl.sample_costs(base.objective, rng)
            for mode in ("trust-region", "box-only"):
                t0 = time.perf_counter()
                status, objective, x, embedded = solvers[mode].solve(costs)
                secs = time.perf_counter() - t0
                times[mode].append(secs)
                if status == "optimal":
                    truth = ground_truth_palatability(x, tables.commodities)
                    errors[mode].append((embedded - truth) ** 2)
                    per_run.append({"class": cls, "rep": rep, "mode": mode,
                                    "embedded": embedded, "truth": truth,
                                    "seconds": secs, "objective": objective,
                                    "basket": x.tolist()})
        results.append({
            "class": cls,
            "validation_mse": float(min(cv.scores.values())),
            "mse_tr": float(np.mean(errors["trust-region"]))
            if errors["trust-region"] else float("nan"),
            "mse": float(np.mean(errors["box-only"]))
            if errors["box-only"] else float("nan"),
            "time_tr_mean": float(np.mean(times["trust-region"])),
            "time_tr_sd": float(np.std(times["trust-region"])),
            "time_mean": float(np.mean(times["box-only"])),
            "time_sd": float(np.std(times["box-only"])),
            "solved_tr": len(errors["trust-region"]),
            "solved": len(errors["box-only"]),
        })
    if out_csv is not None:
        write_split_csv(results, out_csv,
                        timing_fields=("time_tr_mean", "time_tr_sd",
                                       "time_mean", "time_sd"),
                        key_fields=["class"])
    return results, per_run


# salt and sugar are constant across all baskets, so the plain
# least-squares design is rank deficient; a whisper of ridge fixes it
_HYPER = {"linear": {"ridge": 1e-6}}


def run_clustering_experiment(data: Dataset, k_values=(1, 5, 10, 20),
                              repetitions: int = 5, seed: int = 0,
                              t: float = PALATABILITY_FLOOR,
                              tables: NutritionTables | None = None,
                              network: SupplyNetwork | None = None,
                              model_class: str = "gbm", parallelism: int = 1,
                              hyper: dict | None = None, out_csv=None):
    """Max-across-clusters runtime and optimality gap versus K=1."""
    if tables is None:
        tables = load_nutrition_tables()
    if network is None:
        network = default_network(tables, seed=seed)
    if hyper is None:
        # small ensemble keeps the per-cluster MIOs desk sized
        hyper = dict(_HYPER, gbm={"trees": 4, "max_depth": 2})
    pm, _ = select_model(data, "palatability", candidates=(model_class,),
                         k_folds=3, seed=seed, hyper=hyper)
    tr = TrustRegionSpec(points=PointSet(data.X), policy=SINGLE_HULL,
                         scope="x-only")
    base = build_wfp_model(network, tables, pm, t=t, trust_region=tr)
    from .hull import kmeans
    from .mio import solve_mip

    # the cluster subproblems depend only on K, not on the cost vector, so
    # build them once and re-solve under each perturbed objective
    subproblems = {}
    for K in k_values:
        clustering = kmeans(data.X, int(K), seed=seed)
        asms = []
        for k in range(int(K)):
            members = clustering.members(k)
            sub_tr = TrustRegionSpec(points=PointSet(data.X[members]),
                                     policy=SINGLE_HULL, scope="x-only")
            asms.append(pl.assemble(base, trust_region=sub_tr))
        subproblems[K] = asms

    def run_one(asm, costs):
        asm.model.set_objective({asm.var_ids[nm]: c
                                 for nm, c in costs.items()})
        t0 = time.perf_counter()
        sol = solve_mip(asm.model)
        return sol, time.perf_counter() - t0

    rng = np.random.default_rng(seed)
    rows = []
    for rep in range(repetitions):
        costs = pl.sample_costs(base.objective, rng)
        baseline_obj = None
        for K in k_values:
            t_start = time.perf_counter()
            if parallelism > 1:
                with ThreadPoolExecutor(max_workers=parallelism) as pool:
                    solved = list(pool.map(lambda a: run_one(a, costs),
                                           subproblems[K]))
            else:
                solved = [run_one(a, costs) for a in subproblems[K]]
            total = time.perf_counter() - t_start
            best = None
            for sol, _secs in solved:
                if sol.status != "optimal":
                    continue
                if best is None or sol.objective < best.objective - 1e-12:
                    best = sol
            status = best.status if best is not None else "infeasible"
            obj = best.objective if best is not None else float("nan")
            max_time = max(secs for _sol, secs in solved)
            if K == k_values[0]:
                baseline_obj = obj
            gap = (obj - baseline_obj) / abs(baseline_obj) \
                if baseline_obj else float("nan")
            rows.append({"rep": rep, "K": int(K), "status": status,
                         "objective": obj, "gap": gap,
                         "max_cluster_seconds": max_time,
                         "total_seconds": total})
    summary = []
    for K in k_values:
        sub = [r for r in rows if r["K"] == K and r["status"] == "optimal"]
        gaps = np.array([r["gap"] for r in sub])
        times_k = np.array([r["max_cluster_seconds"] for r in sub])
        boot = np.random.default_rng(seed)
        means = [float(np.mean(boot.choice(gaps, size=len(gaps))))
                 for _ in range(200)] if len(gaps) else [float("nan")]
        summary.append({"K": int(K),
                        "mean_gap": float(np.mean(gaps)) if len(gaps) else float("nan"),
                        "gap_ci_low": float(np.quantile(means, 0.025)),
                        "gap_ci_high": float(np.quantile(means, 0.975)),
                        "mean_max_cluster_seconds": float(np.mean(times_k))
                        if len(times_k) else float("nan")})
    if out_csv is not None:
        write_split_csv(rows, out_csv,
                        timing_fields=("max_cluster_seconds", "total_seconds"))
    return rows, summary


def run_violation_limit_sweep(data: Dataset, alphas=(0.0, 0.25, 0.5, 0.75, 1.0),
                              repetitions: int = 5, seed: int = 0,
                              t: float = PALATABILITY_FLOOR,
                              tables: NutritionTables | None = None,
                              network: SupplyNetwork | None = None,
                              trees: int = 7, max_depth: int = 3,
                              out_csv=None):
    """Cost/palatability tradeoff as the tolerated share of violating
    ensemble members grows."""
    if tables is None:
        tables = load_nutrition_tables()
    if network is None:
        network = default_network(tables, seed=seed)
    space = data.feature_space()
    binarized = binarize_outcome(data, "palatability", tau=t, direction=">=")
    forest = train_forest(binarized, "palatability", trees=trees,
                          max_depth=max_depth, seed=seed, task="classification")
    pm = PredictiveModel("forest", forest, space, "palatability")
    base = build_wfp_model(network, tables, None, t=t)
    rng = np.random.default_rng(seed)
    rows = []
    for rep in range(repetitions):
        costs = pl.sample_costs(base.objective, rng)
        for alpha in alphas:
            binding = emb.OutcomeBinding("palatability", emb.ROLE_LOWER,
                                         tau=0.5, mode=emb.INDICATOR,
                                         alpha=float(alpha))
            prob = pl.ConceptualProblem(base.variables, base.w, base.known_rows,
                                        costs, [(pm, binding)],
                                        TrustRegionSpec())
            t0 = time.perf_counter()
            rep_out = pl.solve(prob)
            secs = time.perf_counter() - t0
            row = {"rep": rep, "alpha": float(alpha),
                   "status": rep_out.solution.status, "seconds": secs}
            if rep_out.solution.status == "optimal":
                x = np.array([rep_out.solution.primal[i] for i in range(space.n)])
                row["cost"] = rep_out.solution.objective
                row["palatability"] = ground_truth_palatability(
                    x, tables.commodities)
            rows.append(row)
    summary = []
    for alpha in alphas:
        sub = [r for r in rows if r["alpha"] == alpha and "cost" in r]
        summary.append({"alpha": float(alpha),
                        "mean_cost": float(np.mean([r["cost"] for r in sub]))
                        if sub else float("nan"),
                        "mean_palatability": float(np.mean(
                            [r["palatability"] for r in sub]))
                        if sub else float("nan"),
                        "solved": len(sub)})
    if out_csv is not None:
        fields = ["rep", "alpha", "status", "seconds", "cost", "palatability"]
        filled = [{k: r.get(k, "") for k in fields} for r in rows]
        write_split_csv(filled, out_csv, timing_fields=("seconds",))
    return rows, summary
