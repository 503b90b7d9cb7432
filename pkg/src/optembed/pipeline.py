"""End-to-end assembly of prescriptive problems.

A :class:`ConceptualProblem` couples known linear structure (variables,
rows, cost terms) with learned outcome models and an optional data-driven
trust region.  ``assemble`` compiles it into one mixed-integer model;
``solve_clustered`` and ``solve_tree_by_leaves`` are the two
decomposition strategies, and ``evaluate_prescriptions`` measures how
well embedded predictions track a ground-truth oracle at the chosen
solutions.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import embedding as emb
from .errors import NotDecomposable
from .hull import (NO_REGION, SINGLE_HULL, UNION_OF_HULLS, TrustRegionSpec,
                   attach_hull, attach_union_of_hulls, kmeans)
from .mio import (CONTINUOUS, EQ, GE, LE, MioModel, MipSolution, solve_lp,
                  solve_mip)
from .models import PredictiveModel, predict
from .report_io import write_split_csv
from .training import train_cart


@dataclass
class VarSpec:
    name: str
    lower: float
    upper: float
    kind: str = CONTINUOUS


@dataclass
class KnownRow:
    coefficients: dict[str, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class ConceptualProblem:
    """Known structure plus learned outcomes, before compilation.

    ``variables`` must start with the model feature names (in feature
    order); extra decision variables (e.g. network flows) follow.
    """
    variables: list[VarSpec]
    w: np.ndarray
    known_rows: list[KnownRow] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    bindings: list[tuple[PredictiveModel, emb.OutcomeBinding]] = field(default_factory=list)
    trust_region: TrustRegionSpec = field(default_factory=TrustRegionSpec)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        for pm, binding in self.bindings:
            if pm.space.p != len(self.w):
                raise ValueError("binding context length does not match w")
            if names[: pm.space.n] != pm.space.x_names:
                raise ValueError("binding features must lead the variable list")
        has_obj_binding = any(b.role == emb.ROLE_OBJECTIVE for _, b in self.bindings)
        if not self.objective and not has_obj_binding:
            raise ValueError("no objective source")

    @property
    def feature_count(self) -> int:
        if self.bindings:
            return self.bindings[0][0].space.n
        if self.trust_region.points is not None:
            d = self.trust_region.points.dim
            if self.trust_region.scope == "joint":
                d -= len(self.w)
            return d
        return len(self.variables)


@dataclass
class Assembly:
    model: MioModel
    var_ids: dict[str, int]
    x_ids: list[int]
    embeddings: list[emb.EmbeddingArtifacts]
    hull: object | None = None


@dataclass
class SolveReport:
    solution: MipSolution
    outcomes: dict[str, float] = field(default_factory=dict)
    oracle: dict[str, float] = field(default_factory=dict)
    gaps: dict[str, float] = field(default_factory=dict)
    cluster: int | None = None
    timings: dict[str, float] = field(default_factory=dict)


def _region_model(problem: ConceptualProblem, x_ids_count):
    """Standalone hull-over-x model used only for big-M LPs."""
    tr = problem.trust_region
    if tr.policy == NO_REGION or tr.points is None:
        return None, None
    region = MioModel()
    rx = [region.add_variable(problem.variables[j].name,
                              problem.variables[j].lower,
                              problem.variables[j].upper)
          for j in range(x_ids_count)]
    w_fixed = problem.w if tr.scope == "joint" else None
    attach_hull(region, tr.points.Z, rx, w_fixed=w_fixed, name="bigm_hull")
    return region, rx


def assemble(problem: ConceptualProblem,
             trust_region: TrustRegionSpec | None = None) -> Assembly:
    """Compile to a MioModel: known rows first, then each binding's
    embedding (big-Ms tightened by the trust region when one is present),
    then the trust-region rows themselves."""
    tr = problem.trust_region if trust_region is None else trust_region
    mio = MioModel()
    var_ids = {}
    for vs in problem.variables:
        var_ids[vs.name] = mio.add_variable(vs.name, vs.lower, vs.upper, vs.kind)
    nx = problem.feature_count
    x_ids = [var_ids[v.name] for v in problem.variables[:nx]]
    for row in problem.known_rows:
        mio.add_constraint({var_ids[nm]: c for nm, c in row.coefficients.items()},
                           row.sense, row.rhs, name=row.name)
    if problem.objective:
        mio.set_objective({var_ids[nm]: c for nm, c in problem.objective.items()})

    region, rx = _region_model(problem, nx)
    oracle = emb.BigMOracle(mio, x_ids, region=region) if region is not None \
        else emb.BigMOracle(mio, x_ids)

    arts = []
    for bi, (pm, binding) in enumerate(problem.bindings):
        name = f"b{bi}_{binding.outcome}"
        m = pm.model
        if pm.kind == "linear":
            if binding.role == emb.ROLE_CLASSIFIER:
                art = emb.embed_svc_halfspace(mio, m, x_ids, problem.w)
            else:
                art = emb.embed_linear(mio, m, x_ids, problem.w)
        elif pm.kind == "tree":
            art = emb.embed_tree(mio, m, x_ids, problem.w, oracle, name=name)
        elif pm.kind == "forest":
            if binding.mode == emb.INDICATOR and binding.role in (
                    emb.ROLE_UPPER, emb.ROLE_LOWER):
                direction = "<=" if binding.role == emb.ROLE_UPPER else ">="
                art = emb.embed_forest_violation(
                    mio, m, x_ids, problem.w, tau=binding.tau,
                    alpha=binding.alpha, direction=direction,
                    oracle=oracle, name=name)
            else:
                art = emb.embed_forest_mean(mio, m, x_ids, problem.w, oracle,
                                            name=name)
        elif pm.kind == "gbm":
            art = emb.embed_gbm(mio, m, x_ids, problem.w, oracle, name=name)
        elif pm.kind == "mlp":
            if m.act_lower is None:
                emb.compute_activation_bounds(
                    m, [mio.variables[i].lower for i in x_ids],
                    [mio.variables[i].upper for i in x_ids], problem.w)
            if m.output == "sigmoid" and binding.role == emb.ROLE_CLASSIFIER:
                art = emb.embed_mlp_classifier(mio, m, x_ids, problem.w,
                                               binding.tau, name=name)
            else:
                art = emb.embed_mlp(mio, m, x_ids, problem.w, name=name)
        else:
            raise ValueError(f"cannot embed model kind {pm.kind!r}")
        # half-space embeddings and the forest violation limit enforce
        # their threshold directly; everything else binds through y
        quorum = pm.kind == "forest" and binding.mode == emb.INDICATOR \
            and binding.role in (emb.ROLE_UPPER, emb.ROLE_LOWER)
        if art.outcome_var is not None and not quorum:
            emb.bind_outcome(mio, art, binding)
        arts.append(art)

    hull_art = None
    if tr.policy != NO_REGION and tr.points is not None:
        w_fixed = problem.w if tr.scope == "joint" else None
        if tr.policy == SINGLE_HULL:
            hull_art = attach_hull(mio, tr.points.Z, x_ids, w_fixed=w_fixed)
        elif tr.policy == UNION_OF_HULLS:
            clustering = kmeans(tr.points.Z, tr.clusters, seed=tr.seed)
            hull_art = attach_union_of_hulls(mio, tr.points.Z, x_ids, clustering,
                                             w_fixed=w_fixed)
        else:
            raise ValueError(f"unknown trust-region policy {tr.policy!r}")
    return Assembly(mio, var_ids, x_ids, arts, hull_art)


def _report(problem: ConceptualProblem, asm: Assembly,
            sol: MipSolution) -> SolveReport:
    report = SolveReport(sol)
    if sol.status not in ("optimal", "time_limit"):
        return report
    xstar = np.array([sol.primal[i] for i in asm.x_ids])
    for (pm, binding), art in zip(problem.bindings, asm.embeddings):
        want = predict(pm, xstar, problem.w)
        report.oracle[binding.outcome] = want
        if art.outcome_var is not None:
            got = float(sol.primal[art.outcome_var])
            report.outcomes[binding.outcome] = got
            report.gaps[binding.outcome] = abs(got - want)
    return report


def solve(problem: ConceptualProblem, **mip_kwargs) -> SolveReport:
    """Assemble and solve in one step."""
    t0 = time.perf_counter()
    asm = assemble(problem)
    t1 = time.perf_counter()
    sol = solve_mip(asm.model, **mip_kwargs)
    report = _report(problem, asm, sol)
    report.timings = {"assemble": t1 - t0, "solve": time.perf_counter() - t1}
    return report


def solve_clustered(problem: ConceptualProblem, K: int, seed: int = 0,
                    parallelism: int = 1, **mip_kwargs) -> SolveReport:
    """One single-hull subproblem per k-means cluster of the trust-region
    points; the best (lowest objective, ties by lowest cluster index)
    feasible cluster wins."""
    tr = problem.trust_region
    if tr.points is None:
        raise ValueError("clustered solve needs trust-region points")
    clustering = kmeans(tr.points.Z, K, seed=seed)

    def run(k):
        members = clustering.members(k)
        sub_tr = TrustRegionSpec(points=type(tr.points)(tr.points.Z[members]),
                                 policy=SINGLE_HULL, scope=tr.scope)
        t0 = time.perf_counter()
        asm = assemble(problem, trust_region=sub_tr)
        sol = solve_mip(asm.model, **mip_kwargs)
        return k, asm, sol, time.perf_counter() - t0

    t_start = time.perf_counter()
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, range(K)))
    else:
        results = [run(k) for k in range(K)]
    results.sort(key=lambda r: r[0])

    best = None
    times = {}
    for k, asm, sol, secs in results:
        times[f"cluster_{k}"] = secs
        if sol.status != "optimal":
            continue
        if best is None or sol.objective < best[2].objective - 1e-12:
            best = (k, asm, sol)
    if best is None:
        report = SolveReport(MipSolution(status="infeasible"))
        report.timings = dict(times, total=time.perf_counter() - t_start)
        return report
    k, asm, sol = best
    report = _report(problem, asm, sol)
    report.cluster = k
    report.timings = dict(times, total=time.perf_counter() - t_start,
                          max_cluster=max(times.values()))
    return report


def solve_tree_by_leaves(problem: ConceptualProblem,
                         parallelism: int = 1) -> SolveReport:
    """Replace the single tree-bound MIP by one LP per admissible leaf.

    Requires exactly one binding, a tree model used as an upper or lower
    bound, and no binary decision variables.
    """
    if len(problem.bindings) != 1:
        raise NotDecomposable("need exactly one learned constraint")
    pm, binding = problem.bindings[0]
    if pm.kind != "tree":
        raise NotDecomposable("per-leaf decomposition applies to a single tree")
    if binding.role not in (emb.ROLE_UPPER, emb.ROLE_LOWER):
        raise NotDecomposable("tree must act as an outcome bound")
    if any(v.kind != CONTINUOUS for v in problem.variables):
        raise NotDecomposable("decision variables must be continuous")
    tree = pm.model
    admissible = []
    for li, leaf in enumerate(tree.leaves):
        ok = (leaf.prediction <= binding.tau if binding.role == emb.ROLE_UPPER
              else leaf.prediction >= binding.tau)
        if ok:
            rows = emb._leaf_rows(tree, leaf, problem.w)
            if rows is not None:
                admissible.append((li, rows))

    def run(item):
        li, rows = item
        stripped = ConceptualProblem(problem.variables, problem.w,
                                     problem.known_rows, problem.objective,
                                     [], problem.trust_region)
        asm = assemble(stripped)
        for coef_x, rhs in rows:
            coeffs = {i: c for i, c in zip(asm.x_ids, coef_x) if c != 0.0}
            asm.model.add_constraint(coeffs, LE, rhs, name=f"leaf{li}_path")
        return li, solve_lp(asm.model)

    t0 = time.perf_counter()
    if parallelism > 1 and admissible:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, admissible))
    else:
        results = [run(item) for item in admissible]

    best = None
    for li, sol in sorted(results, key=lambda r: r[0]):
        if sol.status != "optimal":
            continue
        if best is None or sol.objective < best[1].objective - 1e-12:
            best = (li, sol)
    if best is None:
        report = SolveReport(MipSolution(status="infeasible"))
        report.timings = {"total": time.perf_counter() - t0,
                          "leaf_count": float(len(admissible))}
        return report
    li, lp = best
    mipsol = MipSolution(status="optimal", primal=lp.primal,
                         objective=lp.objective, node_count=len(admissible),
                         wall_time=time.perf_counter() - t0)
    nx = pm.space.n
    xstar = lp.primal[:nx]
    report = SolveReport(mipsol)
    report.outcomes[binding.outcome] = tree.leaves[li].prediction
    report.oracle[binding.outcome] = predict(pm, xstar, problem.w)
    report.gaps[binding.outcome] = abs(report.outcomes[binding.outcome] -
                                       report.oracle[binding.outcome])
    report.cluster = li
    report.timings = {"total": time.perf_counter() - t0,
                      "leaf_count": float(len(admissible))}
    return report


def leaf_count_experiment(depths, data, outcome: str, tau: float,
                          objective: dict[str, float] | None = None,
                          out_csv=None):
    """Train one tree per max depth, solve the bound problem both per-leaf
    and monolithically, record leaf counts and wall times."""
    space = data.feature_space()
    variables = [VarSpec(nm, float(lo), float(hi)) for nm, lo, hi in
                 zip(space.x_names, space.x_lower, space.x_upper)]
    w = (space.w_lower + space.w_upper) / 2.0 if space.p else np.zeros(0)
    if objective is None:
        objective = {nm: 1.0 for nm in space.x_names}
    rows = []
    for depth in depths:
        tree = train_cart(data, outcome, max_depth=int(depth))
        pm = PredictiveModel("tree", tree, space, outcome)
        binding = emb.OutcomeBinding(outcome, emb.ROLE_UPPER, tau=tau)
        problem = ConceptualProblem(variables, w, [], dict(objective),
                                    [(pm, binding)])
        t0 = time.perf_counter()
        leaf_rep = solve_tree_by_leaves(problem)
        t_leaf = time.perf_counter() - t0
        t0 = time.perf_counter()
        mono_rep = solve(problem)
        t_mono = time.perf_counter() - t0
        rows.append({
            "max_depth": int(depth),
            "feasible_leaves": int(leaf_rep.timings.get("leaf_count", 0)),
            "leaf_status": leaf_rep.solution.status,
            "mono_status": mono_rep.solution.status,
            "leaf_objective": leaf_rep.solution.objective,
            "mono_objective": mono_rep.solution.objective,
            "leaf_seconds": t_leaf,
            "mono_seconds": t_mono,
        })
    if out_csv is not None:
        write_split_csv(rows, out_csv,
                        timing_fields=("leaf_seconds", "mono_seconds"))
    return rows


def sample_costs(baseline: dict[str, float], rng) -> dict[str, float]:
    """Component-wise uniform perturbation over [0.5, 1.5] x baseline."""
    return {nm: c * rng.uniform(0.5, 1.5) for nm, c in baseline.items()}


def evaluate_prescriptions(problem: ConceptualProblem, oracle_fn,
                           repetitions: int = 50, seed: int = 0,
                           sampler=sample_costs, out_csv=None):
    """Solve under perturbed cost vectors with and without the trust
    region; score embedded predictions against the ground-truth oracle.

    ``oracle_fn(x, w)`` is the true outcome function.  Returns per-run
    rows plus the two mean squared errors.
    """
    if len(problem.bindings) != 1:
        raise ValueError("prescription evaluation expects one binding")
    pm, binding = problem.bindings[0]
    baseline = dict(problem.objective)
    rng = np.random.default_rng(seed)
    rows = []
    for rep in range(repetitions):
        costs = sampler(baseline, rng)
        for mode in ("trust-region", "box-only"):
            tr = problem.trust_region if mode == "trust-region" \
                else TrustRegionSpec()
            p = ConceptualProblem(problem.variables, problem.w,
                                  problem.known_rows, costs,
                                  problem.bindings, tr)
            rep_out = solve(p)
            row = {"rep": rep, "mode": mode,
                   "status": rep_out.solution.status}
            if rep_out.solution.status == "optimal":
                x = np.array([rep_out.solution.primal[i]
                              for i in range(pm.space.n)])
                embedded = rep_out.outcomes.get(binding.outcome, float("nan"))
                truth = float(oracle_fn(x, problem.w))
                row.update(embedded=embedded, truth=truth,
                           squared_error=(embedded - truth) ** 2,
                           objective=rep_out.solution.objective)
            rows.append(row)
    mse = {}
    for mode in ("trust-region", "box-only"):
        errs = [r["squared_error"] for r in rows
                if r["mode"] == mode and "squared_error" in r]
        mse[mode] = float(np.mean(errs)) if errs else float("nan")
    if out_csv is not None:
        fields = ["rep", "mode", "status", "embedded", "truth",
                  "squared_error", "objective"]
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
    return rows, mse
