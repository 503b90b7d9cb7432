"""Command-line front end: train and select predictive models, solve and
export the food-basket problem, and run the experiment suites.

Every command reads an optional JSON config file; any value can also be
given as a command-line flag, and the command line wins.  Each command
writes a machine-readable ``result.json`` (with a ``schema_version``
field) plus a human-readable ``summary.txt`` under the output directory,
and exits zero exactly when no error occurred.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from . import wfp
from .columns import scalability_experiment, solve_with_column_selection
from .hull import (NO_REGION, SINGLE_HULL, UNION_OF_HULLS, PointSet,
                   TrustRegionSpec)
from .lp_io import export_lp_file, read_lp_file
from .mio import EQ, GE, MioModel
from .models import load_model, save_model
from .training import load_dataset, select_model
from .report_io import timing_csv_path

SCHEMA_VERSION = 1
EXPERIMENTS = ("wfp-tr", "wfp-cluster", "wfp-alpha", "cs-scaling",
               "leaf-depth")


@dataclass
class RunConfig:
    command: str = ""
    experiment: str = ""
    # dataset: either a CSV + manifest, or a generated food-basket sample
    data: str | None = None
    manifest: str | None = None
    samples: int = 2000
    # model selection
    model: str | None = None            # path to a saved model document
    outcome: str = "palatability"
    classes: tuple = ("linear", "cart")
    task: str = "regression"
    folds: int = 5
    hyper: dict = field(default_factory=dict)
    # problem shape
    trust_region: str = "single"        # single | union | none
    floor: float = wfp.PALATABILITY_FLOOR
    mode: str = "monolithic"            # monolithic | clustered | leaves | columns
    clusters: int = 5
    # experiment grids
    reps: int = 3
    k_values: tuple = (1, 5, 10, 20)
    alphas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    depths: tuple = (2, 3, 4, 5, 6)
    sizes: tuple = (500, 1000, 5000)
    # plumbing
    seed: int = 0
    threads: int = 1
    out: str = "out"


_TUPLE_FIELDS = {"classes": str, "k_values": int, "alphas": float,
                 "depths": int, "sizes": int}


def _parse_tuple(name, value):
    conv = _TUPLE_FIELDS[name]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    return tuple(conv(v) for v in value)


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid with the config file, overlaid with the flags."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        bad = set(doc) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        cfg = replace(cfg, **{k: _parse_tuple(k, v) if k in _TUPLE_FIELDS
                              else v for k, v in doc.items()})
    overrides = {}
    for name in known:
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = _parse_tuple(name, val) \
                if name in _TUPLE_FIELDS else val
    cfg = replace(cfg, **overrides)
    for path in (cfg.data, cfg.manifest, cfg.model):
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(path)
    cfg.seed = int(cfg.seed)
    return cfg


# -- shared plumbing --------------------------------------------------


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _emit(cfg: RunConfig, payload: dict, summary_lines: list[str]) -> None:
    out = _out_dir(cfg)
    doc = {"schema_version": SCHEMA_VERSION, "command": cfg.command}
    if cfg.experiment:
        doc["experiment"] = cfg.experiment
    doc.update(_jsonable(payload))
    (out / "result.json").write_text(json.dumps(doc, indent=2) + "\n")
    text = "\n".join(summary_lines) + "\n"
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)


def _load_data(cfg: RunConfig):
    if cfg.data is not None:
        if cfg.manifest is None:
            raise ValueError("--data requires --manifest")
        return load_dataset(cfg.data, cfg.manifest)
    return wfp.generate_dataset(cfg.samples, seed=cfg.seed)


def _get_model(cfg: RunConfig, data):
    if cfg.model is not None:
        return load_model(cfg.model), None
    hyper = dict(wfp._HYPER)
    hyper.update(cfg.hyper)
    pm, cv = select_model(data, cfg.outcome, candidates=tuple(cfg.classes),
                          k_folds=cfg.folds, seed=cfg.seed, task=cfg.task,
                          hyper=hyper)
    return pm, cv


def _trust_region(cfg: RunConfig, data) -> TrustRegionSpec:
    if cfg.trust_region == "none":
        return TrustRegionSpec()
    policy = {"single": SINGLE_HULL, "union": UNION_OF_HULLS}.get(
        cfg.trust_region)
    if policy is None:
        raise ValueError(f"unknown trust-region policy {cfg.trust_region!r}")
    return TrustRegionSpec(points=PointSet(data.X), policy=policy,
                           scope="x-only", clusters=cfg.clusters,
                           seed=cfg.seed)


def _build_problem(cfg: RunConfig):
    data = _load_data(cfg)
    pm, _cv = _get_model(cfg, data)
    tables = wfp.load_nutrition_tables()
    network = wfp.default_network(tables, seed=cfg.seed)
    prob = wfp.build_wfp_model(network, tables, pm, t=cfg.floor,
                               trust_region=_trust_region(cfg, data))
    return data, pm, tables, network, prob


# -- commands ---------------------------------------------------------


def cmd_train(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    pm, cv = _get_model(cfg, data)
    out = _out_dir(cfg)
    model_path = out / "model.json"
    save_model(pm, model_path)
    payload = {"model_path": str(model_path), "chosen": pm.kind}
    lines = [f"trained {pm.kind!r} for outcome {cfg.outcome!r}",
             f"model document: {model_path}"]
    if cv is not None:
        payload["cv"] = {"scores": cv.scores, "chosen": cv.chosen,
                         "folds": cv.folds, "metric": cv.metric}
        for cls, score in sorted(cv.scores.items(), key=lambda kv: kv[1]):
            lines.append(f"  {cls:8s} {cv.metric}={score:.6g}")
    _emit(cfg, payload, lines)
    return 0


def _diet_only_model(network, tables) -> MioModel:
    """The ration problem with flows folded out: each gram of commodity k
    is costed at its cheapest procurement-plus-transport route, weighted
    by demand, so the optimum matches the flow formulation."""
    comms = tables.commodities
    nodes = list(network.sources) + list(network.transships) \
        + list(network.deliveries)
    arcs = list(network.arcs())
    best = {n: {k: math.inf for k in comms} for n in nodes}
    for s in network.sources:
        for k in comms:
            best[s][k] = network.procurement[(s, k)]
    for _ in range(len(nodes)):
        for i, j in arcs:
            for k in comms:
                cand = best[i][k] + network.transport[(i, j, k)]
                if cand < best[j][k]:
                    best[j][k] = cand
    mio = MioModel()
    for k in comms:
        mio.add_variable(k, 0.0, 1000.0)
    ids = {k: i for i, k in enumerate(comms)}
    mio.add_constraint({ids[wfp.SALT]: 1.0}, EQ, wfp.SALT_GRAMS,
                       name="salt_fixed")
    mio.add_constraint({ids[wfp.SUGAR]: 1.0}, EQ, wfp.SUGAR_GRAMS,
                       name="sugar_fixed")
    for li, nut in enumerate(tables.nutrients):
        coeffs = {ids[k]: float(tables.values[ki, li])
                  for ki, k in enumerate(comms)
                  if tables.values[ki, li] != 0.0}
        mio.add_constraint(coeffs, GE, float(tables.requirements[li]),
                           name=f"nutrition[{nut}]")
    cost = {}
    for k in comms:
        per_gram = sum(d_amt * network.days / network.gamma * best[d][k]
                       for d, d_amt in network.demand.items())
        cost[ids[k]] = per_gram
    mio.set_objective(cost)
    return mio


def cmd_solve(cfg: RunConfig) -> int:
    data, pm, tables, network, prob = _build_problem(cfg)
    if cfg.mode == "columns":
        diet = _diet_only_model(network, tables)
        sol, audit = solve_with_column_selection(diet, data.X, seed=cfg.seed)
        basket = {k: float(sol.primal[i])
                  for i, k in enumerate(tables.commodities)} \
            if sol.primal is not None else {}
        payload = {"status": sol.status, "objective": sol.objective,
                   "mode": cfg.mode, "basket": basket,
                   "pricing_iterations": sol.node_count,
                   "final_pool": audit.pool_sizes[-1]
                   if audit.pool_sizes else 0}
        lines = [f"column-selection solve: {sol.status}, "
                 f"objective {sol.objective:.6f}",
                 f"pool grew to {payload['final_pool']} columns in "
                 f"{sol.node_count} pricing rounds"]
        _emit(cfg, payload, lines)
        return 0 if sol.status == "optimal" else 1
    if cfg.mode == "monolithic":
        report = pl.solve(prob)
    elif cfg.mode == "clustered":
        report = pl.solve_clustered(prob, K=cfg.clusters, seed=cfg.seed,
                                    parallelism=cfg.threads)
    elif cfg.mode == "leaves":
        report = pl.solve_tree_by_leaves(prob)
    else:
        raise ValueError(f"unknown solve mode {cfg.mode!r}")
    sol = report.solution
    payload = {"status": sol.status, "objective": sol.objective,
               "mode": cfg.mode, "outcomes": report.outcomes,
               "oracle": report.oracle, "gaps": report.gaps,
               "timings": report.timings}
    lines = [f"{cfg.mode} solve with {pm.kind!r} palatability model: "
             f"{sol.status}"]
    if sol.status == "optimal":
        basket = {k: float(sol.primal[i])
                  for i, k in enumerate(tables.commodities)}
        residuals = wfp.check_solution(prob, report)
        payload["basket"] = basket
        payload["max_residual"] = max(residuals.values())
        lines.append(f"objective {sol.objective:.6f}, "
                     f"max row residual {payload['max_residual']:.2e}")
        for name, got in report.outcomes.items():
            lines.append(f"embedded {name} = {got:.4f} "
                         f"(oracle {report.oracle[name]:.4f})")
    _emit(cfg, payload, lines)
    return 0 if sol.status == "optimal" else 1


def cmd_export(cfg: RunConfig) -> int:
    _data, pm, _tables, _network, prob = _build_problem(cfg)
    asm = pl.assemble(prob)
    out = _out_dir(cfg)
    lp_path = out / "model.lp"
    export_lp_file(asm.model, lp_path)
    back = read_lp_file(lp_path)
    if len(back.variables) != len(asm.model.variables):
        raise RuntimeError("round-trip changed the variable count")
    payload = {"lp_path": str(lp_path),
               "variables": len(asm.model.variables),
               "constraints": len(asm.model.constraints),
               "binaries": len(asm.model.binary_ids)}
    lines = [f"wrote {lp_path}: {payload['variables']} variables, "
             f"{payload['constraints']} rows, "
             f"{payload['binaries']} binaries (round-trip checked)"]
    _emit(cfg, payload, lines)
    return 0


def cmd_experiment(cfg: RunConfig) -> int:
    if cfg.experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {cfg.experiment!r}; "
                         f"choose from {', '.join(EXPERIMENTS)}")
    out = _out_dir(cfg)
    csv_path = out / (cfg.experiment.replace("-", "_") + ".csv")
    lines = [f"experiment {cfg.experiment} (seed {cfg.seed})"]
    payload = {"csv": str(csv_path), "timings_csv": str(timing_csv_path(csv_path))}
    if cfg.experiment == "wfp-tr":
        data = _load_data(cfg)
        results, _per_run = wfp.run_trust_region_experiment(
            data, model_classes=tuple(cfg.classes), repetitions=cfg.reps,
            seed=cfg.seed, t=cfg.floor, out_csv=csv_path)
        payload["summary"] = results
        for r in results:
            lines.append(f"  {r['class']:8s} mse(trust-region)={r['mse_tr']:.4f}"
                         f"  mse(box-only)={r['mse']:.4f}")
    elif cfg.experiment == "wfp-cluster":
        data = _load_data(cfg)
        _rows, summary = wfp.run_clustering_experiment(
            data, k_values=tuple(cfg.k_values), repetitions=cfg.reps,
            seed=cfg.seed, t=cfg.floor, parallelism=cfg.threads,
            out_csv=csv_path)
        payload["summary"] = summary
        for s in summary:
            lines.append(f"  K={s['K']:<3d} mean gap {s['mean_gap']:.2e}  "
                         f"max-cluster {s['mean_max_cluster_seconds']:.2f}s")
    elif cfg.experiment == "wfp-alpha":
        data = _load_data(cfg)
        _rows, summary = wfp.run_violation_limit_sweep(
            data, alphas=tuple(cfg.alphas), repetitions=cfg.reps,
            seed=cfg.seed, t=cfg.floor, out_csv=csv_path)
        payload["summary"] = summary
        for s in summary:
            lines.append(f"  alpha={s['alpha']:.2f} mean cost "
                         f"{s['mean_cost']:.2f}  mean palatability "
                         f"{s['mean_palatability']:.3f}")
    elif cfg.experiment == "cs-scaling":
        records = scalability_experiment(sample_sizes=tuple(cfg.sizes),
                                         seeds=(cfg.seed,), out_csv=csv_path)
        payload["summary"] = [{"N": N, "mode": mode, "seed": s,
                               "wall_seconds": secs, "objective": obj}
                              for N, mode, s, secs, obj in records]
        for N, mode, _s, secs, _obj in records:
            lines.append(f"  N={N:<7d} {mode:17s} {secs:.3f}s")
    else:  # leaf-depth
        data = _load_data(cfg)
        rows = pl.leaf_count_experiment(tuple(cfg.depths), data, cfg.outcome,
                                        tau=cfg.floor, out_csv=csv_path)
        payload["summary"] = rows
        for r in rows:
            lines.append(f"  depth={r['max_depth']} leaves={r['feasible_leaves']}"
                         f" leaf {r['leaf_seconds']:.3f}s"
                         f" mono {r['mono_seconds']:.3f}s")
    _emit(cfg, payload, lines)
    return 0


# -- argument parsing -------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--threads", type=int, help="parallel solver width")
    p.add_argument("--data", help="dataset CSV (default: generated)")
    p.add_argument("--manifest", help="column-role manifest JSON for --data")
    p.add_argument("--samples", type=int,
                   help="generated dataset size (default: 2000)")
    p.add_argument("--outcome", help="outcome column (default: palatability)")
    p.add_argument("--classes", help="comma list of model classes")
    p.add_argument("--floor", type=float,
                   help="outcome floor t / threshold tau (default: 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optembed",
        description="Learn constraints from data and embed them in "
                    "mixed-integer optimization models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and cross-validate models, "
                                     "save the winner as a model document")
    _add_common(p)
    p.add_argument("--task", choices=("regression", "classification"))
    p.add_argument("--folds", type=int, help="cross-validation folds")

    p = sub.add_parser("solve", help="assemble and solve the food-basket "
                                     "problem")
    _add_common(p)
    p.add_argument("--model", help="saved model document to embed")
    p.add_argument("--mode",
                   choices=("monolithic", "clustered", "leaves", "columns"))
    p.add_argument("--trust-region", dest="trust_region",
                   choices=("single", "union", "none"))
    p.add_argument("--clusters", type=int,
                   help="cluster count for union/clustered modes")

    p = sub.add_parser("export", help="write the assembled model as an "
                                      "LP file")
    _add_common(p)
    p.add_argument("--model", help="saved model document to embed")
    p.add_argument("--trust-region", dest="trust_region",
                   choices=("single", "union", "none"))
    p.add_argument("--clusters", type=int)

    p = sub.add_parser("experiment", help="run an experiment suite and "
                                          "write its CSV tables")
    p.add_argument("experiment", choices=EXPERIMENTS)
    _add_common(p)
    p.add_argument("--reps", type=int, help="repetitions (default: 3)")
    p.add_argument("--k-values", dest="k_values", help="comma list of K")
    p.add_argument("--alphas", help="comma list of violation limits")
    p.add_argument("--depths", help="comma list of tree depths")
    p.add_argument("--sizes", help="comma list of sample sizes")
    return parser


_COMMANDS = {"train": cmd_train, "solve": cmd_solve, "export": cmd_export,
             "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        cfg.command = args.command
        return _COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
