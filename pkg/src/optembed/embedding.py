"""Compilation of trained predictive models into linear MIO constraints.

Each ``embed_*`` function adds variables and rows to a target
:class:`~optembed.mio.MioModel`, binds an outcome variable ``y`` and
returns an :class:`EmbeddingArtifacts` audit record (auxiliary variable
ids, row ids, big-M values used).  The contextual vector ``w`` is always
numeric and fixed at embedding time; its contribution folds into row
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (NoReachableLeaf, UnboundedActivation, UnboundedRegion)
from .mio import (BINARY, EQ, GE, INF, LE, MioModel, _Standardized, solve_lp)
from .models import (ForestModel, GbmModel, LinearModel, MlpModel, TreeModel,
                     child_is_leaf)

# strict split sides use b' = -b - eps with eps scaled by the threshold
EPS_SCALE = 1e-6
# the non-strict side backs off the threshold by a sliver so optima cannot
# land exactly on a split boundary, where float noise in a later tree walk
# could flip the branch the solver committed to
LEFT_MARGIN_SCALE = 1e-7
# safety margin added on top of every computed big-M
BIG_M_PAD = 1e-6


def split_epsilon(rhs: float) -> float:
    return EPS_SCALE * (1.0 + abs(rhs))


def split_margin(rhs: float) -> float:
    return LEFT_MARGIN_SCALE * (1.0 + abs(rhs))


@dataclass
class EmbeddingArtifacts:
    outcome_var: int | None = None
    aux_vars: dict[str, list] = field(default_factory=dict)
    row_ids: list[int] = field(default_factory=list)
    big_m: dict[int, float] = field(default_factory=dict)
    children: list["EmbeddingArtifacts"] = field(default_factory=list)

    def add_row(self, row_id, big_m=None):
        self.row_ids.append(row_id)
        if big_m is not None:
            self.big_m[row_id] = big_m


FUNCTION = "function"
INDICATOR = "indicator"

ROLE_UPPER = "constraint-upper"
ROLE_LOWER = "constraint-lower"
ROLE_OBJECTIVE = "objective-term"
ROLE_CLASSIFIER = "classifier-feasible"


@dataclass
class OutcomeBinding:
    outcome: str
    role: str
    tau: float = math.nan          # threshold for constraint/classifier roles
    weight: float = 1.0            # objective-term weight
    mode: str = FUNCTION
    alpha: float = 0.0             # tolerated violating share, indicator forests

    def __post_init__(self):
        if self.role in (ROLE_UPPER, ROLE_LOWER) and not math.isfinite(self.tau):
            raise ValueError(f"role {self.role} needs a finite threshold")
        if self.role == ROLE_CLASSIFIER and not 0.0 < self.tau < 1.0:
            raise ValueError("classifier threshold must lie in (0, 1)")


class BigMOracle:
    """Minimal big-M computation: one LP per split over the known-constraint
    plus trust-region model when available, interval arithmetic over the
    feature box otherwise."""

    def __init__(self, mio: MioModel, x_ids, region: MioModel | None = None):
        self.mio = mio
        self.x_ids = list(x_ids)
        self.region = region
        self._std = _Standardized(region) if region is not None else None

    def bound(self, coef_x, const: float) -> float:
        """Upper bound on coef_x @ x + const over the region."""
        coef_x = np.asarray(coef_x, dtype=float)
        if self.region is None:
            hi = 0.0
            for cid, c in zip(self.x_ids, coef_x):
                if c == 0.0:
                    continue
                v = self.mio.variables[cid]
                edge = v.upper if c > 0 else v.lower
                if not math.isfinite(edge):
                    raise UnboundedRegion(
                        f"variable {v.name!r} has no finite bound in direction of split")
                hi += c * edge
            return hi + const
        self.region.set_objective({cid: -c for cid, c in zip(self.x_ids, coef_x) if c != 0.0})
        self._std.refresh_objective(self.region)
        sol = solve_lp(self.region, _std=self._std)
        if sol.status == "unbounded":
            raise UnboundedRegion("big-M region is unbounded for a split direction")
        if sol.status != "optimal":
            raise UnboundedRegion(f"big-M region LP returned {sol.status}")
        return -sol.objective + const


def compute_big_m(oracle: BigMOracle, coef_x, const: float) -> float:
    """Big-M for a deactivatable row coef_x @ x + const <= 0."""
    return max(oracle.bound(coef_x, const), 0.0) + BIG_M_PAD


# -- linear family ----------------------------------------------------


def embed_linear(mio: MioModel, model: LinearModel, x_ids, w) -> EmbeddingArtifacts:
    """Equality row y = b0 + bx.x + bw.w with the w part folded into the rhs."""
    w = np.asarray(w, dtype=float)
    const = model.intercept + float(model.beta_w @ w)
    lo = const + sum(c * (mio.variables[i].lower if c > 0 else mio.variables[i].upper)
                     for i, c in zip(x_ids, model.beta_x) if c != 0.0)
    hi = const + sum(c * (mio.variables[i].upper if c > 0 else mio.variables[i].lower)
                     for i, c in zip(x_ids, model.beta_x) if c != 0.0)
    y = mio.add_variable("y_linear", lo if math.isfinite(lo) else -1e12,
                         hi if math.isfinite(hi) else INF)
    coeffs = {i: -c for i, c in zip(x_ids, model.beta_x) if c != 0.0}
    coeffs[y] = 1.0
    art = EmbeddingArtifacts(outcome_var=y)
    art.add_row(mio.add_constraint(coeffs, EQ, const, name="linear_eq"))
    return art


def embed_svc_halfspace(mio: MioModel, model: LinearModel, x_ids, w,
                        margin: float = 0.0) -> EmbeddingArtifacts:
    """Feasible-class half-space b0 + bx.x + bw.w >= margin."""
    w = np.asarray(w, dtype=float)
    const = model.intercept + float(model.beta_w @ w)
    coeffs = {i: c for i, c in zip(x_ids, model.beta_x) if c != 0.0}
    art = EmbeddingArtifacts()
    # a strict sliver keeps optima off the decision boundary, where float
    # noise in a later margin evaluation could flip the predicted class
    rhs = margin - const + split_margin(const)
    art.add_row(mio.add_constraint(coeffs, GE, rhs, name="svc_halfspace"))
    return art


# -- trees ------------------------------------------------------------


def _leaf_rows(tree: TreeModel, leaf, w):
    """Row list [(coef_x, rhs_after_w)] for one leaf path, with strict sides
    shifted by epsilon.  Rows whose x part vanishes evaluate immediately:
    True rows are dropped, a False row prunes the leaf (returns None)."""
    rows = []
    for split_id, side in leaf.path:
        s = tree.splits[split_id]
        if side == "left":
            coef_x, rhs = s.coef_x, s.rhs - float(s.coef_w @ w)
        else:
            coef_x = -s.coef_x
            rhs = -s.rhs - split_epsilon(s.rhs) + float(s.coef_w @ w)
        if not np.any(coef_x):
            if 0.0 <= rhs:
                continue
            return None
        if side == "left":
            rhs = rhs - split_margin(s.rhs)
        rows.append((coef_x, rhs))
    return rows


def embed_tree(mio: MioModel, tree: TreeModel, x_ids, w,
               oracle: BigMOracle | None = None,
               name: str = "tree") -> EmbeddingArtifacts:
    """Leaf-binary big-M encoding of a decision tree.

    Leaves unreachable under the fixed ``w`` are pruned first; a tree with
    one surviving leaf degenerates to hard path rows and a pinned ``y``.
    """
    w = np.asarray(w, dtype=float)
    if oracle is None:
        oracle = BigMOracle(mio, x_ids)
    survivors = []
    for li, leaf in enumerate(tree.leaves):
        rows = _leaf_rows(tree, leaf, w)
        if rows is not None:
            survivors.append((li, leaf, rows))
    if not survivors:
        raise NoReachableLeaf("fixed context violates every root-to-leaf path")
    preds = [leaf.prediction for _, leaf, _ in survivors]
    art = EmbeddingArtifacts()
    y = mio.add_variable(f"{name}_y", min(preds), max(preds))
    art.outcome_var = y
    if len(survivors) == 1:
        _, leaf, rows = survivors[0]
        for coef_x, rhs in rows:
            coeffs = {i: c for i, c in zip(x_ids, coef_x) if c != 0.0}
            art.add_row(mio.add_constraint(coeffs, LE, rhs, name=f"{name}_path"))
        art.add_row(mio.add_constraint({y: 1.0}, EQ, leaf.prediction,
                                       name=f"{name}_pin"))
        return art
    leaf_bins = []
    for li, leaf, rows in survivors:
        l = mio.add_variable(f"{name}_l{li}", 0.0, 1.0, BINARY)
        leaf_bins.append(l)
        for coef_x, rhs in rows:
            big_m = compute_big_m(oracle, coef_x, -rhs)
            coeffs = {i: c for i, c in zip(x_ids, coef_x) if c != 0.0}
            coeffs[l] = big_m
            art.add_row(mio.add_constraint(coeffs, LE, rhs + big_m,
                                           name=f"{name}_split"), big_m)
    art.aux_vars["leaf_binaries"] = leaf_bins
    art.add_row(mio.add_constraint({l: 1.0 for l in leaf_bins}, EQ, 1.0,
                                   name=f"{name}_oneleaf"))
    coeffs = {l: -leaf.prediction for l, (_, leaf, _) in zip(leaf_bins, survivors)
              if leaf.prediction != 0.0}
    coeffs[y] = 1.0
    art.add_row(mio.add_constraint(coeffs, EQ, 0.0, name=f"{name}_pred"))
    return art


def embed_forest_mean(mio: MioModel, forest: ForestModel, x_ids, w,
                      oracle: BigMOracle | None = None,
                      name: str = "rf") -> EmbeddingArtifacts:
    """Average of per-tree outcomes: y = (1/P) sum y_i."""
    P = len(forest.trees)
    art = EmbeddingArtifacts()
    tree_ys = []
    for ti, tree in enumerate(forest.trees):
        child = embed_tree(mio, tree, x_ids, w, oracle, name=f"{name}_t{ti}")
        art.children.append(child)
        tree_ys.append(child.outcome_var)
    lo = sum(mio.variables[v].lower for v in tree_ys) / P
    hi = sum(mio.variables[v].upper for v in tree_ys) / P
    y = mio.add_variable(f"{name}_y", lo, hi)
    art.outcome_var = y
    art.aux_vars["tree_outcomes"] = tree_ys
    coeffs = {v: -1.0 / P for v in tree_ys}
    coeffs[y] = 1.0
    art.add_row(mio.add_constraint(coeffs, EQ, 0.0, name=f"{name}_mean"))
    return art


def embed_forest_violation(mio: MioModel, forest: ForestModel, x_ids, w,
                           tau: float, alpha: float, direction: str = "<=",
                           oracle: BigMOracle | None = None,
                           name: str = "rfv") -> EmbeddingArtifacts:
    """Ensemble violation limit: at least ceil((1-alpha) P) member trees
    must individually satisfy the bound; alpha=1 disables the constraint."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    P = len(forest.trees)
    art = embed_forest_mean(mio, forest, x_ids, w, oracle, name=name)
    required = math.ceil((1.0 - alpha) * P - 1e-12)
    if required <= 0:
        return art
    sats = []
    for ti, child in enumerate(art.children):
        yi = child.outcome_var
        lo, hi = mio.variables[yi].lower, mio.variables[yi].upper
        s = mio.add_variable(f"{name}_s{ti}", 0.0, 1.0, BINARY)
        sats.append(s)
        if direction == "<=":
            # s=1 forces y_i <= tau; slack hi - tau otherwise
            big_m = max(hi - tau, 0.0) + BIG_M_PAD
            art.add_row(mio.add_constraint({yi: 1.0, s: big_m}, LE, tau + big_m,
                                           name=f"{name}_lim{ti}"), big_m)
        else:
            big_m = max(tau - lo, 0.0) + BIG_M_PAD
            art.add_row(mio.add_constraint({yi: -1.0, s: big_m}, LE, -tau + big_m,
                                           name=f"{name}_lim{ti}"), big_m)
    art.aux_vars["satisfy_binaries"] = sats
    art.add_row(mio.add_constraint({s: 1.0 for s in sats}, GE, float(required),
                                   name=f"{name}_quorum"))
    return art


def embed_gbm(mio: MioModel, gbm: GbmModel, x_ids, w,
              oracle: BigMOracle | None = None,
              name: str = "gbm") -> EmbeddingArtifacts:
    """Weighted sum of base-learner outcomes: y = bias + sum beta_i y_i."""
    art = EmbeddingArtifacts()
    tree_ys = []
    for ti, tree in enumerate(gbm.trees):
        child = embed_tree(mio, tree, x_ids, w, oracle, name=f"{name}_t{ti}")
        art.children.append(child)
        tree_ys.append(child.outcome_var)
    lo = gbm.bias + sum(b * (mio.variables[v].lower if b > 0 else mio.variables[v].upper)
                        for b, v in zip(gbm.weights, tree_ys))
    hi = gbm.bias + sum(b * (mio.variables[v].upper if b > 0 else mio.variables[v].lower)
                        for b, v in zip(gbm.weights, tree_ys))
    y = mio.add_variable(f"{name}_y", lo, hi)
    art.outcome_var = y
    art.aux_vars["tree_outcomes"] = tree_ys
    coeffs = {v: -b for b, v in zip(gbm.weights, tree_ys) if b != 0.0}
    coeffs[y] = 1.0
    art.add_row(mio.add_constraint(coeffs, EQ, gbm.bias, name=f"{name}_sum"))
    return art


# -- neural networks --------------------------------------------------


def compute_activation_bounds(mlp: MlpModel, x_lower, x_upper, w) -> MlpModel:
    """Layer-by-layer interval arithmetic over the input box; fills the
    model's per-node pre-activation bounds and returns it."""
    lo = np.concatenate([np.asarray(x_lower, float), np.asarray(w, float)])
    hi = np.concatenate([np.asarray(x_upper, float), np.asarray(w, float)])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedActivation("input box must be finite to derive bounds")
    act_lower, act_upper = [], []
    for W, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        Wp = np.maximum(W, 0.0)
        Wn = np.minimum(W, 0.0)
        pre_lo = Wp @ lo + Wn @ hi + b
        pre_hi = Wp @ hi + Wn @ lo + b
        act_lower.append(pre_lo)
        act_upper.append(pre_hi)
        lo = np.maximum(pre_lo, 0.0)
        hi = np.maximum(pre_hi, 0.0)
    mlp.act_lower = act_lower
    mlp.act_upper = act_upper
    return mlp


def _embed_hidden_layers(mio, mlp, x_ids, w, name, art):
    """ReLU rows per hidden node; returns variable ids of the last hidden
    layer.  Nodes whose interval sign is fixed skip the binary."""
    if mlp.act_lower is None:
        raise UnboundedActivation("activation bounds missing; "
                                  "call compute_activation_bounds first")
    w = np.asarray(w, dtype=float)
    prev_vars = list(x_ids)
    prev_const = list(w)  # appended constant inputs
    relu_bins = []
    value_vars = []
    for li, (W, b) in enumerate(zip(mlp.weights[:-1], mlp.biases[:-1])):
        layer_vars = []
        for ni in range(W.shape[0]):
            m_lo = float(mlp.act_lower[li][ni])
            m_up = float(mlp.act_upper[li][ni])
            row = W[ni]
            const = float(b[ni]) + float(row[len(prev_vars):] @ np.asarray(prev_const)) \
                if prev_const else float(b[ni])
            pre = {v: float(c) for v, c in zip(prev_vars, row[: len(prev_vars)])
                   if c != 0.0}
            v = mio.add_variable(f"{name}_v{li}_{ni}", 0.0, max(m_up, 0.0))
            layer_vars.append(v)
            if m_up <= 0.0:
                # node can never fire: v pinned at 0 by its bounds
                continue
            if m_lo >= 0.0:
                # always active: v equals its pre-activation
                art.add_row(mio.add_constraint(
                    {v: 1.0, **{k: -c for k, c in pre.items()}}, EQ, const,
                    name=f"{name}_on{li}_{ni}"))
                continue
            z = mio.add_variable(f"{name}_z{li}_{ni}", 0.0, 1.0, BINARY)
            relu_bins.append(z)
            # v >= pre
            art.add_row(mio.add_constraint(
                {**{k: c for k, c in pre.items()}, v: -1.0}, LE, -const,
                name=f"{name}_ge{li}_{ni}"))
            # v <= pre - M_L (1 - z)
            art.add_row(mio.add_constraint(
                {v: 1.0, **{k: -c for k, c in pre.items()}, z: -m_lo},
                LE, const - m_lo, name=f"{name}_off{li}_{ni}"), -m_lo)
            # v <= M_U z
            art.add_row(mio.add_constraint({v: 1.0, z: -m_up}, LE, 0.0,
                                           name=f"{name}_cap{li}_{ni}"), m_up)
        prev_vars = layer_vars
        prev_const = []
        value_vars.extend(layer_vars)
    art.aux_vars["relu_values"] = value_vars
    art.aux_vars["relu_binaries"] = relu_bins
    return prev_vars


def embed_mlp(mio: MioModel, mlp: MlpModel, x_ids, w,
              name: str = "mlp") -> EmbeddingArtifacts:
    """ReLU network regression embedding; output is a linear row over the
    last hidden layer."""
    art = EmbeddingArtifacts()
    last = _embed_hidden_layers(mio, mlp, x_ids, w, name, art)
    Wout, bout = mlp.weights[-1], mlp.biases[-1]
    lo = float(bout[0]) + sum(c * (0.0 if c > 0 else mio.variables[v].upper)
                              for v, c in zip(last, Wout[0]))
    hi = float(bout[0]) + sum(c * (mio.variables[v].upper if c > 0 else 0.0)
                              for v, c in zip(last, Wout[0]))
    y = mio.add_variable(f"{name}_y", lo, hi)
    art.outcome_var = y
    coeffs = {v: -float(c) for v, c in zip(last, Wout[0]) if c != 0.0}
    coeffs[y] = 1.0
    art.add_row(mio.add_constraint(coeffs, EQ, float(bout[0]), name=f"{name}_out"))
    return art


def embed_mlp_classifier(mio: MioModel, mlp: MlpModel, x_ids, w, tau: float,
                         name: str = "mlpc") -> EmbeddingArtifacts:
    """Sigmoid-output network thresholded at tau: the logit half-space
    logit >= ln(tau / (1 - tau))."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    art = EmbeddingArtifacts()
    last = _embed_hidden_layers(mio, mlp, x_ids, w, name, art)
    Wout, bout = mlp.weights[-1], mlp.biases[-1]
    # the sliver keeps optima strictly above the probability threshold
    rhs = math.log(tau / (1.0 - tau)) - float(bout[0])
    rhs = rhs + split_margin(rhs)
    coeffs = {v: float(c) for v, c in zip(last, Wout[0]) if c != 0.0}
    art.add_row(mio.add_constraint(coeffs, GE, rhs, name=f"{name}_logit"))
    return art


def embed_multiclass_argmax(mio: MioModel, mlp: MlpModel, x_ids, w,
                            target_class: int,
                            name: str = "mlpk") -> EmbeddingArtifacts:
    """Argmax output encoding: class binaries, big-M dominance rows, one
    class active, and the target class forced on."""
    K = mlp.weights[-1].shape[0]
    if not 0 <= target_class < K:
        raise ValueError(f"target class {target_class} outside 0..{K - 1}")
    art = EmbeddingArtifacts()
    last = _embed_hidden_layers(mio, mlp, x_ids, w, name, art)
    Wout, bout = mlp.weights[-1], mlp.biases[-1]
    # interval bounds on each logit over the hidden-box
    v_hi = np.array([mio.variables[v].upper for v in last])
    logit_lo = bout + np.minimum(Wout, 0.0) @ v_hi
    logit_hi = bout + np.maximum(Wout, 0.0) @ v_hi
    ybins = [mio.add_variable(f"{name}_class{k}", 0.0, 1.0, BINARY)
             for k in range(K)]
    for i in range(K):
        for k in range(K):
            if k == i:
                continue
            big_m = max(float(logit_hi[k] - logit_lo[i]), 0.0) + BIG_M_PAD
            # require a strict sliver of dominance so optima cannot land on
            # a logit tie, where float noise in a later forward pass could
            # hand the argmax to the other class
            margin = LEFT_MARGIN_SCALE * (1.0 + abs(float(logit_hi[k]))
                                          + abs(float(logit_lo[i])))
            # logit_i >= logit_k + margin - M (1 - y_i)
            coeffs = {}
            for v, ci, ck in zip(last, Wout[i], Wout[k]):
                d = float(ck - ci)
                if d != 0.0:
                    coeffs[v] = d
            coeffs[ybins[i]] = big_m
            rhs = float(bout[i] - bout[k]) + big_m - margin
            art.add_row(mio.add_constraint(coeffs, LE, rhs,
                                           name=f"{name}_dom{i}_{k}"), big_m)
    art.add_row(mio.add_constraint({yb: 1.0 for yb in ybins}, EQ, 1.0,
                                   name=f"{name}_oneclass"))
    # force the desired class
    v = mio.variables[ybins[target_class]]
    v.lower = v.upper = 1.0
    art.aux_vars["class_binaries"] = ybins
    art.outcome_var = ybins[target_class]
    return art


# -- outcome binding --------------------------------------------------


def bind_outcome(mio: MioModel, art: EmbeddingArtifacts,
                 binding: OutcomeBinding) -> None:
    """Attach the learned outcome to the optimization model per its role."""
    y = art.outcome_var
    if binding.role == ROLE_UPPER:
        art.add_row(mio.add_constraint({y: 1.0}, LE, binding.tau,
                                       name=f"bind_{binding.outcome}_ub"))
    elif binding.role == ROLE_LOWER:
        art.add_row(mio.add_constraint({y: 1.0}, GE, binding.tau,
                                       name=f"bind_{binding.outcome}_lb"))
    elif binding.role == ROLE_OBJECTIVE:
        lo = mio.variables[y].lower
        t = mio.add_variable(f"epi_{binding.outcome}", lo, INF)
        art.aux_vars.setdefault("epigraph", []).append(t)
        art.add_row(mio.add_constraint({y: 1.0, t: -1.0}, LE, 0.0,
                                       name=f"bind_{binding.outcome}_epi"))
        mio.add_objective_term(t, binding.weight)
    elif binding.role == ROLE_CLASSIFIER:
        if y is not None:
            # probability-valued outcome (tree/forest indicator models)
            art.add_row(mio.add_constraint({y: 1.0}, GE, binding.tau,
                                           name=f"bind_{binding.outcome}_cls"))
        # margin-based embeddings (SVC half-space, MLP logit) enforce the
        # threshold at embed time; nothing further to add
    else:
        raise ValueError(f"unknown binding role {binding.role!r}")
