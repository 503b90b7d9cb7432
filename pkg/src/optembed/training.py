"""Desk-scale trainers for the embeddable model classes.

Deliberately plain algorithms: closed-form ridge regression, subgradient
descent for the SVM pair, greedy axis-parallel CART, bagged forests,
least-squares boosting and full-batch gradient descent for the ReLU
network.  Model quality is a sanity requirement here, not a contribution;
the embeddings consume whatever these produce.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotBinaryLabels, SchemaError, SingularDesign
from .models import (CLASSIFICATION, REGRESSION, FeatureSpace, ForestModel,
                     GbmModel, LinearModel, MlpModel, PredictiveModel,
                     TreeLeaf, TreeModel, TreeSplit, leaf_child)


@dataclass
class Dataset:
    X: np.ndarray                       # N x n decision features
    W: np.ndarray                       # N x p contextual features
    outcomes: dict[str, np.ndarray]
    x_names: list[str]
    w_names: list[str]

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim == 1:
            self.W = self.W.reshape(len(self.X), -1)
        self.outcomes = {k: np.asarray(v, dtype=float) for k, v in self.outcomes.items()}
        if self.rows < 2:
            raise ValueError("need at least two rows")
        for name, y in self.outcomes.items():
            if len(y) != self.rows:
                raise ValueError(f"outcome {name!r} length mismatch")
            if np.any(~np.isfinite(y)) or np.any(~np.isfinite(self.X)):
                raise ValueError("missing or non-finite values in dataset")

    @property
    def rows(self) -> int:
        return self.X.shape[0]

    def outcome(self, name) -> np.ndarray:
        return self.outcomes[name]

    def feature_space(self) -> FeatureSpace:
        return FeatureSpace.from_data(self.x_names, self.X, self.w_names, self.W)

    def features(self) -> np.ndarray:
        """Stacked (x, w) design rows."""
        return np.hstack([self.X, self.W]) if self.W.size else self.X

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.W[idx],
                       {k: v[idx] for k, v in self.outcomes.items()},
                       self.x_names, self.w_names)


def load_dataset(csv_path, manifest_path) -> Dataset:
    """Read a CSV with header row; the manifest declares x/w/y column roles."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    for key in ("x", "y"):
        if key not in manifest:
            raise SchemaError(f"manifest missing {key!r} column list")
    with open(csv_path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    cols = {name: i for i, name in enumerate(header)}
    for role in ("x", "w", "y"):
        for name in manifest.get(role, []):
            if name not in cols:
                raise SchemaError(f"manifest column {name!r} not in CSV header")
    x_names = manifest["x"]
    w_names = manifest.get("w", [])
    return Dataset(
        data[:, [cols[c] for c in x_names]],
        data[:, [cols[c] for c in w_names]] if w_names else np.zeros((len(data), 0)),
        {c: data[:, cols[c]] for c in manifest["y"]},
        x_names, w_names,
    )


@dataclass
class CvReport:
    scores: dict[str, float]            # candidate class -> mean validation score
    chosen: str
    folds: int
    metric: str = "mse"


# -- linear family ----------------------------------------------------


def _design(data: Dataset):
    return np.hstack([np.ones((data.rows, 1)), data.X, data.W])


def _as_linear(beta, data: Dataset, task=REGRESSION) -> LinearModel:
    n = data.X.shape[1]
    return LinearModel(float(beta[0]), beta[1:1 + n], beta[1 + n:], task)


def train_linear(data: Dataset, outcome: str, ridge: float = 0.0) -> LinearModel:
    """Closed-form least squares with optional ridge (intercept unpenalized)."""
    D = _design(data)
    y = data.outcome(outcome)
    if ridge < 0:
        raise ValueError("ridge penalty must be nonnegative")
    if ridge == 0.0 and np.linalg.matrix_rank(D) < D.shape[1]:
        raise SingularDesign("design matrix is rank deficient; use ridge > 0")
    reg = np.eye(D.shape[1]) * ridge
    reg[0, 0] = 0.0
    beta = np.linalg.solve(D.T @ D + reg + 1e-12 * np.eye(D.shape[1]), D.T @ y)
    return _as_linear(beta, data)


def _subgradient_fit(ncols, loss_grad, epochs, lr):
    """Decaying-step subgradient descent; returns the best averaged iterate."""
    beta = np.zeros(ncols)
    avg = beta.copy()
    best, best_loss = avg.copy(), math.inf
    for t in range(1, epochs + 1):
        loss, grad = loss_grad(beta)
        beta = beta - (lr / math.sqrt(t)) * grad
        avg = avg + (beta - avg) / t
        avg_loss, _ = loss_grad(avg)
        if avg_loss < best_loss:
            best_loss, best = avg_loss, avg.copy()
    return best


def train_svr(data: Dataset, outcome: str, eps: float = 0.1, C: float = 1.0,
              epochs: int = 300, lr: float = 0.1) -> LinearModel:
    """Linear epsilon-insensitive regression via subgradient descent."""
    D = _design(data)
    y = data.outcome(outcome)
    N = len(y)

    def loss_grad(beta):
        r = D @ beta - y
        excess = np.abs(r) - eps
        active = excess > 0
        loss = 0.5 * float(beta[1:] @ beta[1:]) + C / N * float(excess[active].sum())
        g = beta.copy()
        g[0] = 0.0
        if active.any():
            g = g + C / N * (np.sign(r[active]) @ D[active])
        return loss, g

    return _as_linear(_subgradient_fit(D.shape[1], loss_grad, epochs, lr), data)


def train_svc(data: Dataset, outcome: str, C: float = 1.0,
              epochs: int = 300, lr: float = 0.1) -> LinearModel:
    """Linear hinge-loss classifier via subgradient descent; labels in {0,1}."""
    y01 = data.outcome(outcome)
    if not np.all(np.isin(y01, (0.0, 1.0))):
        raise NotBinaryLabels(f"outcome {outcome!r} has labels outside {{0,1}}")
    D = _design(data)
    ypm = 2.0 * y01 - 1.0
    N = len(ypm)

    def loss_grad(beta):
        margins = ypm * (D @ beta)
        active = margins < 1.0
        loss = 0.5 * float(beta[1:] @ beta[1:]) + C / N * float((1.0 - margins[active]).sum())
        g = beta.copy()
        g[0] = 0.0
        if active.any():
            g = g - C / N * (ypm[active] @ D[active])
        return loss, g

    return _as_linear(_subgradient_fit(D.shape[1], loss_grad, epochs, lr), data, CLASSIFICATION)


# -- trees ------------------------------------------------------------


def _leaf_value(y, task):
    return float(np.mean(y))  # positive-class proportion doubles as the mean


def _impurity_gain(y_sorted, task):
    """Best split position over a pre-sorted outcome vector.

    Returns (position k meaning split after index k-1, total child impurity);
    SSE for regression, Gini (weighted) for classification.
    """
    N = len(y_sorted)
    csum = np.cumsum(y_sorted)
    total = csum[-1]
    kk = np.arange(1, N)
    left_sum = csum[:-1]
    right_sum = total - left_sum
    if task == REGRESSION:
        csq = np.cumsum(y_sorted ** 2)
        left_sse = csq[:-1] - left_sum ** 2 / kk
        right_sse = (csq[-1] - csq[:-1]) - right_sum ** 2 / (N - kk)
        return left_sse + right_sse
    pl = left_sum / kk
    pr = right_sum / (N - kk)
    return kk * 2 * pl * (1 - pl) + (N - kk) * 2 * pr * (1 - pr)


class _CartBuilder:
    def __init__(self, Z, y, task, max_depth, min_leaf, feature_rng=None,
                 feature_fraction=1.0):
        self.Z, self.y = Z, y
        self.task = task
        self.max_depth = max_depth
        self.min_leaf = max(1, int(min_leaf))
        self.rng = feature_rng
        self.ffrac = feature_fraction
        self.splits: list[TreeSplit] = []
        self.leaves: list[TreeLeaf] = []
        self.nfeat = Z.shape[1]

    def build(self):
        root = self._grow(np.arange(len(self.y)), 0, [])
        if not self.splits:
            # single leaf; normalize to the no-split representation
            self.leaves = [TreeLeaf(self.leaves[0].prediction, [])]
        return root

    def _candidate_features(self):
        if self.rng is None or self.ffrac >= 1.0:
            return np.arange(self.nfeat)
        k = max(1, int(round(self.ffrac * self.nfeat)))
        return np.sort(self.rng.choice(self.nfeat, size=k, replace=False))

    def _grow(self, idx, depth, path):
        y = self.y[idx]
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf or np.ptp(y) == 0.0:
            return self._leaf(y, path)
        best = None  # (score, feature, threshold, order, k)
        for f in self._candidate_features():
            vals = self.Z[idx, f]
            order = np.argsort(vals, kind="stable")
            vs = vals[order]
            if vs[0] == vs[-1]:
                continue
            scores = _impurity_gain(y[order], self.task)
            # valid positions: both children >= min_leaf and value changes
            kk = np.arange(1, len(idx))
            valid = (kk >= self.min_leaf) & (kk <= len(idx) - self.min_leaf)
            valid &= vs[1:] > vs[:-1]
            if not valid.any():
                continue
            masked = np.where(valid, scores, np.inf)
            k = int(np.argmin(masked))
            if best is None or masked[k] < best[0] - 1e-12:
                thr = 0.5 * (vs[k] + vs[k + 1])
                best = (float(masked[k]), f, thr, order, k + 1)
        if best is None:
            return self._leaf(y, path)
        _, f, thr, order, k = best
        split_id = len(self.splits)
        coef = np.zeros(self.nfeat)
        coef[f] = 1.0
        self.splits.append(TreeSplit(coef, np.zeros(0), thr, 0, 0))  # patched below
        left_idx = idx[order[:k]]
        right_idx = idx[order[k:]]
        left = self._grow(left_idx, depth + 1, path + [(split_id, "left")])
        right = self._grow(right_idx, depth + 1, path + [(split_id, "right")])
        self.splits[split_id].left = left
        self.splits[split_id].right = right
        return split_id

    def _leaf(self, y, path):
        self.leaves.append(TreeLeaf(_leaf_value(y, self.task), list(path)))
        return leaf_child(len(self.leaves) - 1)


def train_cart(data: Dataset, outcome: str, max_depth: int = 5,
               min_leaf: int = 1, task: str = REGRESSION, _rng=None,
               _feature_fraction: float = 1.0, _row_idx=None) -> TreeModel:
    """Greedy axis-parallel tree; SSE (regression) or Gini (classification).

    Split thresholds are midpoints between consecutive distinct sorted values.
    Splits run over the stacked (x, w) features; the coefficient vector is
    partitioned back into x and w parts.
    """
    Z = data.features()
    y = data.outcome(outcome)
    if _row_idx is not None:
        Z, y = Z[_row_idx], y[_row_idx]
    builder = _CartBuilder(Z, y, task, max_depth, min_leaf, _rng, _feature_fraction)
    builder.build()
    n = data.X.shape[1]
    splits = [TreeSplit(s.coef_x[:n], s.coef_x[n:], s.rhs, s.left, s.right)
              for s in builder.splits]
    return TreeModel(splits, builder.leaves, task)


def train_forest(data: Dataset, outcome: str, trees: int = 10, max_depth: int = 5,
                 bootstrap_fraction: float = 1.0, feature_fraction: float = 1.0,
                 seed: int = 0, min_leaf: int = 1,
                 task: str = REGRESSION) -> ForestModel:
    """Bagged CART forest; rows subsampled without replacement per tree."""
    rng = np.random.default_rng(seed)
    members = []
    N = data.rows
    for _ in range(trees):
        if bootstrap_fraction >= 1.0:
            idx = None
        else:
            k = max(2, int(round(bootstrap_fraction * N)))
            idx = np.sort(rng.choice(N, size=k, replace=False))
        members.append(train_cart(data, outcome, max_depth, min_leaf, task,
                                  _rng=rng if feature_fraction < 1.0 else None,
                                  _feature_fraction=feature_fraction,
                                  _row_idx=idx))
    return ForestModel(members, task)


def train_gbm(data: Dataset, outcome: str, trees: int = 20, max_depth: int = 3,
              learning_rate: float = 0.1, min_leaf: int = 1) -> GbmModel:
    """Least-squares boosting: constant bias then trees fit to residuals."""
    y = data.outcome(outcome)
    bias = float(np.mean(y))
    pred = np.full(len(y), bias)
    members, weights = [], []
    resid_name = "__residual__"
    for _ in range(trees):
        resid = y - pred
        d2 = Dataset(data.X, data.W, {resid_name: resid}, data.x_names, data.w_names)
        t = train_cart(d2, resid_name, max_depth, min_leaf)
        members.append(t)
        weights.append(learning_rate)
        Z = data.features()
        n = data.X.shape[1]
        tree_pred = np.array([t.predict(z[:n], z[n:]) for z in Z])
        pred = pred + learning_rate * tree_pred
    return GbmModel(members, np.asarray(weights), bias)


# -- neural network ---------------------------------------------------


def _init_mlp(n_in, widths, n_out, rng):
    sizes = [n_in] + list(widths) + [n_out]
    weights = [rng.normal(0.0, math.sqrt(2.0 / sizes[i]), size=(sizes[i + 1], sizes[i]))
               for i in range(len(sizes) - 1)]
    biases = [np.zeros(s) for s in sizes[1:]]
    return weights, biases


def mlp_loss_and_grad(weights, biases, Z, y, output="linear"):
    """Mean loss and gradients for a ReLU net: squared loss for a linear
    output, log loss for a sigmoid output."""
    N = len(y)
    acts = [Z.T]  # layer activations, columns are samples
    for W, b in zip(weights[:-1], biases[:-1]):
        acts.append(np.maximum(0.0, W @ acts[-1] + b[:, None]))
    out = weights[-1] @ acts[-1] + biases[-1][:, None]
    if output == "linear":
        pred = out[0]
        loss = 0.5 * float(np.mean((pred - y) ** 2))
        delta = ((pred - y) / N)[None, :]
    else:
        z = out[0]
        prob = 1.0 / (1.0 + np.exp(-z))
        loss = float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0) - z * y))
        delta = ((prob - y) / N)[None, :]
    gw, gb = [None] * len(weights), [None] * len(biases)
    for li in range(len(weights) - 1, -1, -1):
        gw[li] = delta @ acts[li].T
        gb[li] = delta.sum(axis=1)
        if li > 0:
            delta = (weights[li].T @ delta) * (acts[li] > 0)
    return loss, gw, gb


def train_mlp(data: Dataset, outcome: str, hidden=(8,), epochs: int = 500,
              lr: float = 0.05, seed: int = 0, task: str = REGRESSION) -> MlpModel:
    """Full-batch gradient descent on squared loss (regression) or log loss
    (sigmoid output for binary labels)."""
    Z = data.features()
    y = data.outcome(outcome)
    output = "linear" if task == REGRESSION else "sigmoid"
    if output == "sigmoid" and not np.all(np.isin(y, (0.0, 1.0))):
        raise NotBinaryLabels(f"outcome {outcome!r} has labels outside {{0,1}}")
    rng = np.random.default_rng(seed)
    weights, biases = _init_mlp(Z.shape[1], hidden, 1, rng)
    for _ in range(epochs):
        _, gw, gb = mlp_loss_and_grad(weights, biases, Z, y, output)
        weights = [W - lr * g for W, g in zip(weights, gw)]
        biases = [b - lr * g for b, g in zip(biases, gb)]
    return MlpModel(weights, biases, output)


# -- outcome binarization and model selection -------------------------


def binarize_outcome(data: Dataset, outcome: str, tau: float,
                     direction: str = "<=") -> Dataset:
    """Relabel a continuous outcome as the indicator of meeting the bound."""
    y = data.outcome(outcome)
    if direction == "<=":
        labels = (y <= tau).astype(float)
    elif direction == ">=":
        labels = (y >= tau).astype(float)
    else:
        raise ValueError("direction must be '<=' or '>='")
    out = dict(data.outcomes)
    out[outcome] = labels
    return Dataset(data.X, data.W, out, data.x_names, data.w_names)


# tie-break order: simpler classes win
CLASS_ORDER = ("linear", "svm", "cart", "rf", "gbm", "mlp")


def _fit_class(cls, data, outcome, task, seed, hyper):
    h = hyper.get(cls, {})
    if cls == "linear":
        if task == CLASSIFICATION:
            return train_svc(data, outcome, **h)
        return train_linear(data, outcome, **h)
    if cls == "svm":
        if task == CLASSIFICATION:
            return train_svc(data, outcome, **h)
        return train_svr(data, outcome, **h)
    if cls == "cart":
        return train_cart(data, outcome, task=task, **h)
    if cls == "rf":
        return train_forest(data, outcome, seed=seed, task=task, **h)
    if cls == "gbm":
        return train_gbm(data, outcome, **h)
    if cls == "mlp":
        return train_mlp(data, outcome, seed=seed, task=task, **h)
    raise ValueError(f"unknown candidate class {cls!r}")


def _model_kind(cls):
    return {"linear": "linear", "svm": "linear", "cart": "tree",
            "rf": "forest", "gbm": "gbm", "mlp": "mlp"}[cls]


def _predict_rows(kind, model, data: Dataset, task):
    n = data.X.shape[1]
    Z = data.features()
    pm_like_margin = kind == "linear" and task == CLASSIFICATION
    preds = np.empty(len(Z))
    for i, z in enumerate(Z):
        x, w = z[:n], z[n:]
        if kind == "linear":
            margin = model.margin(x, w)
            preds[i] = (1.0 if margin >= 0 else 0.0) if pm_like_margin else margin
        else:
            preds[i] = model.predict(x, w)
    if task == CLASSIFICATION and kind in ("tree", "forest", "mlp"):
        preds = (preds >= 0.5).astype(float)
    return preds


def select_model(data: Dataset, outcome: str, candidates=CLASS_ORDER,
                 k_folds: int = 5, seed: int = 0, task: str = REGRESSION,
                 hyper: dict | None = None) -> tuple[PredictiveModel, CvReport]:
    """K-fold cross-validated class selection, refit on the full data.

    Score is validation MSE for regression, misclassification rate for
    classification.  Fold split is a seeded permutation; ties go to the
    simpler class per ``CLASS_ORDER``.
    """
    if k_folds < 2:
        raise ValueError("need at least two folds")
    hyper = hyper or {}
    N = data.rows
    k_folds = min(k_folds, N)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(N)
    folds = [perm[i::k_folds] for i in range(k_folds)]
    scores = {}
    for cls in candidates:
        errs = []
        for fi in range(k_folds):
            val_idx = np.sort(folds[fi])
            train_idx = np.sort(np.concatenate([folds[j] for j in range(k_folds) if j != fi]))
            if len(train_idx) < 2:
                train_idx = np.sort(perm)  # leave-one-out on tiny data
            sub = data.subset(train_idx)
            model = _fit_class(cls, sub, outcome, task, seed, hyper)
            val = data.subset(val_idx) if len(val_idx) >= 2 else data.subset(
                np.concatenate([val_idx, val_idx]))
            preds = _predict_rows(_model_kind(cls), model, val, task)
            truth = val.outcome(outcome)
            if task == REGRESSION:
                errs.append(float(np.mean((preds - truth) ** 2)))
            else:
                errs.append(float(np.mean(preds != truth)))
        scores[cls] = float(np.mean(errs))
    best = min(scores.values())
    chosen = next(c for c in CLASS_ORDER if c in scores and scores[c] <= best + 1e-15)
    final = _fit_class(chosen, data, outcome, task, seed, hyper)
    pm = PredictiveModel(_model_kind(chosen), final, data.feature_space(), outcome)
    metric = "mse" if task == REGRESSION else "misclassification"
    return pm, CvReport(scores, chosen, k_folds, metric)
