"""Portable representations of trained predictive models.

Five model shapes (linear, tree, forest, boosted ensemble, ReLU network)
share one tagged wrapper, :class:`PredictiveModel`.  ``predict`` is the
reference implementation of each shape's prediction rule and serves as
the fidelity oracle for the embedding layer.  Documents are versioned
JSON; see ``docs`` in the README for the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, SchemaError

DOCUMENT_VERSION = 1

REGRESSION = "regression"
CLASSIFICATION = "classification"

# child encoding inside a tree: >= 0 is a split index, negative is ~leaf_index
def child_is_leaf(child: int) -> bool:
    return child < 0


def leaf_index(child: int) -> int:
    return ~child


def leaf_child(idx: int) -> int:
    return ~idx


@dataclass
class FeatureSpace:
    x_names: list[str]
    w_names: list[str]
    x_lower: np.ndarray
    x_upper: np.ndarray
    w_lower: np.ndarray
    w_upper: np.ndarray

    def __post_init__(self):
        self.x_lower = np.asarray(self.x_lower, dtype=float)
        self.x_upper = np.asarray(self.x_upper, dtype=float)
        self.w_lower = np.asarray(self.w_lower, dtype=float)
        self.w_upper = np.asarray(self.w_upper, dtype=float)
        if self.n < 1:
            raise ValueError("need at least one decision feature")
        for arr in (self.x_lower, self.x_upper, self.w_lower, self.w_upper):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError("feature bounds must be finite")

    @property
    def n(self) -> int:
        return len(self.x_names)

    @property
    def p(self) -> int:
        return len(self.w_names)

    @classmethod
    def from_data(cls, x_names, X, w_names=(), W=None):
        X = np.asarray(X, dtype=float)
        if W is None:
            W = np.zeros((X.shape[0], 0))
        W = np.asarray(W, dtype=float)
        return cls(list(x_names), list(w_names),
                   X.min(axis=0), X.max(axis=0),
                   W.min(axis=0) if W.size else np.zeros(0),
                   W.max(axis=0) if W.size else np.zeros(0))


@dataclass
class LinearModel:
    intercept: float
    beta_x: np.ndarray
    beta_w: np.ndarray
    task: str = REGRESSION

    def __post_init__(self):
        self.beta_x = np.asarray(self.beta_x, dtype=float)
        self.beta_w = np.asarray(self.beta_w, dtype=float)

    def margin(self, x, w):
        return self.intercept + float(self.beta_x @ x) + float(self.beta_w @ w)


@dataclass
class TreeSplit:
    coef_x: np.ndarray
    coef_w: np.ndarray
    rhs: float
    left: int
    right: int

    def __post_init__(self):
        self.coef_x = np.asarray(self.coef_x, dtype=float)
        self.coef_w = np.asarray(self.coef_w, dtype=float)

    def value(self, x, w):
        return float(self.coef_x @ x) + float(self.coef_w @ w)


@dataclass
class TreeLeaf:
    prediction: float
    path: list[tuple[int, str]]  # (split index, "left"|"right")


@dataclass
class TreeModel:
    splits: list[TreeSplit]
    leaves: list[TreeLeaf]
    task: str = REGRESSION

    def apply(self, x, w) -> int:
        """Index of the leaf reached by (x, w)."""
        if not self.splits:
            return 0
        child = 0
        while True:
            node = self.splits[child]
            child = node.left if node.value(x, w) <= node.rhs else node.right
            if child_is_leaf(child):
                return leaf_index(child)

    def predict(self, x, w) -> float:
        return self.leaves[self.apply(x, w)].prediction


@dataclass
class ForestModel:
    trees: list[TreeModel]
    task: str = REGRESSION

    def predict(self, x, w) -> float:
        return sum(t.predict(x, w) for t in self.trees) / len(self.trees)


@dataclass
class GbmModel:
    trees: list[TreeModel]
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def predict(self, x, w) -> float:
        return self.bias + sum(b * t.predict(x, w)
                               for b, t in zip(self.weights, self.trees))


@dataclass
class MlpModel:
    weights: list[np.ndarray]   # per layer, shape (out, in)
    biases: list[np.ndarray]    # per layer, shape (out,)
    output: str = "linear"      # linear | sigmoid | argmax
    # per hidden node pre-activation bounds, filled by the embedding layer
    act_lower: list[np.ndarray] | None = None
    act_upper: list[np.ndarray] | None = None

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) < 2:
            raise ValueError("need at least one hidden layer")
        for W, b in zip(self.weights, self.biases):
            if W.shape[0] != b.shape[0]:
                raise ValueError("weight/bias shape mismatch")
        for W1, W2 in zip(self.weights, self.weights[1:]):
            if W2.shape[1] != W1.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")

    @property
    def hidden_count(self) -> int:
        return len(self.weights) - 1

    def forward(self, x, w):
        """Hidden activations per layer plus raw output-layer values."""
        v = np.concatenate([np.asarray(x, float), np.asarray(w, float)])
        hidden = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            v = np.maximum(0.0, W @ v + b)
            hidden.append(v)
        out = self.weights[-1] @ v + self.biases[-1]
        return hidden, out

    def predict(self, x, w) -> float:
        _, out = self.forward(x, w)
        if self.output == "linear":
            return float(out[0])
        if self.output == "sigmoid":
            return float(1.0 / (1.0 + math.exp(-float(out[0]))))
        if self.output == "argmax":
            return float(int(np.argmax(out)))
        raise ValueError(f"unknown output kind {self.output!r}")


_SHAPES = {
    "linear": LinearModel,
    "tree": TreeModel,
    "forest": ForestModel,
    "gbm": GbmModel,
    "mlp": MlpModel,
}


@dataclass
class PredictiveModel:
    kind: str
    model: object
    space: FeatureSpace
    outcome: str = "y"

    def __post_init__(self):
        if self.kind not in _SHAPES:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not isinstance(self.model, _SHAPES[self.kind]):
            raise ValueError(f"model shape does not match kind {self.kind!r}")


def predict(pm: PredictiveModel, x, w=()) -> float:
    """Reference prediction; the oracle for every embedding-fidelity test."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (pm.space.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({pm.space.n},)")
    if w.shape != (pm.space.p,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({pm.space.p},)")
    m = pm.model
    if pm.kind == "linear":
        margin = m.margin(x, w)
        if m.task == CLASSIFICATION:
            return 1.0 if margin >= 0.0 else 0.0
        return margin
    return m.predict(x, w)


# -- serialization ----------------------------------------------------


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _tree_doc(t: TreeModel):
    return {
        "task": t.task,
        "splits": [
            {"coef_x": _arr(s.coef_x), "coef_w": _arr(s.coef_w), "rhs": s.rhs,
             "left": s.left, "right": s.right}
            for s in t.splits
        ],
        "leaves": [
            {"prediction": lf.prediction, "path": [[i, side] for i, side in lf.path]}
            for lf in t.leaves
        ],
    }


def _tree_from_doc(doc):
    try:
        splits = [TreeSplit(s["coef_x"], s["coef_w"], float(s["rhs"]),
                            int(s["left"]), int(s["right"])) for s in doc["splits"]]
        leaves = [TreeLeaf(float(lf["prediction"]),
                           [(int(i), str(side)) for i, side in lf["path"]])
                  for lf in doc["leaves"]]
        return TreeModel(splits, leaves, doc.get("task", REGRESSION))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed tree document: {exc}") from exc


def serialize(pm: PredictiveModel) -> dict:
    """Lossless JSON-compatible document for a trained model."""
    sp = pm.space
    doc = {
        "version": DOCUMENT_VERSION,
        "kind": pm.kind,
        "outcome": pm.outcome,
        "space": {
            "x_names": sp.x_names, "w_names": sp.w_names,
            "x_lower": _arr(sp.x_lower), "x_upper": _arr(sp.x_upper),
            "w_lower": _arr(sp.w_lower), "w_upper": _arr(sp.w_upper),
        },
    }
    m = pm.model
    if pm.kind == "linear":
        doc["linear"] = {"intercept": m.intercept, "beta_x": _arr(m.beta_x),
                         "beta_w": _arr(m.beta_w), "task": m.task}
    elif pm.kind == "tree":
        doc["tree"] = _tree_doc(m)
    elif pm.kind == "forest":
        doc["forest"] = {"task": m.task, "trees": [_tree_doc(t) for t in m.trees]}
    elif pm.kind == "gbm":
        doc["gbm"] = {"bias": m.bias, "weights": _arr(m.weights),
                      "trees": [_tree_doc(t) for t in m.trees]}
    else:
        doc["mlp"] = {
            "output": m.output,
            "layers": [{"weight": [_arr(row) for row in W], "bias": _arr(b)}
                       for W, b in zip(m.weights, m.biases)],
        }
    return doc


def deserialize(doc: dict) -> PredictiveModel:
    if not isinstance(doc, dict):
        raise SchemaError("document must be a mapping")
    if doc.get("version") != DOCUMENT_VERSION:
        raise SchemaError(f"unsupported document version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind not in _SHAPES:
        raise SchemaError(f"unknown model kind {kind!r}")
    try:
        sp = doc["space"]
        space = FeatureSpace(list(sp["x_names"]), list(sp["w_names"]),
                             sp["x_lower"], sp["x_upper"],
                             sp["w_lower"], sp["w_upper"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed feature space: {exc}") from exc
    body = doc.get(kind)
    if body is None:
        raise SchemaError(f"missing body for kind {kind!r}")
    try:
        if kind == "linear":
            model = LinearModel(float(body["intercept"]), body["beta_x"],
                                body["beta_w"], body.get("task", REGRESSION))
        elif kind == "tree":
            model = _tree_from_doc(body)
        elif kind == "forest":
            model = ForestModel([_tree_from_doc(t) for t in body["trees"]],
                                body.get("task", REGRESSION))
        elif kind == "gbm":
            model = GbmModel([_tree_from_doc(t) for t in body["trees"]],
                             body["weights"], float(body["bias"]))
        else:
            layers = body["layers"]
            weights, biases = [], []
            for li, layer in enumerate(layers):
                if "weight" not in layer:
                    raise SchemaError(f"layer {li}: missing weight matrix")
                weights.append(np.asarray(layer["weight"], dtype=float))
                biases.append(np.asarray(layer.get("bias", ()), dtype=float))
            model = MlpModel(weights, biases, body.get("output", "linear"))
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed {kind} body: {exc}") from exc
    return PredictiveModel(kind, model, space, doc.get("outcome", "y"))


def save_model(pm: PredictiveModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(serialize(pm), fh, indent=1)


def load_model(path) -> PredictiveModel:
    with open(path) as fh:
        return deserialize(json.load(fh))
