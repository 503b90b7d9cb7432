"""Trainer sanity, cross-validated selection and dataset loading."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from optembed.errors import NotBinaryLabels, SchemaError, SingularDesign
from optembed.models import predict
from optembed.training import (CLASS_ORDER, Dataset, binarize_outcome,
                               load_dataset, select_model, train_cart,
                               train_forest, train_gbm, train_linear,
                               train_mlp, train_svc, train_svr)


def test_linear_recovers_exact_coefficients(rng):
    X = rng.uniform(-1, 1, size=(50, 3))
    y = 1.5 + X @ np.array([2.0, -1.0, 0.5])
    data = Dataset(X, np.zeros((50, 0)), {"y": y}, ["a", "b", "c"], [])
    m = train_linear(data, "y")
    assert m.intercept == pytest.approx(1.5, abs=1e-6)
    assert np.allclose(m.beta_x, [2.0, -1.0, 0.5], atol=1e-6)


def test_linear_rank_deficient_needs_ridge(rng):
    X = np.hstack([rng.uniform(-1, 1, size=(30, 1))] * 2)  # duplicate column
    data = Dataset(X, np.zeros((30, 0)), {"y": X[:, 0]}, ["a", "b"], [])
    with pytest.raises(SingularDesign):
        train_linear(data, "y")
    m = train_linear(data, "y", ridge=1e-6)
    assert m.beta_x[0] + m.beta_x[1] == pytest.approx(1.0, abs=1e-3)


def test_svr_tracks_a_linear_signal(rng):
    X = rng.uniform(-1, 1, size=(80, 2))
    y = X @ np.array([1.0, -2.0])
    data = Dataset(X, np.zeros((80, 0)), {"y": y}, ["a", "b"], [])
    m = train_svr(data, "y", C=20.0, epochs=400)
    preds = X @ m.beta_x + m.intercept
    assert float(np.mean((preds - y) ** 2)) < 0.2


def test_svc_separates_a_half_space(rng):
    X = rng.uniform(-1, 1, size=(120, 2))
    labels = (X @ np.array([1.0, 1.0]) >= 0.2).astype(float)
    data = Dataset(X, np.zeros((120, 0)), {"y": labels}, ["a", "b"], [])
    m = train_svc(data, "y", C=20.0, epochs=400)
    preds = (X @ m.beta_x + m.intercept >= 0).astype(float)
    assert float(np.mean(preds == labels)) > 0.9


def test_svc_rejects_nonbinary_labels(rng):
    data = random_dataset(rng)
    with pytest.raises(NotBinaryLabels):
        train_svc(data, "y")


def test_cart_fits_training_data_at_full_depth(rng):
    X = rng.uniform(-1, 1, size=(40, 2))
    y = (X[:, 0] > 0).astype(float) * 2.0 + (X[:, 1] > 0.3)
    data = Dataset(X, np.zeros((40, 0)), {"y": y}, ["a", "b"], [])
    tree = train_cart(data, "y", max_depth=8)
    preds = np.array([tree.predict(x, np.zeros(0)) for x in X])
    assert float(np.mean((preds - y) ** 2)) < 1e-9


def test_cart_respects_max_depth(rng):
    data = random_dataset(rng, rows=100)
    tree = train_cart(data, "y", max_depth=3)
    assert all(len(leaf.path) <= 3 for leaf in tree.leaves)
    assert len(tree.leaves) <= 8


def test_forest_and_gbm_reduce_training_error(rng):
    data = random_dataset(rng, rows=120)
    y = data.outcome("y")
    base = float(np.var(y))
    for model in (train_forest(data, "y", trees=8, max_depth=4, seed=0),
                  train_gbm(data, "y", trees=25, max_depth=3)):
        preds = np.array([model.predict(x, np.zeros(0)) for x in data.X])
        assert float(np.mean((preds - y) ** 2)) < 0.5 * base


def test_mlp_learns_a_smooth_function(rng):
    X = rng.uniform(-1, 1, size=(150, 2))
    y = np.tanh(X @ np.array([1.0, -1.0]))
    data = Dataset(X, np.zeros((150, 0)), {"y": y}, ["a", "b"], [])
    m = train_mlp(data, "y", hidden=(8,), epochs=800, seed=0)
    preds = np.array([m.predict(x, np.zeros(0)) for x in X])
    assert float(np.mean((preds - y) ** 2)) < 0.1 * float(np.var(y))


@given(st.floats(min_value=-0.8, max_value=0.8),
       st.sampled_from(["<=", ">="]))
@settings(max_examples=20, deadline=None)
def test_binarize_outcome_is_the_indicator(tau, direction):
    rng = np.random.default_rng(0)
    data = random_dataset(rng)
    out = binarize_outcome(data, "y", tau, direction)
    y = data.outcome("y")
    want = (y <= tau) if direction == "<=" else (y >= tau)
    assert np.array_equal(out.outcome("y"), want.astype(float))
    # original dataset untouched
    assert not np.all(np.isin(data.outcome("y"), (0.0, 1.0)))


def test_select_model_prefers_the_true_class(rng):
    X = rng.uniform(-1, 1, size=(80, 2))
    y = 2.0 * X[:, 0] - X[:, 1] + 0.01 * rng.normal(size=80)
    data = Dataset(X, np.zeros((80, 0)), {"y": y}, ["a", "b"], [])
    pm, cv = select_model(data, "y", candidates=("linear", "cart"), k_folds=4)
    assert cv.chosen == "linear"
    assert pm.kind == "linear"
    assert set(cv.scores) == {"linear", "cart"}
    assert cv.metric == "mse"


def test_select_model_classification(rng):
    X = rng.uniform(-1, 1, size=(80, 2))
    labels = (X[:, 0] + X[:, 1] >= 0).astype(float)
    data = Dataset(X, np.zeros((80, 0)), {"y": labels}, ["a", "b"], [])
    pm, cv = select_model(data, "y", candidates=("linear", "cart"),
                          k_folds=4, task="classification")
    assert cv.metric == "misclassification"
    assert min(cv.scores.values()) <= 0.2
    preds = [predict(pm, x) for x in X[:10]]
    assert set(preds) <= {0.0, 1.0}


def test_select_model_ties_go_to_the_simpler_class(rng):
    # constant outcome: every class scores identically
    X = rng.uniform(-1, 1, size=(30, 2))
    data = Dataset(X, np.zeros((30, 0)), {"y": np.full(30, 2.0)},
                   ["a", "b"], [])
    _, cv = select_model(data, "y", candidates=("cart", "linear"), k_folds=3)
    assert CLASS_ORDER.index(cv.chosen) <= CLASS_ORDER.index("cart")


def test_load_dataset_roles(tmp_path):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("a,b,ctx,out\n1,2,9,0.5\n3,4,8,0.7\n5,6,7,0.9\n")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"x": ["a", "b"], "w": ["ctx"],
                                    "y": ["out"]}))
    data = load_dataset(csv_path, manifest)
    assert data.X.shape == (3, 2)
    assert data.W.shape == (3, 1)
    assert np.array_equal(data.outcome("out"), [0.5, 0.7, 0.9])
    assert data.x_names == ["a", "b"] and data.w_names == ["ctx"]


def test_load_dataset_bad_manifest(tmp_path):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("a,out\n1,2\n3,4\n")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"x": ["a"]}))
    with pytest.raises(SchemaError):
        load_dataset(csv_path, manifest)
    manifest.write_text(json.dumps({"x": ["missing"], "y": ["out"]}))
    with pytest.raises(SchemaError):
        load_dataset(csv_path, manifest)
