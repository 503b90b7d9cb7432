"""Shared builders for random models, datasets and embedding problems."""

import numpy as np
import pytest

from optembed import pipeline as pl
from optembed.mio import MioModel, solve_mip
from optembed.models import (FeatureSpace, LinearModel, MlpModel,
                             PredictiveModel, predict)
from optembed.training import Dataset


def make_space(n, lo=-1.0, hi=1.0):
    return FeatureSpace([f"x{i}" for i in range(n)], [],
                        np.full(n, lo), np.full(n, hi),
                        np.zeros(0), np.zeros(0))


def random_dataset(rng, n=3, rows=60, outcome="y"):
    """Box-sampled features with a smooth nonlinear outcome."""
    X = rng.uniform(-1.0, 1.0, size=(rows, n))
    coef = rng.normal(size=n)
    y = np.tanh(X @ coef) + 0.3 * np.sin(3.0 * X[:, 0]) \
        + 0.05 * rng.normal(size=rows)
    return Dataset(X, np.zeros((rows, 0)), {outcome: y},
                   [f"x{i}" for i in range(n)], [])


def random_mlp(rng, n, widths=(4,), n_out=1, output="linear"):
    sizes = [n] + list(widths) + [n_out]
    weights = [rng.normal(0.0, 1.0, size=(sizes[i + 1], sizes[i]))
               for i in range(len(sizes) - 1)]
    biases = [rng.normal(0.0, 0.3, size=s) for s in sizes[1:]]
    return MlpModel(weights, biases, output)


def box_model(n, lo=-1.0, hi=1.0):
    mio = MioModel()
    x_ids = [mio.add_variable(f"x{i}", lo, hi) for i in range(n)]
    return mio, x_ids


def optimize_with_outcome(mio, x_ids, outcome_var, rng, outcome_weight=None):
    """Random linear objective over x plus a +/-1 pull on the outcome
    variable (the hard fidelity case: the optimizer exploits any slack
    between the embedding and the prediction rule)."""
    obj = {i: float(c) for i, c in zip(x_ids, rng.normal(size=len(x_ids)))}
    if outcome_var is not None:
        obj[outcome_var] = float(rng.choice([-1.0, 1.0])) \
            if outcome_weight is None else outcome_weight
    mio.set_objective(obj)
    return solve_mip(mio)


def solve_problem(pm, binding, objective_rng, lo=-1.0, hi=1.0):
    """Assemble a box problem around one predictive model and solve under
    a random linear objective including the bound outcome."""
    space = pm.space
    variables = [pl.VarSpec(nm, float(l), float(h)) for nm, l, h in
                 zip(space.x_names, space.x_lower, space.x_upper)]
    obj = {nm: float(c) for nm, c in
           zip(space.x_names, objective_rng.normal(size=space.n))}
    problem = pl.ConceptualProblem(variables, np.zeros(0), [], obj,
                                   [(pm, binding)])
    return problem, pl.solve(problem)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
