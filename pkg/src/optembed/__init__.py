"""Constraint-learning optimization: trained predictive models embedded
as mixed-integer linear constraints, with data-driven trust regions.

Typical flow: fit a model (`training`), describe the decision problem
(`pipeline.ConceptualProblem`), let `pipeline.solve` embed and optimize,
and audit the result against the model's own `models.predict`.
"""

__version__ = "0.1.0"

__all__ = [
    "cli",
    "columns",
    "embedding",
    "errors",
    "hull",
    "lp_io",
    "mio",
    "models",
    "pipeline",
    "training",
    "wfp",
]
