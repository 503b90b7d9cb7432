"""Data-driven trust regions.

Convex hull constraints in barycentric form, k-means clustering for
union-of-hulls regions, and an LP-based membership test with certificates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mio import BINARY, EQ, GE, LE, MioModel, solve_lp

SINGLE_HULL = "single-hull"
UNION_OF_HULLS = "union-of-hulls"
NO_REGION = "none"


@dataclass
class PointSet:
    Z: np.ndarray  # N x d

    def __post_init__(self):
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if self.Z.shape[0] < 1:
            raise ValueError("point set is empty")
        if not np.all(np.isfinite(self.Z)):
            raise ValueError("point set has non-finite entries")

    @property
    def count(self) -> int:
        return self.Z.shape[0]

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    def deduplicated(self) -> "PointSet":
        _, idx = np.unique(self.Z, axis=0, return_index=True)
        return PointSet(self.Z[np.sort(idx)])


@dataclass
class Clustering:
    assignment: np.ndarray  # one cluster index per row
    centroids: np.ndarray   # K x d, in original coordinates

    @property
    def k(self) -> int:
        return len(self.centroids)

    def members(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


@dataclass
class TrustRegionSpec:
    points: PointSet | None = None
    policy: str = NO_REGION          # single-hull | union-of-hulls | none
    clusters: int = 1
    seed: int = 0
    scope: str = "joint"             # joint (x, w) | x-only

    def __post_init__(self):
        if self.policy == UNION_OF_HULLS and self.clusters < 1:
            raise ValueError("union-of-hulls needs K >= 1")
        if self.policy != NO_REGION and self.points is None:
            raise ValueError(f"policy {self.policy!r} needs a point set")


@dataclass
class HullArtifacts:
    lambda_ids: list[int]
    cluster_ids: list[int]           # empty for a single hull
    row_ids: list[int]
    point_rows: np.ndarray           # deduplicated rows actually attached
    cluster_of_lambda: np.ndarray | None = None


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
           tol: float = 1e-8) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding on min-max scaled data.

    Deterministic for a fixed seed; empty clusters are repaired by
    reseeding to the point farthest from its current centroid.
    """
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    N = Z.shape[0]
    if k > N:
        raise ValueError(f"K={k} exceeds the number of points {N}")
    rng = np.random.default_rng(seed)
    span = np.ptp(Z, axis=0)
    span[span == 0.0] = 1.0
    S = (Z - Z.min(axis=0)) / span

    # k-means++ seeding
    centers = np.empty((k, S.shape[1]))
    centers[0] = S[rng.integers(N)]
    d2 = np.sum((S - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = S[rng.integers(N)]
        else:
            centers[j] = S[rng.choice(N, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((S - centers[j]) ** 2, axis=1))

    assign = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        dist = np.sum((S[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        assign = np.argmin(dist, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = S[members].mean(axis=0)
            else:
                far = int(np.argmax(np.sum((S - centers[assign]) ** 2, axis=1)))
                new_centers[j] = S[far]
                assign[far] = j
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if shift < tol:
            break
    centroids = np.vstack([Z[assign == j].mean(axis=0) for j in range(k)])
    return Clustering(assign, centroids)


def attach_hull(mio: MioModel, points, var_ids, w_fixed=None,
                name="hull") -> HullArtifacts:
    """Constrain the ``var_ids`` variables to the convex hull of ``points``.

    ``points`` rows may carry trailing contextual columns beyond
    ``len(var_ids)``; those components of the linking rows are pinned to
    ``w_fixed`` (joint-scope hull with the query context fixed).
    """
    ps = PointSet(points).deduplicated()
    Z = ps.Z
    nx = len(var_ids)
    if w_fixed is None:
        w_fixed = np.zeros(0)
    w_fixed = np.asarray(w_fixed, dtype=float)
    if Z.shape[1] != nx + len(w_fixed):
        raise ValueError("point dimension does not match var_ids plus w_fixed")
    lams = [mio.add_variable(f"{name}_lam{i}", 0.0, np.inf) for i in range(len(Z))]
    rows = []
    for j in range(nx):
        coeffs = {lams[i]: Z[i, j] for i in range(len(Z))}
        coeffs[var_ids[j]] = coeffs.get(var_ids[j], 0.0) - 1.0
        rows.append(mio.add_constraint(coeffs, EQ, 0.0, name=f"{name}_link{j}"))
    for j in range(len(w_fixed)):
        coeffs = {lams[i]: Z[i, nx + j] for i in range(len(Z))}
        rows.append(mio.add_constraint(coeffs, EQ, float(w_fixed[j]),
                                       name=f"{name}_ctx{j}"))
    rows.append(mio.add_constraint({l: 1.0 for l in lams}, EQ, 1.0,
                                   name=f"{name}_convexity"))
    return HullArtifacts(lams, [], rows, Z)


def attach_union_of_hulls(mio: MioModel, points, var_ids, clustering: Clustering,
                          w_fixed=None, name="uhull") -> HullArtifacts:
    """Union-of-cluster-hulls region: one binary per cluster, per-cluster
    convexity rows, exactly one cluster active."""
    ps = PointSet(points)
    Z = ps.Z
    nx = len(var_ids)
    if w_fixed is None:
        w_fixed = np.zeros(0)
    w_fixed = np.asarray(w_fixed, dtype=float)
    if Z.shape[1] != nx + len(w_fixed):
        raise ValueError("point dimension does not match var_ids plus w_fixed")
    K = clustering.k
    lams = [mio.add_variable(f"{name}_lam{i}", 0.0, np.inf) for i in range(len(Z))]
    us = [mio.add_variable(f"{name}_u{k}", 0.0, 1.0, BINARY) for k in range(K)]
    rows = []
    for j in range(nx):
        coeffs = {lams[i]: Z[i, j] for i in range(len(Z))}
        coeffs[var_ids[j]] = coeffs.get(var_ids[j], 0.0) - 1.0
        rows.append(mio.add_constraint(coeffs, EQ, 0.0, name=f"{name}_link{j}"))
    for j in range(len(w_fixed)):
        coeffs = {lams[i]: Z[i, nx + j] for i in range(len(Z))}
        rows.append(mio.add_constraint(coeffs, EQ, float(w_fixed[j]),
                                       name=f"{name}_ctx{j}"))
    for k in range(K):
        coeffs = {lams[i]: 1.0 for i in clustering.members(k)}
        coeffs[us[k]] = -1.0
        rows.append(mio.add_constraint(coeffs, EQ, 0.0, name=f"{name}_conv{k}"))
    rows.append(mio.add_constraint({u: 1.0 for u in us}, EQ, 1.0,
                                   name=f"{name}_onecluster"))
    return HullArtifacts(lams, us, rows, Z, clustering.assignment.copy())


def hull_membership(points, query, tol: float = 1e-7):
    """LP membership test against CH(points).

    Returns ``(True, lam)`` with a barycentric certificate, or
    ``(False, residual)`` with the best-achievable reconstruction gap.
    """
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    q = np.asarray(query, dtype=float)
    N, d = Z.shape
    scale = 1.0 + float(np.max(np.abs(Z)))
    mio = MioModel()
    lams = [mio.add_variable(f"lam{i}", 0.0, np.inf) for i in range(N)]
    # elastic linking rows: minimizing total slack yields either an exact
    # certificate or the least-infeasible reconstruction
    slack_pos = [mio.add_variable(f"sp{j}", 0.0, np.inf) for j in range(d)]
    slack_neg = [mio.add_variable(f"sn{j}", 0.0, np.inf) for j in range(d)]
    for j in range(d):
        coeffs = {lams[i]: Z[i, j] for i in range(N)}
        coeffs[slack_pos[j]] = 1.0
        coeffs[slack_neg[j]] = -1.0
        mio.add_constraint(coeffs, EQ, float(q[j]))
    mio.add_constraint({l: 1.0 for l in lams}, EQ, 1.0)
    mio.set_objective({v: 1.0 for v in slack_pos + slack_neg})
    sol = solve_lp(mio)
    if sol.status != "optimal":
        return False, np.inf
    residual = sol.objective
    if residual <= tol * scale:
        lam = sol.primal[:N]
        lam = np.maximum(lam, 0.0)
        lam = lam / lam.sum()
        return True, lam
    return False, residual
