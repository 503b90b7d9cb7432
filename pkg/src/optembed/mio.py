"""Mixed-binary linear programming core.

A small exact solver: revised simplex with bounded variables (two phases,
artificial start basis) that reports duals and reduced costs, plus a
best-first branch-and-bound layer for binary variables.  Dense numpy
factorizations throughout; sized for desk-scale models.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure, TimeLimitError, UnboundedError

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="

INF = math.inf

# Solver tolerances.  The source material never states any, so these are
# fixed here and referenced by the test-suite.
FEAS_TOL = 1e-7
INT_TOL = 1e-6
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
PERTURB_EPS = 1e-8
REFACTOR_EVERY = 64


@dataclass
class Variable:
    id: int
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = INF
    name: str = ""

    def __post_init__(self):
        if not math.isfinite(self.lower):
            raise ValueError(f"variable {self.name!r}: lower bound must be finite")
        if self.lower > self.upper:
            raise ValueError(f"variable {self.name!r}: lower > upper")
        if self.kind == BINARY and not (self.lower >= 0.0 and self.upper <= 1.0):
            raise ValueError(f"variable {self.name!r}: binary bounds outside [0,1]")


@dataclass
class LinearConstraint:
    coefficients: list[tuple[int, float]]
    sense: str
    rhs: float
    name: str = ""

    def __post_init__(self):
        if self.sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {self.sense!r}")
        seen = set()
        for vid, coef in self.coefficients:
            if vid in seen:
                raise ValueError(f"constraint {self.name!r}: duplicate variable id {vid}")
            seen.add(vid)
            if not math.isfinite(coef):
                raise ValueError(f"constraint {self.name!r}: non-finite coefficient")
        if not math.isfinite(self.rhs):
            raise ValueError(f"constraint {self.name!r}: non-finite rhs")


class MioModel:
    """Variables, linear constraints and a linear minimization objective."""

    def __init__(self):
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant: float = 0.0

    # -- construction -------------------------------------------------

    def add_variable(self, name="", lower=0.0, upper=INF, kind=CONTINUOUS) -> int:
        vid = len(self.variables)
        if not name:
            name = f"v{vid}"
        self.variables.append(Variable(vid, kind, float(lower), float(upper), name))
        return vid

    def add_constraint(self, coefficients, sense, rhs, name="") -> int:
        if isinstance(coefficients, dict):
            coefficients = sorted(coefficients.items())
        coefficients = [(int(v), float(c)) for v, c in coefficients if c != 0.0]
        if not name:
            name = f"c{len(self.constraints)}"
        con = LinearConstraint(coefficients, sense, float(rhs), name)
        for vid, _ in con.coefficients:
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"constraint {name!r}: unknown variable id {vid}")
        self.constraints.append(con)
        return len(self.constraints) - 1

    def set_objective(self, coefficients, constant=0.0):
        if isinstance(coefficients, dict):
            items = coefficients.items()
        else:
            items = coefficients
        self.objective = {}
        for vid, coef in items:
            vid = int(vid)
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"objective references unknown variable id {vid}")
            if coef != 0.0:
                self.objective[vid] = self.objective.get(vid, 0.0) + float(coef)
        self.objective_constant = float(constant)

    def add_objective_term(self, vid, coef):
        if not 0 <= vid < len(self.variables):
            raise ValueError(f"objective references unknown variable id {vid}")
        new = self.objective.get(vid, 0.0) + float(coef)
        if new == 0.0:
            self.objective.pop(vid, None)
        else:
            self.objective[vid] = new

    @property
    def binary_ids(self):
        return [v.id for v in self.variables if v.kind == BINARY]

    def objective_value(self, primal) -> float:
        return self.objective_constant + sum(c * primal[v] for v, c in self.objective.items())

    def copy(self) -> "MioModel":
        m = MioModel()
        m.variables = [Variable(v.id, v.kind, v.lower, v.upper, v.name) for v in self.variables]
        m.constraints = [
            LinearConstraint(list(c.coefficients), c.sense, c.rhs, c.name) for c in self.constraints
        ]
        m.objective = dict(self.objective)
        m.objective_constant = self.objective_constant
        return m


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    primal: np.ndarray | None = None
    dual: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = math.nan
    # final basis snapshot (basis ids, variable statuses, artificial signs)
    # so a later solve with tightened bounds can start from this vertex
    warm: tuple | None = None


@dataclass
class MipSolution:
    status: str  # optimal | infeasible | time_limit
    primal: np.ndarray | None = None
    objective: float = math.nan
    node_count: int = 0
    wall_time: float = 0.0


# -- standard form ----------------------------------------------------

_AT_LO, _AT_UP, _BASIC = 0, 1, 2


class _Standardized:
    """Equality form Ax + s = b with one slack per row, reusable across
    branch-and-bound nodes via per-solve bound overrides."""

    def __init__(self, model: MioModel):
        n = len(model.variables)
        m = len(model.constraints)
        self.n = n
        self.m = m
        self.total = n + m
        A = np.zeros((m, self.total))
        b = np.zeros(m)
        lo = np.zeros(self.total)
        hi = np.zeros(self.total)
        for j, v in enumerate(model.variables):
            lo[j], hi[j] = v.lower, v.upper
        self.row_scale = np.ones(m)
        for i, con in enumerate(model.constraints):
            for vid, coef in con.coefficients:
                A[i, vid] = coef
            # equilibrate: divide each row by its largest coefficient so
            # badly mixed magnitudes (unit conversions) stay well conditioned
            scale = float(np.max(np.abs(A[i, :n]))) if con.coefficients else 1.0
            if scale > 0.0:
                A[i, :n] /= scale
                self.row_scale[i] = scale
            b[i] = con.rhs / self.row_scale[i]
            s = n + i
            A[i, s] = 1.0
            if con.sense == LE:
                lo[s], hi[s] = 0.0, INF
            elif con.sense == GE:
                lo[s], hi[s] = -INF, 0.0
            else:
                lo[s], hi[s] = 0.0, 0.0
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        c = np.zeros(self.total)
        for vid, coef in model.objective.items():
            c[vid] = coef
        self.c = c
        self.c0 = model.objective_constant

    def refresh_objective(self, model: "MioModel"):
        """Re-read objective coefficients after the model's objective changed."""
        c = np.zeros(self.total)
        for vid, coef in model.objective.items():
            c[vid] = coef
        self.c = c
        self.c0 = model.objective_constant


class _Simplex:
    """Bounded-variable revised simplex with an artificial phase-1 basis."""

    def __init__(self, std: _Standardized, lo_over=None, hi_over=None):
        self.std = std
        m, total = std.m, std.total
        self.m = m
        # artificial columns appended after slacks
        self.ntot = total + m
        self.lo = np.concatenate([std.lo, np.zeros(m)])
        self.hi = np.concatenate([std.hi, np.full(m, INF)])
        if lo_over is not None:
            self.lo[: std.n] = lo_over
        if hi_over is not None:
            self.hi[: std.n] = hi_over
        self.cost = np.concatenate([std.c, np.zeros(m)])

    def _initial_basis(self):
        std = self.std
        # every non-artificial variable starts at a finite bound (0 for slacks)
        status = np.full(self.ntot, _AT_LO, dtype=np.int8)
        value = np.zeros(self.ntot)
        for j in range(std.total):
            if math.isfinite(self.lo[j]):
                value[j] = self.lo[j]
                status[j] = _AT_LO
            else:
                value[j] = self.hi[j]
                status[j] = _AT_UP
        r = std.b - std.A @ value[: std.total]
        self.art_sign = np.where(r >= 0.0, 1.0, -1.0)
        basis = np.arange(std.total, self.ntot)
        status[basis] = _BASIC
        value[basis] = np.abs(r)
        return basis, status, value

    def _col(self, j):
        std = self.std
        if j < std.total:
            return std.A[:, j]
        col = np.zeros(self.m)
        col[j - std.total] = self.art_sign[j - std.total]
        return col

    def _full_matrix(self):
        std = self.std
        art = np.zeros((self.m, self.m))
        np.fill_diagonal(art, self.art_sign)
        return np.hstack([std.A, art])

    def solve(self) -> LpSolution:
        std = self.std
        if np.any(self.lo[: std.n] > self.hi[: std.n] + 1e-12):
            return LpSolution(status="infeasible")
        # jitter the structural bounds so degenerate vertices split into
        # distinct nearby ones and the ratio test stops taking zero steps;
        # exact bounds are restored before the final cleanup pass
        rng = np.random.default_rng(0x5EED)
        lo_exact = self.lo.copy()
        hi_exact = self.hi.copy()
        jitter = PERTURB_EPS * rng.random(std.total)
        finite_lo = np.isfinite(self.lo[: std.total])
        finite_hi = np.isfinite(self.hi[: std.total])
        self.lo[: std.total][finite_lo] -= jitter[finite_lo]
        self.hi[: std.total][finite_hi] += jitter[finite_hi]
        basis, status, value = self._initial_basis()
        self.basis, self.status, self.value = basis, status, value
        self.Afull = self._full_matrix()
        self._refactor()

        # phase 1: drive artificials to zero
        phase1_cost = np.zeros(self.ntot)
        phase1_cost[std.total:] = 1.0
        st = self._iterate(phase1_cost, allow_unbounded=False)
        if st != "optimal":  # pragma: no cover - phase 1 is always bounded
            raise NumericalFailure("phase 1 did not converge")
        art_values = self.value[std.total:]
        scale = 1.0 + float(np.max(np.abs(std.b))) if self.m else 1.0
        if float(np.sum(art_values[self.status[std.total:] == _BASIC].clip(min=0.0))) > FEAS_TOL * scale:
            return LpSolution(status="infeasible")
        # pin artificials at zero for phase 2
        self.hi[std.total:] = 0.0
        self.value[std.total:][self.status[std.total:] != _BASIC] = 0.0

        st = self._iterate(self.cost, allow_unbounded=True)
        if st == "unbounded":
            return LpSolution(status="unbounded")
        return self._polish(lo_exact, hi_exact)

    def solve_warm(self, warm) -> LpSolution:
        """Re-solve after a bound change, starting from a previous basis.

        The basis of an optimal solution stays dual feasible when only
        bounds move, so dual simplex steps restore primal feasibility and
        a short primal pass certifies optimality.  Raises NumericalFailure
        when the start is unusable; callers fall back to a cold solve.
        """
        std = self.std
        if np.any(self.lo[: std.n] > self.hi[: std.n] + 1e-12):
            return LpSolution(status="infeasible")
        basis, vstatus, art_sign = warm
        self.basis = basis.copy()
        self.status = vstatus.copy()
        self.art_sign = art_sign.copy()
        self.Afull = self._full_matrix()
        self.hi[std.total:] = 0.0
        # same deterministic bound jitter as the cold path (anti-degeneracy)
        rng = np.random.default_rng(0x5EED)
        lo_exact = self.lo.copy()
        hi_exact = self.hi.copy()
        jitter = PERTURB_EPS * rng.random(std.total)
        finite_lo = np.isfinite(self.lo[: std.total])
        finite_hi = np.isfinite(self.hi[: std.total])
        self.lo[: std.total][finite_lo] -= jitter[finite_lo]
        self.hi[: std.total][finite_hi] += jitter[finite_hi]
        value = np.zeros(self.ntot)
        at_lo = self.status == _AT_LO
        at_up = self.status == _AT_UP
        value[at_lo] = self.lo[at_lo]
        value[at_up] = self.hi[at_up]
        if not np.all(np.isfinite(value[at_lo | at_up])):
            raise NumericalFailure("warm start rests on an infinite bound")
        self.value = value
        self._refactor()
        # sign-feasible cost jitter keeps the dual ratio test off the
        # zero-reduced-cost plateaus that make dual steps degenerate;
        # primal infeasibility proofs are cost independent, so they
        # remain valid under the perturbed objective
        crng = np.random.default_rng(0xD0A1)
        eps = 1e-7 * (1.0 + np.abs(self.cost)) * crng.random(self.ntot)
        cpert = self.cost.copy()
        cpert[at_lo] += eps[at_lo]
        cpert[at_up] -= eps[at_up]
        st = self._dual_iterate(cpert)
        if st == "infeasible":
            return LpSolution(status="infeasible")
        st = self._iterate(self.cost, allow_unbounded=True)
        if st == "unbounded":
            return LpSolution(status="unbounded")
        return self._polish(lo_exact, hi_exact)

    def _polish(self, lo_exact, hi_exact) -> LpSolution:
        """Restore exact bounds after jittered phases, snap nonbasic
        variables back and finish with a short exact pass (basic values
        shift by at most a jitter-sized amount, inside the feasibility
        tolerance)."""
        std = self.std
        self.lo = lo_exact
        self.hi = hi_exact
        self.hi[std.total:] = 0.0
        at_lo = self.status == _AT_LO
        at_up = self.status == _AT_UP
        self.value[at_lo] = self.lo[at_lo]
        self.value[at_up] = self.hi[at_up]
        self._refactor()
        st = self._iterate(self.cost, allow_unbounded=True)
        if st == "unbounded":  # pragma: no cover - cleanup starts near optimal
            return LpSolution(status="unbounded")
        self._refactor()
        return self._solution()

    def _solution(self) -> LpSolution:
        std = self.std
        y = self._duals(self.cost)
        d = self.cost[: std.total] - y @ std.A
        obj = std.c0 + float(self.cost[: std.total] @ self.value[: std.total])
        return LpSolution(
            status="optimal",
            primal=self.value[: std.n].copy(),
            dual=y / std.row_scale,
            reduced_costs=d[: std.n].copy(),
            objective=obj,
            warm=(self.basis.copy(), self.status.copy(), self.art_sign.copy()),
        )

    # -- internals ----------------------------------------------------

    def _refactor(self):
        B = self.Afull[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalFailure("singular basis") from exc
        v = self.value.copy()
        v[self.basis] = 0.0
        self.value[self.basis] = self.Binv @ (self.std.b - self.Afull @ v)

    def _duals(self, cost):
        return cost[self.basis] @ self.Binv

    def _iterate(self, cost, allow_unbounded) -> str:
        m = self.m
        max_iter = 200 * (m + self.std.n) + 20000
        bland = False
        stall = 0
        last_obj = INF
        it = 0
        fresh = False  # whether Binv was refactorized since the last pivot
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailure("simplex iteration limit exceeded")
            if it % REFACTOR_EVERY == 0 and not fresh:
                self._refactor()
                fresh = True
            y = self._duals(cost)
            d = cost - y @ self.Afull
            at_lo = self.status == _AT_LO
            at_up = self.status == _AT_UP
            viol = np.zeros(self.ntot)
            viol[at_lo] = -d[at_lo]
            viol[at_up] = d[at_up]
            eligible = viol > OPT_TOL
            if not eligible.any():
                return "optimal"
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(viol))
            sigma = 1.0 if self.status[j] == _AT_LO else -1.0
            w = self.Binv @ self._col(j)

            # ratio test over basic variables plus the entering bound flip
            xb = self.value[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            step = np.full(m, INF)
            dec = sigma * w > PIVOT_TOL
            inc = sigma * w < -PIVOT_TOL
            with np.errstate(invalid="ignore"):
                step[dec] = (xb[dec] - lob[dec]) / (sigma * w[dec])
                step[inc] = (hib[inc] - xb[inc]) / (-sigma * w[inc])
            step = np.where(np.isnan(step), INF, step)
            step = np.maximum(step, 0.0)
            t_flip = self.hi[j] - self.lo[j]
            t_min = float(np.min(step)) if m else INF
            t = min(t_min, t_flip)
            if not math.isfinite(t):
                if allow_unbounded:
                    return "unbounded"
                raise NumericalFailure("unexpected unbounded direction")

            obj_now = float(cost[self.basis] @ xb + cost[~(self.status == _BASIC)] @ self.value[~(self.status == _BASIC)])
            if obj_now < last_obj - 1e-12:
                stall = 0
                last_obj = obj_now
            else:
                stall += 1
                if stall > 20 * (m + 10):
                    bland = True

            if t_flip <= t_min + 1e-12 and math.isfinite(t_flip):
                # bound flip, basis unchanged
                self.value[self.basis] = xb - sigma * t_flip * w
                self.status[j] = _AT_UP if self.status[j] == _AT_LO else _AT_LO
                self.value[j] = self.hi[j] if self.status[j] == _AT_UP else self.lo[j]
                continue

            ties = np.flatnonzero(step <= t + 1e-9)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(w[ties]))])
            if abs(w[r]) < 1e-7 and not fresh:
                # tiny pivot from a stale eta-updated inverse corrupts the
                # basis; refactorize and redo this iteration exactly
                self._refactor()
                fresh = True
                it -= 1
                continue
            if abs(w[r]) < PIVOT_TOL:
                raise NumericalFailure("pivot magnitude below tolerance")

            leaving = self.basis[r]
            self.value[self.basis] = xb - sigma * t * w
            enter_val = (self.lo[j] if sigma > 0 else self.hi[j]) + sigma * t
            # classify the leaving variable at whichever bound it reached
            lv = self.value[leaving]
            if math.isfinite(self.lo[leaving]) and abs(lv - self.lo[leaving]) <= abs(lv - self.hi[leaving]):
                self.status[leaving] = _AT_LO
                self.value[leaving] = self.lo[leaving]
            else:
                self.status[leaving] = _AT_UP
                self.value[leaving] = self.hi[leaving]
            self.basis[r] = j
            self.status[j] = _BASIC
            self.value[j] = enter_val
            # product-form update of the explicit inverse
            piv = w[r]
            row = self.Binv[r, :] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[r, :] = row
            fresh = False

    def _dual_iterate(self, cost) -> str:
        """Dual simplex: drive out-of-bound basic variables to their bounds
        while keeping reduced costs sign feasible.  Returns "feasible" or
        "infeasible"; raises NumericalFailure on stalls so the caller can
        fall back to a cold solve."""
        m = self.m
        max_iter = 20 * (m + 10) + 2000
        it = 0
        fresh = True
        movable = (self.hi - self.lo) > 0.0
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailure("dual simplex iteration limit exceeded")
            if it % REFACTOR_EVERY == 0 and not fresh:
                self._refactor()
                fresh = True
            xb = self.value[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            viol_lo = lob - xb
            viol_up = xb - hib
            viol = np.maximum(viol_lo, viol_up)
            p = int(np.argmax(viol))
            if viol[p] <= FEAS_TOL:
                return "feasible"
            below = viol_lo[p] >= viol_up[p]
            y = self._duals(cost)
            d = cost - y @ self.Afull
            alpha = self.Binv[p, :] @ self.Afull
            at_lo = self.status == _AT_LO
            at_up = self.status == _AT_UP
            if below:
                # the leaving variable must rise to its lower bound
                elig = (at_lo & (alpha < -PIVOT_TOL)) | (at_up & (alpha > PIVOT_TOL))
            else:
                elig = (at_lo & (alpha > PIVOT_TOL)) | (at_up & (alpha < -PIVOT_TOL))
            elig &= movable
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return "infeasible"
            j = int(idx[np.argmin(np.abs(d[idx]) / np.abs(alpha[idx]))])
            w = self.Binv @ self._col(j)
            piv = w[p]
            if abs(piv) < 1e-7 and not fresh:
                self._refactor()
                fresh = True
                it -= 1
                continue
            if abs(piv) < PIVOT_TOL:
                raise NumericalFailure("dual pivot magnitude below tolerance")
            target = lob[p] if below else hib[p]
            t = (xb[p] - target) / piv
            leaving = self.basis[p]
            self.value[self.basis] = xb - t * w
            self.status[leaving] = _AT_LO if below else _AT_UP
            self.value[leaving] = target
            enter_from = self.value[j]
            self.basis[p] = j
            self.status[j] = _BASIC
            self.value[j] = enter_from + t
            row = self.Binv[p, :] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[p, :] = row
            fresh = False


def solve_lp(model: MioModel, *, _std: _Standardized | None = None,
             lo_over=None, hi_over=None, warm=None) -> LpSolution:
    """Solve the LP relaxation of ``model`` (binaries relaxed to their bounds).

    Returns primal values, one dual per constraint and one reduced cost per
    variable.  Deterministic for fixed input.  ``warm`` takes the ``warm``
    field of a solution of a model with the same rows and columns (bounds
    and objective may differ) and restarts from that basis, falling back to
    a cold solve when the restart fails.
    """
    if not model.variables:
        raise ValueError("model has no variables")
    std = _std if _std is not None else _Standardized(model)
    if std.m == 0:
        return _solve_boxonly(std, lo_over, hi_over)
    if warm is not None:
        try:
            sol = _Simplex(std, lo_over, hi_over).solve_warm(warm)
            # an infeasibility verdict from a restart rests on the old
            # basis being dual feasible; confirm it from scratch
            if sol.status != "infeasible":
                return sol
        except NumericalFailure:
            pass
    return _Simplex(std, lo_over, hi_over).solve()


def _solve_boxonly(std: _Standardized, lo_over, hi_over) -> LpSolution:
    lo = std.lo[: std.n] if lo_over is None else np.asarray(lo_over, dtype=float)
    hi = std.hi[: std.n] if hi_over is None else np.asarray(hi_over, dtype=float)
    if np.any(lo > hi + 1e-12):
        return LpSolution(status="infeasible")
    c = std.c[: std.n]
    x = np.where(c >= 0.0, lo, hi)
    if np.any(~np.isfinite(x)):
        return LpSolution(status="unbounded")
    obj = std.c0 + float(c @ x)
    return LpSolution(status="optimal", primal=x, dual=np.zeros(0),
                      reduced_costs=c.copy(), objective=obj)


# -- branch and bound -------------------------------------------------


def solve_mip(model: MioModel, gap_tolerance: float = 0.0,
              time_limit: float = INF) -> MipSolution:
    """Best-first branch-and-bound on the model's binary variables.

    Branches on the most fractional binary (ties by lowest variable id);
    nodes are explored in order of their LP bound.  Deterministic.
    """
    if gap_tolerance < 0:
        raise ValueError("gap tolerance must be nonnegative")
    t0 = time.perf_counter()
    std = _Standardized(model)
    bins = model.binary_ids
    lo0 = std.lo[: std.n].copy()
    hi0 = std.hi[: std.n].copy()

    incumbent = None
    incumbent_obj = INF
    nodes = 0
    counter = 0
    heap: list = []

    def node_lp(lo2, hi2, parent):
        """Child LP: dual-simplex warm start from the parent vertex, cold
        solve when that fails or reports infeasible (the warm path's
        infeasibility proof rests on tolerance-level dual feasibility)."""
        if parent.warm is not None:
            try:
                sol = _Simplex(std, lo_over=lo2, hi_over=hi2).solve_warm(parent.warm)
                if sol.status == "optimal":
                    return sol
            except NumericalFailure:
                pass
        return solve_lp(model, _std=std, lo_over=lo2, hi_over=hi2)

    root = solve_lp(model, _std=std, lo_over=lo0, hi_over=hi0)
    nodes += 1
    if root.status == "infeasible":
        return MipSolution(status="infeasible", node_count=nodes,
                           wall_time=time.perf_counter() - t0)
    if root.status == "unbounded":
        raise UnboundedError("MIP relaxation is unbounded")
    heapq.heappush(heap, (root.objective, counter, lo0, hi0, root))

    while heap:
        bound, _, lo, hi, sol = heapq.heappop(heap)
        if bound >= incumbent_obj - max(gap_tolerance, OPT_TOL):
            continue
        if time.perf_counter() - t0 > time_limit:
            if incumbent is None:
                raise TimeLimitError("time limit reached with no incumbent")
            return MipSolution(status="time_limit", primal=incumbent,
                               objective=incumbent_obj, node_count=nodes,
                               wall_time=time.perf_counter() - t0)
        x = sol.primal
        frac = [(abs(x[b] - round(x[b])), b) for b in bins]
        frac_viol = [(f, b) for f, b in frac if f > INT_TOL]
        if not frac_viol:
            xi = x.copy()
            for b in bins:
                xi[b] = round(xi[b])
            if any(f > 1e-12 for f, _ in frac):
                # clean the continuous part: re-solve with the binaries
                # pinned so the primal is exact, not merely within tolerance
                lo2, hi2 = lo.copy(), hi.copy()
                for b in bins:
                    lo2[b] = hi2[b] = xi[b]
                fixed_sol = node_lp(lo2, hi2, sol)
                nodes += 1
                if fixed_sol.status == "optimal":
                    xi = fixed_sol.primal.copy()
            obj = model.objective_value(xi)
            if obj < incumbent_obj - OPT_TOL:
                incumbent = xi
                incumbent_obj = obj
            continue
        # most fractional: largest distance from the nearest integer,
        # ties broken by lowest variable id
        best_f = max(f for f, _ in frac_viol)
        branch_var = min(b for f, b in frac_viol if f >= best_f - 1e-12)
        for fixed in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[branch_var] = max(lo2[branch_var], fixed)
            hi2[branch_var] = min(hi2[branch_var], fixed)
            if lo2[branch_var] > hi2[branch_var]:
                continue
            child = node_lp(lo2, hi2, sol)
            nodes += 1
            if child.status == "infeasible":
                continue
            if child.status == "unbounded":
                raise UnboundedError("MIP relaxation is unbounded")
            if child.objective < incumbent_obj - max(gap_tolerance, OPT_TOL):
                counter += 1
                heapq.heappush(heap, (child.objective, counter, lo2, hi2, child))

    if incumbent is None:
        return MipSolution(status="infeasible", node_count=nodes,
                           wall_time=time.perf_counter() - t0)
    return MipSolution(status="optimal", primal=incumbent,
                       objective=incumbent_obj, node_count=nodes,
                       wall_time=time.perf_counter() - t0)
