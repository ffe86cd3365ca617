"""Clock-delay schedule optimization.

The frequency-dependent timing functions are piecewise linear over shared
period breakpoints, so the one-hot segment selector of the mixed-integer
formulation can be replaced by plain enumeration: one LP per breakpoint
interval, each restricted to the segment where every timing function is
affine in the period. The LPs are solved by an in-house two-phase simplex
with Bland's anti-cycling rule.

Identical-support constraints are collapsed to their binding representative
before a solve (an exact reduction), and large lexicographic period-first
instances whose collapsed constraints each touch a single row increment are
solved by an equivalent parametric reduction: feasibility of the row
intervals depends on (T, S) only through a handful of half-plane families,
so the period stage becomes a two-variable LP and the latency/slack stages
become exact scans of one-dimensional piecewise-linear functions. The
reduction is cross-checked against the plain LP path in the test suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from aqfpopt.model import (
    CellLibrary,
    Diagnostic,
    OptimizationConfig,
    Schedule,
    ValidationError,
)
from aqfpopt.timing import TimingConstraintSet

log = logging.getLogger("aqfpopt")

#: Simplex tolerances (ps scale): phase-1 feasibility, reduced-cost optimality
#: and the smallest pivot magnitude accepted before declaring breakdown.
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11

#: Tolerance used when a lexicographic stage fixes its criterion.
FIX_TOL = 1e-6

#: Collapsed-row count above which the parametric fast path is preferred.
FAST_PATH_MIN_ROWS = 400


class DegeneratePivotError(RuntimeError):
    def __init__(self, row: int, value: float):
        self.row = row
        self.value = value
        super().__init__(f"pivot magnitude {value:.3e} below {PIVOT_TOL} in constraint row {row}")


class InfeasibleScheduleError(ValidationError):
    pass


@dataclass(frozen=True)
class LpConstraint:
    terms: dict[str, float]
    sense: str  # "<=", ">=" or "="
    rhs: float
    tag: Optional[str] = None


class LpProblem:
    """A named-variable linear program, minimization sense."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self.variables: dict[str, tuple[float, Optional[float]]] = {}
        self.constraints: list[LpConstraint] = []
        self.objective: dict[str, float] = {}

    def add_variable(self, name: str, lb: float, ub: Optional[float] = None) -> None:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        if not np.isfinite(lb):
            raise ValueError(f"variable {name!r} needs a finite lower bound")
        self.variables[name] = (float(lb), None if ub is None else float(ub))

    def add_constraint(self, terms: dict[str, float], sense: str, rhs: float, tag=None) -> None:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown sense {sense!r}")
        for v in terms:
            if v not in self.variables:
                raise ValueError(f"constraint references undeclared variable {v!r}")
        self.constraints.append(LpConstraint(dict(terms), sense, float(rhs), tag))

    def set_objective(self, terms: dict[str, float]) -> None:
        for v in terms:
            if v not in self.variables:
                raise ValueError(f"objective references undeclared variable {v!r}")
        self.objective = dict(terms)


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal", "infeasible" or "unbounded"
    values: dict[str, float] = field(default_factory=dict)
    objective: Optional[float] = None
    violations: tuple[tuple[Optional[str], float], ...] = ()


def _run_simplex(tab: np.ndarray, basis: list[int], opt_tol: float) -> str:
    """Minimize in place; last tableau row holds the reduced costs."""
    m = tab.shape[0] - 1
    limit = 20000 + 20 * tab.shape[1]
    basis_arr = basis  # mutated in place
    for _ in range(limit):
        costs = tab[-1, :-1]
        neg = np.nonzero(costs < -opt_tol)[0]
        if neg.size == 0:
            return "optimal"
        enter = int(neg[0])  # Bland: lowest index
        col = tab[:m, enter]
        pos = col > PIVOT_TOL
        if not pos.any():
            if (col > 0).any():
                row = int(np.argmax(col))
                raise DegeneratePivotError(row, float(col[row]))
            return "unbounded"
        cand = np.nonzero(pos)[0]
        ratios = tab[cand, -1] / col[cand]
        best = ratios.min()
        tied = cand[ratios <= best + 1e-12]
        leave = int(tied[np.argmin([basis_arr[i] for i in tied])])  # Bland tie-break
        piv = tab[leave, enter]
        if piv < PIVOT_TOL:
            raise DegeneratePivotError(leave, float(piv))
        tab[leave] /= piv
        colvec = tab[:, enter].copy()
        colvec[leave] = 0.0
        tab -= np.outer(colvec, tab[leave])
        basis_arr[leave] = enter
    raise RuntimeError("simplex iteration limit exceeded")


def lp_solve(p: LpProblem, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL) -> LpSolution:
    """Two-phase simplex with Bland's rule.

    All variables must carry finite lower bounds; upper bounds become extra
    rows. Returns an optimal basic solution, or infeasibility with the
    phase-1 residual per constraint, or an unbounded status.
    """
    names = list(p.variables)
    n = len(names)
    idx = {v: j for j, v in enumerate(names)}
    lb = np.array([p.variables[v][0] for v in names], dtype=float)

    rows, senses, rhs, tags = [], [], [], []
    for con in p.constraints:
        a = np.zeros(n)
        for v, coef in con.terms.items():
            a[idx[v]] += coef
        rows.append(a)
        senses.append(con.sense)
        rhs.append(con.rhs - float(a @ lb))
        tags.append(con.tag)
    for j, v in enumerate(names):
        u = p.variables[v][1]
        if u is None:
            continue
        if u - lb[j] < -1e-12:
            return LpSolution(status="infeasible", violations=((f"bound:{v}", lb[j] - u),))
        a = np.zeros(n)
        a[j] = 1.0
        rows.append(a)
        senses.append("<=")
        rhs.append(u - lb[j])
        tags.append(f"bound:{v}")

    m = len(rows)
    A = np.array(rows) if m else np.zeros((0, n))
    b = np.array(rhs) if m else np.zeros(0)
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]

    slack_rows = [i for i in range(m) if senses[i] == "<="]
    surp_rows = [i for i in range(m) if senses[i] == ">="]
    art_rows = [i for i in range(m) if senses[i] in (">=", "=")]
    ns, nr, na = len(slack_rows), len(surp_rows), len(art_rows)
    nu = n + ns + nr + na
    art_start = n + ns + nr

    tab = np.zeros((m + 1, nu + 1))
    tab[:m, :n] = A
    tab[:m, -1] = b
    basis = [0] * m
    art_of_row: dict[int, int] = {}
    for k, i in enumerate(slack_rows):
        tab[i, n + k] = 1.0
        basis[i] = n + k
    for k, i in enumerate(surp_rows):
        tab[i, n + ns + k] = -1.0
    for k, i in enumerate(art_rows):
        tab[i, art_start + k] = 1.0
        basis[i] = art_start + k
        art_of_row[i] = art_start + k

    if na:
        # Phase 1: minimize the artificial sum.
        tab[-1, art_start:art_start + na] = 1.0
        for i in art_rows:
            tab[-1] -= tab[i]
        status = _run_simplex(tab, basis, opt_tol)
        if status != "optimal":
            raise RuntimeError(f"phase 1 ended {status}")
        infeas = -tab[-1, -1]
        if infeas > feas_tol:
            art_vals = {bv: tab[k, -1] for k, bv in enumerate(basis) if bv >= art_start}
            residuals = []
            for i in art_rows:
                r = art_vals.get(art_of_row[i], 0.0)
                if r > feas_tol:
                    residuals.append((tags[i], float(r)))
            residuals.sort(key=lambda kv: -kv[1])
            return LpSolution(status="infeasible", violations=tuple(residuals))
        # Drive surviving artificials out of the basis, dropping redundant rows.
        drop = []
        for k in range(m):
            if basis[k] < art_start:
                continue
            pivcols = np.nonzero(np.abs(tab[k, :art_start]) > 1e-9)[0]
            if pivcols.size:
                enter = int(pivcols[0])
                piv = tab[k, enter]
                tab[k] /= piv
                colvec = tab[:, enter].copy()
                colvec[k] = 0.0
                tab -= np.outer(colvec, tab[k])
                basis[k] = enter
            else:
                drop.append(k)
        if drop:
            tab = np.delete(tab, drop, axis=0)
            basis = [bv for k, bv in enumerate(basis) if k not in set(drop)]
            m = len(basis)

    tab = np.delete(tab, np.s_[art_start:art_start + na], axis=1)
    nu = art_start
    cost = np.zeros(nu + 1)
    for v, coef in p.objective.items():
        cost[idx[v]] += coef
    tab[-1] = cost
    for k, bv in enumerate(basis):
        if cost[bv] != 0.0:
            tab[-1] -= cost[bv] * tab[k]
    status = _run_simplex(tab, basis, opt_tol)
    if status == "unbounded":
        return LpSolution(status="unbounded")

    y = np.zeros(nu)
    for k, bv in enumerate(basis):
        y[bv] = tab[k, -1]
    x = lb + y[:n]
    values = {v: float(x[j]) for j, v in enumerate(names)}
    for con in p.constraints:
        act = sum(coef * values[v] for v, coef in con.terms.items())
        err = act - con.rhs
        ok = (
            err <= feas_tol
            if con.sense == "<="
            else err >= -feas_tol
            if con.sense == ">="
            else abs(err) <= feas_tol
        )
        if not ok:
            raise RuntimeError(
                f"optimal basis violates constraint {con.tag or con.terms} by {err:.3e}"
            )
    objective = sum(coef * values[v] for v, coef in p.objective.items())
    return LpSolution(status="optimal", values=values, objective=float(objective))


# ---------------------------------------------------------------------------
# Segment restrictions


@dataclass(frozen=True)
class SegmentRestriction:
    """One breakpoint interval with every timing function affine inside it.

    ``t_lo``/``t_hi`` are the interval endpoints after intersection with the
    configured period bounds; the LP treats both ends as closed, ties at a
    shared breakpoint being resolved toward the lower-indexed segment when
    schedules are compared.
    """

    index: int
    t_lo: float
    t_hi: float
    lib: CellLibrary

    def fs_affine(self, src_cell: str, dst_cell: str) -> tuple[float, float]:
        k = self.index
        sa, sb = self.lib.timing(src_cell).c2q.segments[k]
        ua, ub = self.lib.timing(dst_cell).setup.segments[k]
        return sa + ua, sb + ub

    def fh_affine(self, src_cell: str, dst_cell: str, hold_mode: str) -> tuple[float, float]:
        k = self.index
        src = self.lib.timing(src_cell)
        dst = self.lib.timing(dst_cell)
        ca, cb = src.c2q.segments[k]
        ha, hb = dst.hold.segments[k]
        if hold_mode == "dlplace":
            return ca + 1.0 - ha, cb - hb
        ra, rb = src.rd.segments[k]
        return ca + ra - ha, cb + rb - hb


def _cells_in_use(tcs: TimingConstraintSet) -> set[str]:
    used = set()
    for tc in tcs.constraints:
        used.add(tc.src_cell)
        used.add(tc.dst_cell)
    return used


def _discontinuous_at(lib: CellLibrary, cells: set[str], bp: float, k: int) -> bool:
    for cell in cells:
        for fn in lib.timing(cell).functions().values():
            left = fn.segments[k - 1][0] * bp + fn.segments[k - 1][1]
            right = fn.segments[k][0] * bp + fn.segments[k][1]
            if abs(left - right) > 1e-9:
                return True
    return False


def segment_restrictions(
    lib: CellLibrary, cfg: OptimizationConfig, tcs: Optional[TimingConstraintSet] = None
) -> list[SegmentRestriction]:
    """Nonempty per-segment period intervals, in breakpoint order.

    Intervals are closed on both ends; a shared breakpoint therefore appears
    in two neighbouring segments, and the schedule optimizer resolves such
    ties toward the lower index, where the piecewise evaluation also lands.
    """
    t_lo, t_hi = cfg.period_bounds(lib)
    out = []
    bps = lib.breakpoints
    for k in range(len(bps) - 1):
        lo = max(bps[k], t_lo)
        hi = min(bps[k + 1], t_hi)
        if lo > hi:
            continue
        out.append(SegmentRestriction(index=k, t_lo=lo, t_hi=hi, lib=lib))
    return out


# ---------------------------------------------------------------------------
# Constraint collapse


@dataclass(frozen=True)
class CollapsedRow:
    """Binding representative of all constraints sharing one lhs shape."""

    support: tuple[int, ...]
    kind: str  # "setup" or "hold"
    t_coef: float  # slope of the combined timing term on this segment
    rhs: float  # rhs constant with the affine intercept folded in
    source: str  # connection key of the binding member


def _collapse(tcs: TimingConstraintSet, seg: SegmentRestriction, cfg: OptimizationConfig):
    best: dict[tuple, CollapsedRow] = {}
    for tc in tcs.constraints:
        if tc.kind == "setup":
            slope, intercept = seg.fs_affine(tc.src_cell, tc.dst_cell)
        else:
            slope, intercept = seg.fh_affine(tc.src_cell, tc.dst_cell, cfg.hold_mode)
        rhs = tc.rhs + intercept
        key = (tc.delta_rows, tc.kind, slope)
        cur = best.get(key)
        if cur is None or (rhs > cur.rhs if tc.kind == "setup" else rhs < cur.rhs):
            best[key] = CollapsedRow(
                support=tc.delta_rows, kind=tc.kind, t_coef=slope, rhs=rhs, source=tc.key
            )
    return [best[k] for k in sorted(best, key=lambda k: (k[0], k[1], k[2]))]


# ---------------------------------------------------------------------------
# Per-segment staged solving (LP path)

_STAGE_VECTORS = {"period": {"T": 1.0}, "latency": {"L": 1.0}, "slack": {"S": -1.0}}


def _weighted_vector(cfg: OptimizationConfig) -> dict[str, float]:
    return {"T": cfg.tau, "S": -cfg.sigma, "L": cfg.lam}


@dataclass
class SegmentOutcome:
    segment: SegmentRestriction
    status: str
    stage_values: tuple[float, ...] = ()
    values: dict[str, float] = field(default_factory=dict)
    violations: tuple[tuple[Optional[str], float], ...] = ()
    used_fast_path: bool = False


def _build_segment_lp(
    rows, tcs: TimingConstraintSet, seg: SegmentRestriction, cfg: OptimizationConfig
) -> LpProblem:
    lp = LpProblem(f"segment{seg.index}")
    nd = tcs.num_deltas
    for r in range(nd):
        lp.add_variable(f"delta_{r}", 0.0, cfg.delta_max)
    lp.add_variable("T", seg.t_lo, seg.t_hi)
    lp.add_variable("S", cfg.s_min, cfg.s_max)
    lp.add_variable("L", 0.0, nd * cfg.delta_max if nd else 0.0)
    for row in rows:
        terms = {f"delta_{r}": 1.0 for r in row.support}
        terms["T"] = -row.t_coef
        terms["S"] = -1.0 if row.kind == "setup" else 1.0
        lp.add_constraint(terms, ">=" if row.kind == "setup" else "<=", row.rhs,
                          tag=f"{row.kind}:{row.source}")
    lat = {f"delta_{r}": -1.0 for r in range(nd)}
    lat["L"] = 1.0
    lp.add_constraint(lat, "=", 0.0, tag="latency")
    return lp


def _staged_lp_solve(
    rows,
    tcs: TimingConstraintSet,
    seg: SegmentRestriction,
    cfg: OptimizationConfig,
    stages: list[tuple[str, dict[str, float]]],
) -> SegmentOutcome:
    """Optimize the stage criteria in order, fixing each within FIX_TOL.

    Criteria that are plain variables are fixed by tightening their bounds;
    the weighted combination is fixed with one extra row.
    """
    lp = _build_segment_lp(rows, tcs, seg, cfg)
    stage_values = []
    sol: Optional[LpSolution] = None
    for name, vec in stages:
        lp.set_objective(vec)
        nxt = lp_solve(lp)
        if nxt.status != "optimal":
            if sol is None:
                return SegmentOutcome(
                    segment=seg, status=nxt.status, violations=nxt.violations
                )
            log.warning("stage %s on segment %d ended %s; keeping previous stage", name, seg.index, nxt.status)
            break
        sol = nxt
        stage_values.append(float(nxt.objective))
        if name in ("period", "latency", "slack"):
            var = {"period": "T", "latency": "L", "slack": "S"}[name]
            v = nxt.values[var]
            lo, hi = lp.variables[var]
            lp.variables[var] = (max(lo, v - FIX_TOL), min(hi if hi is not None else v + FIX_TOL, v + FIX_TOL))
        else:
            lp.add_constraint(dict(vec), "<=", float(nxt.objective) + FIX_TOL, tag=f"fix:{name}")
    assert sol is not None
    return SegmentOutcome(
        segment=seg, status="optimal", stage_values=tuple(stage_values), values=dict(sol.values)
    )


# ---------------------------------------------------------------------------
# Parametric fast path for large single-row-support systems


def _pwl_rising_threshold(c: np.ndarray, budget: float) -> float:
    """Largest s with sum(max(0, c + s)) <= budget (c may contain -inf)."""
    c = c[np.isfinite(c)]
    if c.size == 0:
        return np.inf
    knots = np.sort(-c)  # ascending; G(knots[0]) == 0
    if budget < 0:
        return -np.inf
    # G evaluated at every knot, then a linear solve on the crossing piece.
    g = np.maximum(0.0, c[None, :] + knots[:, None]).sum(axis=1)
    over = np.nonzero(g > budget)[0]
    if over.size == 0:
        k = knots.size - 1  # beyond the last knot every row is active
        slope = c.size
        return knots[k] + (budget - g[k]) / slope
    i = int(over[0])
    if i == 0:
        return knots[0]  # G == 0 up to the first knot
    slope = i  # rows active on (knots[i-1], knots[i])
    return knots[i - 1] + (budget - g[i - 1]) / slope


def _pwl_falling_threshold(d: np.ndarray, dmax: float, budget: float) -> float:
    """Largest s with sum(min(dmax, d - s)) >= budget (d may contain +inf)."""
    const = dmax * np.count_nonzero(~np.isfinite(d))
    d = d[np.isfinite(d)]
    if d.size == 0:
        return np.inf if const >= budget else -np.inf
    knots = np.sort(d - dmax)  # below knots[k], row k is capped at dmax
    h = const + np.minimum(dmax, d[None, :] - knots[:, None]).sum(axis=1)
    under = np.nonzero(h < budget)[0]
    if under.size == 0:
        k = knots.size - 1  # beyond the last knot every row is uncapped
        slope = d.size
        return knots[k] + (h[k] - budget) / slope
    i = int(under[0])
    if i == 0:
        return -np.inf if h[0] < budget - 1e-9 else knots[0]
    slope = i
    return knots[i - 1] + (h[i - 1] - budget) / slope


def _fast_lexico(
    rows,
    tcs: TimingConstraintSet,
    seg: SegmentRestriction,
    cfg: OptimizationConfig,
) -> SegmentOutcome:
    """Exact period-first lexicographic solve for single-row-support systems.

    Works because every collapsed constraint bounds one row increment by an
    affine function of (T, S): row intervals are nonempty iff a small family
    of half-planes in (T, S) holds, minimum latency at fixed (T, S) is the
    sum of the interval lower ends, and both remaining stages reduce to
    monotone piecewise-linear threshold searches in S.
    """
    nd = tcs.num_deltas
    setups: dict[int, list] = {}
    holds: dict[int, list] = {}
    for row in rows:
        r = row.support[0]
        entry = (row.t_coef, row.rhs, row.source)
        (setups if row.kind == "setup" else holds).setdefault(r, []).append(entry)

    pair_fams: dict[tuple[float, float], tuple[float, str]] = {}
    cap_fams: dict[float, tuple[float, str]] = {}
    floor_fams: dict[float, tuple[float, str]] = {}
    for r in set(setups) | set(holds):
        for a, c, src1 in setups.get(r, []):
            v = cfg.delta_max - c
            if a not in cap_fams or v < cap_fams[a][0]:
                cap_fams[a] = (v, f"setup:{src1}")
            for b, d, src2 in holds.get(r, []):
                v = d - c
                key = (a, b)
                if key not in pair_fams or v < pair_fams[key][0]:
                    pair_fams[key] = (v, f"hold:{src2}")
        for b, d, src2 in holds.get(r, []):
            if b not in floor_fams or d < floor_fams[b][0]:
                floor_fams[b] = (d, f"hold:{src2}")

    lp = LpProblem(f"segment{seg.index}:period")
    lp.add_variable("T", seg.t_lo, seg.t_hi)
    lp.add_variable("S", cfg.s_min, cfg.s_max)
    for (a, b), (v, src) in sorted(pair_fams.items()):
        lp.add_constraint({"T": a - b, "S": 2.0}, "<=", v, tag=src)
    for a, (v, src) in sorted(cap_fams.items()):
        lp.add_constraint({"T": a, "S": 1.0}, "<=", v, tag=src)
    for b, (v, src) in sorted(floor_fams.items()):
        lp.add_constraint({"T": -b, "S": 1.0}, "<=", v, tag=src)
    lp.set_objective({"T": 1.0})
    sol = lp_solve(lp)
    if sol.status != "optimal":
        return SegmentOutcome(segment=seg, status=sol.status, violations=sol.violations)
    t_star = sol.values["T"]

    lower = np.full(nd, -np.inf)
    upper = np.full(nd, np.inf)
    for r, pieces in setups.items():
        lower[r] = max(a * t_star + c for a, c, _ in pieces)
    for r, pieces in holds.items():
        upper[r] = min(b * t_star + d for b, d, _ in pieces)

    with np.errstate(invalid="ignore"):
        s_cap = cfg.s_max
        both = np.isfinite(lower) & np.isfinite(upper)
        if both.any():
            s_cap = min(s_cap, float(((upper[both] - lower[both]) / 2.0).min()))
        if np.isfinite(upper).any():
            s_cap = min(s_cap, float(upper[np.isfinite(upper)].min()))
        if np.isfinite(lower).any():
            s_cap = min(s_cap, float((cfg.delta_max - lower[np.isfinite(lower)]).min()))
    s_cap = max(s_cap, cfg.s_min)  # stage-1 feasibility guarantees this up to rounding

    def min_latency(s: float) -> float:
        return float(np.maximum(0.0, lower + s).sum()) if nd else 0.0

    if cfg.priority == ("period", "latency", "slack"):
        s_lat = cfg.s_min
        l_star = min_latency(s_lat)
        s_hi = min(
            s_cap,
            _pwl_rising_threshold(lower, l_star + FIX_TOL),
            _pwl_falling_threshold(upper, cfg.delta_max, l_star),
        )
        s_star = max(cfg.s_min, min(cfg.s_max, s_hi))
        stage_values = (t_star, l_star, -s_star)
    else:  # ("period", "slack", "latency")
        s_star = min(cfg.s_max, s_cap)
        l_star = min_latency(s_star)
        stage_values = (t_star, -s_star, l_star)

    deltas = np.maximum(0.0, lower + s_star) if nd else np.zeros(0)
    head = np.minimum(cfg.delta_max, upper - s_star) - deltas
    deficit = max(0.0, l_star - float(deltas.sum()))
    if deficit > 0 and nd:
        for r in range(nd):
            give = min(head[r], deficit)
            if give > 0:
                deltas[r] += give
                deficit -= give
            if deficit <= 1e-12:
                break
    values = {f"delta_{r}": float(deltas[r]) for r in range(nd)}
    values.update({"T": t_star, "S": float(s_star), "L": float(deltas.sum())})
    return SegmentOutcome(
        segment=seg,
        status="optimal",
        stage_values=stage_values,
        values=values,
        used_fast_path=True,
    )


# ---------------------------------------------------------------------------
# Public solver entry points


def solve_segment(
    tcs: TimingConstraintSet, seg: SegmentRestriction, cfg: OptimizationConfig
) -> LpSolution:
    """Weighted solve of one segment restriction.

    Minimizes tau*T - sigma*S + lam*L, then pins the objective and refines
    ties deterministically (smallest period, then smallest latency, then
    largest slack), so equal-weight configurations still return a canonical
    optimum.
    """
    rows = _collapse(tcs, seg, cfg)
    stages = [("weighted", _weighted_vector(cfg))] + [
        (name, _STAGE_VECTORS[name]) for name in ("period", "latency", "slack")
    ]
    out = _staged_lp_solve(rows, tcs, seg, cfg, stages)
    if out.status != "optimal":
        return LpSolution(status=out.status, violations=out.violations)
    objective = sum(coef * out.values[v] for v, coef in _weighted_vector(cfg).items())
    return LpSolution(status="optimal", values=out.values, objective=objective)


def _solve_outcome(
    tcs: TimingConstraintSet,
    seg: SegmentRestriction,
    cfg: OptimizationConfig,
    fast_path_min_rows: int,
) -> SegmentOutcome:
    # A segment owns its upper breakpoint only. When a timing function jumps
    # at the shared lower breakpoint, claiming it with this segment's affine
    # values would disagree with the piecewise evaluation, so the interval is
    # nudged open by the fixing tolerance; continuous libraries are exact.
    bps = seg.lib.breakpoints
    if (
        seg.index > 0
        and seg.t_lo == bps[seg.index]
        and _discontinuous_at(seg.lib, _cells_in_use(tcs), bps[seg.index], seg.index)
    ):
        if seg.t_lo + FIX_TOL > seg.t_hi:
            return SegmentOutcome(segment=seg, status="pruned")
        seg = replace(seg, t_lo=seg.t_lo + FIX_TOL)
    rows = _collapse(tcs, seg, cfg)
    if cfg.priority_mode == "lexicographic":
        fast_ok = (
            len(rows) >= fast_path_min_rows
            and cfg.priority[0] == "period"
            and cfg.priority in (("period", "latency", "slack"), ("period", "slack", "latency"))
            and all(len(row.support) == 1 for row in rows)
        )
        if fast_ok:
            return _fast_lexico(rows, tcs, seg, cfg)
        stages = [(name, _STAGE_VECTORS[name]) for name in cfg.priority]
        return _staged_lp_solve(rows, tcs, seg, cfg, stages)
    stages = [("weighted", _weighted_vector(cfg))] + [
        (name, _STAGE_VECTORS[name]) for name in ("period", "latency", "slack")
    ]
    return _staged_lp_solve(rows, tcs, seg, cfg, stages)


def _lex_le(a: tuple[float, ...], b: tuple[float, ...], tol: float = FIX_TOL) -> bool:
    """True when a is lexicographically no worse than b at the fix tolerance."""
    for x, y in zip(a, b):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return True


def optimize_schedule(
    tcs: TimingConstraintSet,
    lib: CellLibrary,
    cfg: OptimizationConfig,
    details: Optional[dict] = None,
    fast_path_min_rows: int = FAST_PATH_MIN_ROWS,
) -> Schedule:
    """Solve every segment restriction and return the best feasible schedule.

    Weighted mode compares the refined weighted optima across segments;
    lexicographic mode compares the per-segment stage-value tuples. Ties
    resolve to the lower segment index, matching the boundary ownership
    rule. When every segment is infeasible the error carries the largest
    phase-1 residuals of the least-violating segment.
    """
    segs = segment_restrictions(lib, cfg, tcs)
    if not segs:
        lo, hi = cfg.period_bounds(lib)
        raise InfeasibleScheduleError(
            [Diagnostic("INFEASIBLE", "period", f"no segment intersects [{lo}, {hi}]")]
        )
    outcomes = [_solve_outcome(tcs, seg, cfg, fast_path_min_rows) for seg in segs]
    if details is not None:
        details["segments_solved"] = len(outcomes)
        details["fast_path_segments"] = [o.segment.index for o in outcomes if o.used_fast_path]
        details["outcomes"] = outcomes

    feasible = [o for o in outcomes if o.status == "optimal"]
    if not feasible:
        scored = [o for o in outcomes if o.status == "infeasible"] or outcomes
        worst = min(
            scored,
            key=lambda o: sum(v for _, v in o.violations) if o.violations else np.inf,
        )
        diags = [
            Diagnostic("INFEASIBLE", tag or "bounds", f"phase-1 residual {v:.6g} ps")
            for tag, v in worst.violations[:5]
        ] or [Diagnostic("INFEASIBLE", f"segment {worst.segment.index}", "no feasible schedule")]
        raise InfeasibleScheduleError(diags)

    best = feasible[0]
    for cand in feasible[1:]:
        if not _lex_le(best.stage_values, cand.stage_values):
            best = cand

    nd = tcs.num_deltas
    deltas = tuple(best.values[f"delta_{r}"] for r in range(nd))
    period = best.values["T"]
    seg_index = best.segment.index
    # A period landing exactly on the segment's open lower breakpoint belongs
    # to the segment below; relabel so the reported segment owns the period.
    bps = lib.breakpoints
    if seg_index > 0 and period <= bps[seg_index] and best.segment.t_lo == bps[seg_index]:
        seg_index -= 1
    return Schedule(
        period=period,
        row_deltas=deltas,
        slack=best.values["S"],
        latency=sum(deltas),
        segment_index=seg_index,
    )


@dataclass(frozen=True)
class ExploreRow:
    label: str
    config: OptimizationConfig
    schedule: Optional[Schedule]
    error: tuple[Diagnostic, ...] = ()


def explore(
    tcs: TimingConstraintSet, lib: CellLibrary, configs, labels=None
) -> list[ExploreRow]:
    """Run the optimizer once per configuration; failures do not stop the run."""
    rows = []
    for i, cfg in enumerate(configs):
        label = labels[i] if labels else f"config{i}"
        try:
            sched = optimize_schedule(tcs, lib, cfg)
            rows.append(ExploreRow(label=label, config=cfg, schedule=sched))
        except InfeasibleScheduleError as e:
            rows.append(
                ExploreRow(label=label, config=cfg, schedule=None, error=tuple(e.diagnostics))
            )
    return rows
