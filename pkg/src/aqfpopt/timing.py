"""Setup/hold constraint generation and an independent STA oracle.

``build_constraints`` reformulates the raw per-connection inequalities into
linear constraints over the row increments, the period, the uniform slack
and the latency. ``sta_check`` evaluates the raw inequalities directly on a
concrete schedule and never touches the reformulation, which makes it an
independent correctness oracle: for every connection the STA setup slack
equals the setup constraint's lhs - rhs at S = 0, and the hold slack equals
rhs - lhs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from aqfpopt.model import (
    CellLibrary,
    Circuit,
    Connection,
    Diagnostic,
    OptimizationConfig,
    Schedule,
    ValidationError,
    pwl_eval,
)


class UnsupportedSkipError(ValidationError):
    pass


@dataclass(frozen=True)
class LinearTerm:
    """Linear expression over named variables plus a constant (ps)."""

    coefficients: dict[str, float]
    constant: float = 0.0


@dataclass(frozen=True)
class TimingConstraint:
    """One reformulated inequality for one connection.

    The frequency-dependent part stays symbolic as a pseudo-variable
    ("FS" or "FH" over the source/sink cell pair); the solver substitutes
    its segment-affine form, and ``dlplace`` hold handling swaps the reset
    delay for the full period at that point.
    """

    kind: str  # "setup" or "hold"
    src: str
    dst: str
    src_cell: str
    dst_cell: str
    sense: str  # ">=" or "<="
    delta_rows: tuple[int, ...]  # indices r with coefficient +1
    s_coef: float  # -1 for setup, +1 for hold
    rhs: float  # prop_ij - delta_clk_ij

    @property
    def key(self) -> str:
        return f"{self.src}->{self.dst}"

    def lhs(self) -> LinearTerm:
        coeffs = {f"delta_{r}": 1.0 for r in self.delta_rows}
        tag = "FS" if self.kind == "setup" else "FH"
        coeffs[f"{tag}[{self.src_cell},{self.dst_cell}]"] = -1.0
        coeffs["S"] = self.s_coef
        return LinearTerm(coefficients=coeffs)


def f_setup(lib: CellLibrary, src_cell: str, dst_cell: str, period: float) -> float:
    """Combined frequency-dependent setup term c2q(src) + setup(dst)."""
    return pwl_eval(lib.timing(src_cell).c2q, period) + pwl_eval(lib.timing(dst_cell).setup, period)


def f_hold(
    lib: CellLibrary, src_cell: str, dst_cell: str, period: float, hold_mode: str = "reset-delay"
) -> float:
    """Combined hold term; dlplace mode substitutes the period for the reset delay."""
    src = lib.timing(src_cell)
    dst = lib.timing(dst_cell)
    window = period if hold_mode == "dlplace" else pwl_eval(src.rd, period)
    return pwl_eval(src.c2q, period) + window - pwl_eval(dst.hold, period)


@dataclass(frozen=True)
class TimingConstraintSet:
    """The linear system over (delta_0.., T, S, L) generated from a circuit."""

    constraints: tuple[TimingConstraint, ...]
    num_rows: int
    s_bounds: tuple[float, float]
    t_bounds: tuple[float, float]

    @property
    def num_deltas(self) -> int:
        return self.num_rows - 1

    def latency_definition(self) -> LinearTerm:
        coeffs = {"L": 1.0}
        coeffs.update({f"delta_{r}": -1.0 for r in range(self.num_deltas)})
        return LinearTerm(coefficients=coeffs)

    def residuals(
        self,
        lib: CellLibrary,
        period: float,
        row_deltas,
        hold_mode: str = "reset-delay",
    ) -> dict[tuple[str, str, str], float]:
        """Signed satisfaction margin of every constraint at S = 0.

        Setup rows report lhs - rhs, hold rows rhs - lhs, so a nonnegative
        value always means "satisfied" and the numbers line up one-for-one
        with the STA slacks.
        """
        out = {}
        for tc in self.constraints:
            dsum = sum(row_deltas[r] for r in tc.delta_rows)
            if tc.kind == "setup":
                lhs = dsum - f_setup(lib, tc.src_cell, tc.dst_cell, period)
                out[(tc.src, tc.dst, "setup")] = lhs - tc.rhs
            else:
                lhs = dsum - f_hold(lib, tc.src_cell, tc.dst_cell, period, hold_mode)
                out[(tc.src, tc.dst, "hold")] = tc.rhs - lhs
        return out


def delta_clk(c: Circuit, conn: Connection) -> float:
    """Base clock-arrival difference between the endpoints of a connection."""
    return c.gate(conn.dst).clock_offset - c.gate(conn.src).clock_offset


def build_constraints(
    c: Circuit, lib: CellLibrary, cfg: OptimizationConfig
) -> TimingConstraintSet:
    """Emit one setup and one hold constraint per connection.

    A connection from row m to row n contributes the increments
    delta_m .. delta_{n-1} with coefficient +1; spans beyond ``cfg.max_skip``
    are rejected since the clock schedule was never characterized for them.
    """
    constraints: list[TimingConstraint] = []
    errs: list[Diagnostic] = []
    for conn in c.connections:
        src = c.gate(conn.src)
        dst = c.gate(conn.dst)
        span = dst.row - src.row
        if cfg.max_skip is not None and span > cfg.max_skip:
            errs.append(
                Diagnostic(
                    "UNSUPPORTED_SKIP",
                    conn.key,
                    f"row span {span} exceeds the supported maximum {cfg.max_skip}",
                )
            )
            continue
        rows = tuple(range(src.row, dst.row))
        rhs = c.propagation(conn, lib) - delta_clk(c, conn)
        common = dict(
            src=conn.src,
            dst=conn.dst,
            src_cell=src.cell,
            dst_cell=dst.cell,
            delta_rows=rows,
            rhs=rhs,
        )
        constraints.append(TimingConstraint(kind="setup", sense=">=", s_coef=-1.0, **common))
        constraints.append(TimingConstraint(kind="hold", sense="<=", s_coef=1.0, **common))
    if errs:
        raise UnsupportedSkipError(errs)
    return TimingConstraintSet(
        constraints=tuple(constraints),
        num_rows=c.num_rows,
        s_bounds=(cfg.s_min, cfg.s_max),
        t_bounds=cfg.period_bounds(lib),
    )


@dataclass(frozen=True)
class ConnectionSlack:
    src: str
    dst: str
    setup_slack: float
    hold_slack: float


@dataclass(frozen=True)
class SlackReport:
    entries: tuple[ConnectionSlack, ...]
    min_slack: Optional[float]
    worst: tuple[str, ...] = ()

    def passing(self, margin: float = -1e-6) -> bool:
        return self.min_slack is None or self.min_slack >= margin


def sta_check(
    c: Circuit, lib: CellLibrary, sched: Schedule, hold_mode: str = "reset-delay"
) -> SlackReport:
    """Static timing check of a concrete schedule against the raw inequalities.

    Clock arrival at a gate is its base offset plus every row increment
    before its row. The computation deliberately bypasses the reformulated
    constraint system.
    """
    period = sched.period
    prefix = [0.0] * (c.num_rows + 1)
    for r, d in enumerate(sched.row_deltas):
        prefix[r + 1] = prefix[r] + d
    clk = {g.id: g.clock_offset + prefix[g.row] for g in c.gates}

    entries = []
    min_slack = None
    worst: tuple[str, ...] = ()
    for conn in c.connections:
        src = c.gate(conn.src)
        dst = c.gate(conn.dst)
        prop = c.propagation(conn, lib)
        c2q = pwl_eval(lib.timing(src.cell).c2q, period)
        setup = pwl_eval(lib.timing(dst.cell).setup, period)
        hold = pwl_eval(lib.timing(dst.cell).hold, period)
        window = period if hold_mode == "dlplace" else pwl_eval(lib.timing(src.cell).rd, period)
        setup_slack = (clk[dst.id] - setup) - (clk[src.id] + c2q + prop)
        hold_slack = (clk[src.id] + c2q + prop + window) - (clk[dst.id] + hold)
        entries.append(
            ConnectionSlack(src=conn.src, dst=conn.dst, setup_slack=setup_slack, hold_slack=hold_slack)
        )
        local = min(setup_slack, hold_slack)
        if min_slack is None or local < min_slack:
            min_slack = local
            worst = (conn.key,)
        elif local == min_slack:
            worst = worst + (conn.key,)
    return SlackReport(entries=tuple(entries), min_slack=min_slack, worst=worst)
