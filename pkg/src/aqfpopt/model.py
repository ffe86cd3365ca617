"""Domain types shared across the toolkit.

All types are immutable after construction, so they can be shared freely
across threads. Units are fixed throughout the package: times in ps,
lengths in um, frequencies in GHz (frequency = 1000 / period_ps).
"""

from __future__ import annotations

import logging
from bisect import bisect_left
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

log = logging.getLogger("aqfpopt")

BUFFER_CELL = "buffer"

#: Absolute tolerance (ps) above which adjacent piecewise-linear segments are
#: reported as discontinuous. Discontinuous libraries are legal but suspicious.
CONTINUITY_TOL = 1e-9


class PwlDomainError(ValueError):
    """Evaluation of a piecewise-linear function outside its domain."""


@dataclass(frozen=True)
class Diagnostic:
    """Machine-readable finding produced by a validation pass."""

    code: str
    entity: str
    message: str
    severity: str = "error"  # "error" or "warning"

    def __str__(self) -> str:
        return f"[{self.code}] {self.entity}: {self.message}"


class ValidationError(ValueError):
    """Hard failure carrying the structured diagnostics that caused it."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear function of the clock period.

    ``segments[k]`` is the ``(slope, intercept)`` pair active on the interval
    ``(breakpoints[k], breakpoints[k+1]]``. Intervals are half-open on the
    left: a period landing exactly on an interior breakpoint resolves to the
    lower-indexed segment, which keeps boundary behaviour deterministic and
    the feasible sets of the per-segment LPs closed.
    """

    breakpoints: tuple[float, ...]
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(
            self, "segments", tuple((float(s), float(i)) for s, i in self.segments)
        )
        errs = []
        if len(self.breakpoints) < 2:
            errs.append(Diagnostic("ARITY_MISMATCH", "pwl", "need at least two breakpoints"))
        elif len(self.segments) != len(self.breakpoints) - 1:
            errs.append(
                Diagnostic(
                    "ARITY_MISMATCH",
                    "pwl",
                    f"{len(self.segments)} segments for {len(self.breakpoints)} breakpoints",
                )
            )
        if self.breakpoints and self.breakpoints[0] < 0:
            errs.append(Diagnostic("NEGATIVE_BREAKPOINT", "pwl", "first breakpoint must be >= 0"))
        if any(a >= b for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            errs.append(
                Diagnostic("NONMONOTONE_BREAKPOINTS", "pwl", "breakpoints must be strictly increasing")
            )
        if errs:
            raise ValidationError(errs)

    @property
    def t_lo(self) -> float:
        return self.breakpoints[0]

    @property
    def t_hi(self) -> float:
        return self.breakpoints[-1]

    def segment_of(self, t: float) -> int:
        """Index of the segment owning ``t`` (lower segment owns breakpoints)."""
        if not self.t_lo < t <= self.t_hi:
            raise PwlDomainError(
                f"t={t!r} outside the valid interval ({self.t_lo}, {self.t_hi}]"
            )
        return max(0, bisect_left(self.breakpoints, t) - 1)

    def __call__(self, t: float) -> float:
        slope, intercept = self.segments[self.segment_of(t)]
        return slope * t + intercept


def pwl_eval(f: PiecewiseLinear, t: float) -> float:
    """Evaluate ``f`` at period ``t`` (ps), honouring the boundary rule."""
    return f(t)


@dataclass(frozen=True)
class CellTiming:
    """Per-cell timing functions over the library-wide period breakpoints."""

    c2q: PiecewiseLinear
    setup: PiecewiseLinear
    hold: PiecewiseLinear
    rd: PiecewiseLinear

    def functions(self) -> dict[str, PiecewiseLinear]:
        return {"c2q": self.c2q, "setup": self.setup, "hold": self.hold, "rd": self.rd}


@dataclass(frozen=True)
class CellLibrary:
    """Cell timing plus the interconnect constants shared by all passes."""

    cells: dict[str, CellTiming]
    breakpoints: tuple[float, ...]
    l_max_drive: float  # um, longest reliably drivable interconnect
    l_buffer: float  # um, intrinsic pin-to-pin length of a buffer cell
    prop_per_um: float  # ps/um
    t_min: float  # ps
    t_max: float  # ps
    max_frequency: float  # GHz, adiabatic limit of the library

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

    def timing(self, cell: str) -> CellTiming:
        return self.cells[cell]

    @property
    def period_lo(self) -> float:
        """Effective lower period bound: t_min clipped by the frequency limit."""
        if self.max_frequency > 0:
            return max(self.t_min, 1000.0 / self.max_frequency)
        return self.t_min


def validate_library(lib: CellLibrary) -> list[Diagnostic]:
    """Check library invariants; errors and warnings share the returned list."""
    out: list[Diagnostic] = []
    if not lib.cells:
        out.append(Diagnostic("EMPTY_LIBRARY", "library", "library defines no cells"))
        return out
    if not (lib.l_max_drive > lib.l_buffer > 0):
        out.append(
            Diagnostic(
                "INVALID_INTERCONNECT",
                "library",
                f"need l_max_drive > l_buffer > 0, got {lib.l_max_drive} / {lib.l_buffer}",
            )
        )
    if lib.prop_per_um <= 0:
        out.append(Diagnostic("INVALID_INTERCONNECT", "library", "prop_per_um must be > 0"))
    if not (0 < lib.t_min < lib.t_max):
        out.append(
            Diagnostic(
                "INVALID_PERIOD_RANGE", "library", f"need 0 < t_min < t_max, got {lib.t_min}..{lib.t_max}"
            )
        )
    if lib.max_frequency <= 0:
        out.append(Diagnostic("INVALID_PERIOD_RANGE", "library", "max_frequency must be > 0"))
    for name, cell in sorted(lib.cells.items()):
        for fname, fn in cell.functions().items():
            ent = f"{name}.{fname}"
            if fn.breakpoints != lib.breakpoints:
                out.append(
                    Diagnostic(
                        "SHARED_BREAKPOINTS_REQUIRED",
                        ent,
                        "all cell functions must share the library breakpoints",
                    )
                )
                continue
            if not (fn.t_lo < lib.t_min and fn.t_hi >= lib.t_max):
                out.append(
                    Diagnostic(
                        "BREAKPOINT_SPAN",
                        ent,
                        f"breakpoints ({fn.t_lo}, {fn.t_hi}] do not cover [{lib.t_min}, {lib.t_max}]",
                    )
                )
            for k in range(1, len(fn.breakpoints) - 1):
                b = fn.breakpoints[k]
                left = fn.segments[k - 1][0] * b + fn.segments[k - 1][1]
                right = fn.segments[k][0] * b + fn.segments[k][1]
                if abs(left - right) > CONTINUITY_TOL:
                    out.append(
                        Diagnostic(
                            "PWL_DISCONTINUITY",
                            ent,
                            f"jump of {right - left:.6g} ps at breakpoint {b} ps",
                            severity="warning",
                        )
                    )
    # Reset delay must stay below the period over the usable range; sampled on
    # a 100-point grid per segment.
    for name, cell in sorted(lib.cells.items()):
        rd = cell.rd
        if rd.breakpoints != lib.breakpoints:
            continue
        for k in range(len(rd.segments)):
            lo = max(rd.breakpoints[k], lib.t_min)
            hi = min(rd.breakpoints[k + 1], lib.t_max)
            if lo > hi:
                continue
            for i in range(100):
                t = hi - (hi - lo) * i / 99.0 if hi > lo else hi
                if t <= rd.t_lo:
                    continue
                if rd(t) >= t:
                    out.append(
                        Diagnostic(
                            "RESET_EXCEEDS_PERIOD",
                            f"{name}.rd",
                            f"rd({t:.4g}) = {rd(t):.4g} ps >= period",
                            severity="warning",
                        )
                    )
                    break
    return out


@dataclass(frozen=True)
class Gate:
    """A clocked cell instance placed in a row of the pipeline.

    ``clock_offset`` is the cumulative base clock propagation delay from the
    chip clock input to this gate's tap, excluding every optimizable
    inter-row increment.
    """

    id: str
    cell: str
    row: int
    clock_offset: float  # ps


@dataclass(frozen=True)
class Connection:
    """A routed data connection between two gates in increasing rows."""

    src: str
    dst: str
    length: float  # um, routed pin-to-pin wire length
    prop: Optional[float] = None  # ps, extracted delay; None = length-derived

    @property
    def key(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class Circuit:
    name: str
    num_rows: int
    gates: tuple[Gate, ...]
    connections: tuple[Connection, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "connections", tuple(self.connections))

    @cached_property
    def gates_by_id(self) -> dict[str, Gate]:
        return {g.id: g for g in self.gates}

    def gate(self, gid: str) -> Gate:
        return self.gates_by_id[gid]

    def span(self, conn: Connection) -> int:
        return self.gate(conn.dst).row - self.gate(conn.src).row

    def propagation(self, conn: Connection, lib: CellLibrary) -> float:
        """Data propagation delay of a connection, resolved lazily against lib."""
        if conn.prop is not None:
            return conn.prop
        return conn.length * lib.prop_per_um

    @cached_property
    def fanout(self) -> dict[str, tuple[Connection, ...]]:
        out: dict[str, list[Connection]] = {g.id: [] for g in self.gates}
        for c in self.connections:
            if c.src in out:
                out[c.src].append(c)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def fanin(self) -> dict[str, tuple[Connection, ...]]:
        out: dict[str, list[Connection]] = {g.id: [] for g in self.gates}
        for c in self.connections:
            if c.dst in out:
                out[c.dst].append(c)
        return {k: tuple(v) for k, v in out.items()}


def validate_circuit(c: Circuit, lib: CellLibrary) -> list[Diagnostic]:
    """Return error diagnostics; an empty list means the circuit is well formed.

    Non-fatal observations (a clock tap order decreasing along a row) are
    logged rather than returned, so the empty-list contract stays sharp.
    """
    out: list[Diagnostic] = []
    seen: set[str] = set()
    for g in c.gates:
        if g.id in seen:
            out.append(Diagnostic("DUPLICATE_ID", g.id, "gate id appears more than once"))
        seen.add(g.id)
        if not 0 <= g.row < c.num_rows:
            out.append(
                Diagnostic("ROW_OUT_OF_RANGE", g.id, f"row {g.row} outside 0..{c.num_rows - 1}")
            )
        if g.cell not in lib.cells:
            out.append(Diagnostic("UNKNOWN_CELL", g.id, f"cell type {g.cell!r} not in library"))
    by_row: dict[int, float] = {}
    for g in c.gates:
        prev = by_row.get(g.row)
        if prev is not None and g.clock_offset < prev - 1e-12:
            log.warning(
                "clock_offset of %s decreases along row %d (%.6g after %.6g)",
                g.id,
                g.row,
                g.clock_offset,
                prev,
            )
        by_row[g.row] = max(prev, g.clock_offset) if prev is not None else g.clock_offset
    for conn in c.connections:
        ent = conn.key
        missing = False
        for gid in (conn.src, conn.dst):
            if gid not in c.gates_by_id:
                out.append(Diagnostic("UNKNOWN_GATE", ent, f"endpoint {gid!r} is not a gate"))
                missing = True
        if missing:
            continue
        if c.span(conn) < 1:
            out.append(
                Diagnostic(
                    "NONMONOTONE_ROW",
                    ent,
                    f"row({conn.dst})={c.gate(conn.dst).row} must exceed row({conn.src})={c.gate(conn.src).row}",
                )
            )
        if conn.length > lib.l_max_drive:
            out.append(
                Diagnostic(
                    "LENGTH_EXCEEDS_DRIVE",
                    ent,
                    f"length {conn.length} um exceeds l_max_drive {lib.l_max_drive} um",
                )
            )
        if conn.length < 0:
            out.append(Diagnostic("NEGATIVE_LENGTH", ent, "length must be >= 0"))
    return out


@dataclass(frozen=True)
class BufferChain:
    """A maximal run of single-fanin/single-fanout buffers between two gates."""

    source: str
    buffers: tuple[str, ...]
    sink: str
    segment_lengths: tuple[float, ...]  # len(buffers) + 1 routed hops
    connections: tuple[Connection, ...] = ()

    def __post_init__(self):
        if len(self.segment_lengths) != len(self.buffers) + 1:
            raise ValidationError(
                [
                    Diagnostic(
                        "ARITY_MISMATCH",
                        f"chain {self.source}->{self.sink}",
                        "segment_lengths must have one entry per hop",
                    )
                ]
            )


@dataclass(frozen=True)
class Schedule:
    """A solved clock-delay schedule."""

    period: float  # ps
    row_deltas: tuple[float, ...]  # ps, one per row boundary
    slack: float  # ps, uniform margin S achieved by the solver
    latency: float  # ps, sum of row_deltas
    segment_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "row_deltas", tuple(float(d) for d in self.row_deltas))


@dataclass(frozen=True)
class OptimizationConfig:
    """User-facing knobs of the schedule optimization.

    The weighted objective minimizes ``tau*T - sigma*S + lam*L``. Defaults
    emulate a strong period >> latency >> slack priority. In lexicographic
    mode the ``priority`` order is optimized criterion by criterion instead.
    """

    tau: float = 1.0
    sigma: float = 1e-8
    lam: float = 1e-4
    s_min: float = 0.0
    s_max: float = 50.0
    t_min_override: Optional[float] = None
    t_max_override: Optional[float] = None
    hold_mode: str = "reset-delay"  # or "dlplace"
    priority_mode: str = "lexicographic"  # or "weighted"
    priority: tuple[str, ...] = ("period", "latency", "slack")
    delta_max: float = 10000.0  # ps, upper bound per row delta, keeps LPs bounded
    max_skip: Optional[int] = 2  # largest supported connection row span

    def __post_init__(self):
        errs = []
        if self.s_min > self.s_max:
            errs.append(Diagnostic("INVALID_CONFIG", "s_min", "s_min must be <= s_max"))
        if min(self.tau, self.sigma, self.lam) < 0:
            errs.append(Diagnostic("INVALID_CONFIG", "weights", "weights must be >= 0"))
        if self.tau == self.sigma == self.lam == 0:
            errs.append(Diagnostic("INVALID_CONFIG", "weights", "weights must not all be zero"))
        if self.hold_mode not in ("reset-delay", "dlplace"):
            errs.append(Diagnostic("INVALID_CONFIG", "hold_mode", f"unknown mode {self.hold_mode!r}"))
        if self.priority_mode not in ("weighted", "lexicographic"):
            errs.append(
                Diagnostic("INVALID_CONFIG", "priority_mode", f"unknown mode {self.priority_mode!r}")
            )
        if sorted(self.priority) != ["latency", "period", "slack"]:
            errs.append(
                Diagnostic(
                    "INVALID_CONFIG",
                    "priority",
                    "priority must order period, latency and slack exactly once each",
                )
            )
        if self.delta_max <= 0:
            errs.append(Diagnostic("INVALID_CONFIG", "delta_max", "delta_max must be > 0"))
        if self.max_skip is not None and self.max_skip < 1:
            errs.append(Diagnostic("INVALID_CONFIG", "max_skip", "max_skip must be >= 1 or None"))
        if errs:
            raise ValidationError(errs)

    def period_bounds(self, lib: CellLibrary) -> tuple[float, float]:
        lo = lib.period_lo if self.t_min_override is None else max(self.t_min_override, lib.period_lo)
        hi = lib.t_max if self.t_max_override is None else min(self.t_max_override, lib.t_max)
        return lo, hi
