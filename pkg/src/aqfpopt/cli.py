"""Command-line front end: optimize, verify, gen and sweep subcommands.

Exit codes are stable across commands: 0 success, 1 usage or input errors,
2 infeasible schedule, 3 verification failure. The ``QPRO_LOG`` environment
variable (error, warn, info, debug) controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import random
import sys
import time
from importlib import resources
from typing import Optional

from aqfpopt import __version__
from aqfpopt.bufferopt import MalformedChainError, RemovalPlan, remove_buffers
from aqfpopt.ingest import (
    LibraryFormatError,
    ReportFormatError,
    emit_report,
    parse_circuit,
    parse_library,
    parse_report,
    render_report_table,
    schedule_from_report,
    serialize_circuit,
    serialize_report,
)
from aqfpopt.model import (
    BUFFER_CELL,
    CellLibrary,
    Circuit,
    Connection,
    Gate,
    OptimizationConfig,
    ValidationError,
    validate_circuit,
    validate_library,
)
from aqfpopt.solver import InfeasibleScheduleError, explore, optimize_schedule
from aqfpopt.timing import UnsupportedSkipError, build_constraints, sta_check

log = logging.getLogger("aqfpopt")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_VERIFY = 3

#: Built-in sweep presets. table1a/1b/1c are single optimizer configurations
#: at different priorities; table3 pairs a baseline run against a
#: buffer-removal run and reports the relative change.
PRESETS = ("table1a", "table1b", "table1c", "table3")


def reference_library() -> CellLibrary:
    """The library shipped with the package (uniform cells, 5 GHz limit)."""
    text = resources.files("aqfpopt").joinpath("data/reference.qlib.json").read_text()
    return parse_library(text)


# ---------------------------------------------------------------------------
# Synthetic benchmark generation

_GATE_CELLS = ("majority3", "splitter2", "splitter3", "splitter4")


def generate_circuit(
    rows: int,
    width: int,
    seed: int,
    chain_prob: float = 0.0,
    skip_prob: float = 0.0,
    adversarial: bool = False,
    lib: Optional[CellLibrary] = None,
) -> Circuit:
    """Deterministic random pipeline: ``width`` gates per row, feedforward
    connections to the next row, optional buffer chains and phase-skipping
    connections.

    Wire lengths are drawn across the full drivable range, but extracted
    propagation delays are emitted with a bounded per-row spread so the
    result is schedulable by construction; ``adversarial`` drops the
    explicit delays and lets raw wire lengths produce infeasible instances.
    """
    if rows < 1 or width < 1:
        raise ValueError("rows and width must be >= 1")
    lib = lib if lib is not None else reference_library()
    rng = random.Random(seed)
    pool = [cell for cell in _GATE_CELLS if cell in lib.cells] or sorted(lib.cells)

    prop_base, prop_spread = 25.0, 35.0

    def draw_prop() -> Optional[float]:
        if adversarial:
            return None
        return prop_base + rng.uniform(0.0, prop_spread)

    gates: list[Gate] = []
    grid: list[list[str]] = []
    row_base_of: list[float] = []
    row_tap: list[float] = []
    base = 0.0
    for r in range(rows):
        if r:
            base += rng.uniform(0.5, 2.0)
        row_base_of.append(base)
        tap = 0.0
        ids = []
        for w in range(width):
            tap += rng.uniform(0.0, 0.1)
            gid = f"g{r}_{w}"
            gates.append(Gate(id=gid, cell=rng.choice(pool), row=r, clock_offset=base + tap))
            ids.append(gid)
        grid.append(ids)
        row_tap.append(tap)

    connections: list[Connection] = []
    seen_pairs: set[tuple[str, str]] = set()

    def connect(src: str, dst: str, length: float, prop: Optional[float]) -> None:
        if (src, dst) in seen_pairs:
            return
        seen_pairs.add((src, dst))
        connections.append(Connection(src=src, dst=dst, length=length, prop=prop))

    for r in range(rows - 1):
        for dst in grid[r + 1]:
            src = rng.choice(grid[r])
            connect(src, dst, rng.uniform(0.0, lib.l_max_drive), draw_prop())
            if width > 1 and rng.random() < 0.3:
                connect(rng.choice(grid[r]), dst, rng.uniform(0.0, lib.l_max_drive), draw_prop())

    chain_count = 0
    if BUFFER_CELL in lib.cells:
        for r in range(rows):
            if rng.random() >= chain_prob:
                continue
            k = rng.randint(1, 4)
            if r + k + 1 > rows - 1:
                continue
            src = rng.choice(grid[r])
            dst = rng.choice(grid[r + k + 1])
            nodes = [src]
            for j in range(1, k + 1):
                row_tap[r + j] += rng.uniform(0.0, 0.1)
                gid = f"c{chain_count}_{j}"
                gates.append(
                    Gate(
                        id=gid,
                        cell=BUFFER_CELL,
                        row=r + j,
                        clock_offset=row_base_of[r + j] + row_tap[r + j],
                    )
                )
                nodes.append(gid)
            nodes.append(dst)
            for a, b in zip(nodes, nodes[1:]):
                connect(a, b, rng.uniform(0.1, 0.45) * lib.l_max_drive, draw_prop())
            chain_count += 1

    for r in range(rows - 2):
        if rng.random() < skip_prob:
            src = rng.choice(grid[r])
            dst = rng.choice(grid[r + 2])
            prop = None if adversarial else draw_prop() + draw_prop()
            connect(src, dst, rng.uniform(0.0, lib.l_max_drive), prop)

    return Circuit(
        name=f"gen-r{rows}-w{width}-s{seed}",
        num_rows=rows,
        gates=tuple(gates),
        connections=tuple(connections),
    )


# ---------------------------------------------------------------------------
# Shared plumbing


def _configure_logging() -> None:
    level = {
        "error": logging.ERROR,
        "warn": logging.WARNING,
        "info": logging.INFO,
        "debug": logging.DEBUG,
    }.get(os.environ.get("QPRO_LOG", "warn").lower(), logging.WARNING)
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)
    log.setLevel(level)


def _fail(diagnostics, code: int = EXIT_INPUT) -> int:
    for d in diagnostics:
        print(str(d), file=sys.stderr)
    return code


def _load_inputs(args):
    try:
        with open(args.circuit, "r", encoding="utf-8") as fh:
            circuit = parse_circuit(fh.read())
    except OSError as e:
        raise ValidationError([_io_diag(args.circuit, e)])
    try:
        with open(args.lib, "r", encoding="utf-8") as fh:
            lib = parse_library(fh.read())
    except OSError as e:
        raise ValidationError([_io_diag(args.lib, e)])
    diags = validate_circuit(circuit, lib)
    if diags:
        raise ValidationError(diags)
    for d in validate_library(lib):
        log.warning("%s", d)
    return circuit, lib


def _io_diag(path, err):
    from aqfpopt.model import Diagnostic

    return Diagnostic("IO_ERROR", str(path), str(err))


def _parse_priority(text: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in text.split(","))
    if sorted(parts) != ["latency", "period", "slack"]:
        raise argparse.ArgumentTypeError(
            "--priority must list period, latency and slack exactly once each"
        )
    return parts


def _config_from_args(args) -> OptimizationConfig:
    weighted = any(getattr(args, name) is not None for name in ("tau", "sigma", "lam"))
    return OptimizationConfig(
        tau=args.tau if args.tau is not None else 1.0,
        sigma=args.sigma if args.sigma is not None else 1e-8,
        lam=args.lam if args.lam is not None else 1e-4,
        s_min=args.smin,
        s_max=args.smax,
        t_min_override=args.tmin,
        t_max_override=args.tmax,
        hold_mode=args.hold_mode,
        priority_mode="weighted" if weighted else "lexicographic",
        priority=args.priority,
        max_skip=args.max_skip,
    )


def _config_echo(cfg: OptimizationConfig, remove_buffers_flag: bool) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["priority"] = list(cfg.priority)
    doc["remove_buffers"] = remove_buffers_flag
    return doc


def _manifest(args, cfg, remove_flag, timings, summary) -> dict:
    return {
        "inputs": {"circuit": str(args.circuit), "lib": str(args.lib)},
        "config": _config_echo(cfg, remove_flag),
        "tool_version": __version__,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "summary": summary,
    }


# ---------------------------------------------------------------------------
# Subcommands


def cmd_optimize(args) -> int:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        circuit, lib = _load_inputs(args)
    except ValidationError as e:
        return _fail(e.diagnostics)
    timings["parse"] = time.perf_counter() - t0

    cfg = _config_from_args(args)
    plan: Optional[RemovalPlan] = None
    if args.remove_buffers:
        t0 = time.perf_counter()
        try:
            circuit, plan = remove_buffers(circuit, lib, max_skip=args.max_skip)
        except MalformedChainError as e:
            return _fail(e.diagnostics)
        timings["buffer_removal"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        tcs = build_constraints(circuit, lib, cfg)
    except UnsupportedSkipError as e:
        return _fail(e.diagnostics)
    timings["constraints"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        sched = optimize_schedule(tcs, lib, cfg)
    except InfeasibleScheduleError as e:
        return _fail(e.diagnostics, EXIT_INFEASIBLE)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    slacks = sta_check(circuit, lib, sched, cfg.hold_mode) if circuit.connections else None
    timings["verify"] = time.perf_counter() - t0

    summary = f"{1000.0 / sched.period:.4g} GHz, latency {sched.latency:.6g} ps"
    report = emit_report(
        sched,
        slacks,
        plan,
        manifest=_manifest(args, cfg, args.remove_buffers, timings, summary),
        verbose=args.verbose,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(serialize_report(report))
    print(render_report_table(report))
    if args.verbose:
        for entry in report["connections"]:
            print(
                f"{entry['src']} -> {entry['dst']}: setup {entry['setup_slack_ps']:.4g} ps, "
                f"hold {entry['hold_slack_ps']:.4g} ps"
            )
    if slacks is not None and not slacks.passing(-1e-6):
        print(f"schedule fails STA: min slack {slacks.min_slack:.6g} ps", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        circuit, lib = _load_inputs(args)
    except ValidationError as e:
        return _fail(e.diagnostics)
    try:
        with open(args.schedule, "r", encoding="utf-8") as fh:
            report = parse_report(fh.read())
    except OSError as e:
        return _fail([_io_diag(args.schedule, e)])
    except ReportFormatError as e:
        return _fail(e.diagnostics)

    manifest_cfg = (report.get("manifest") or {}).get("config", {})
    if manifest_cfg.get("remove_buffers"):
        circuit, _ = remove_buffers(circuit, lib, max_skip=manifest_cfg.get("max_skip", 2))
        log.info("re-applied buffer removal recorded in the report manifest")
    sched = schedule_from_report(report)
    if len(sched.row_deltas) != circuit.num_rows - 1:
        return _fail(
            [
                _schema_diag(
                    f"report has {len(sched.row_deltas)} row deltas, circuit needs {circuit.num_rows - 1}"
                )
            ]
        )
    hold_mode = manifest_cfg.get("hold_mode", args.hold_mode)
    slacks = sta_check(circuit, lib, sched, hold_mode)
    if slacks.passing(-1e-6):
        ms = "n/a" if slacks.min_slack is None else f"{slacks.min_slack:.6g} ps"
        print(f"schedule verifies: min slack {ms}")
        return EXIT_OK
    for e in slacks.entries:
        if min(e.setup_slack, e.hold_slack) < -1e-6:
            print(
                f"violation on {e.src}->{e.dst}: setup {e.setup_slack:.6g} ps, hold {e.hold_slack:.6g} ps",
                file=sys.stderr,
            )
    return EXIT_VERIFY


def _schema_diag(message):
    from aqfpopt.model import Diagnostic

    return Diagnostic("SCHEMA_MISMATCH", "schedule", message)


def cmd_gen(args) -> int:
    lib = None
    if args.lib:
        try:
            with open(args.lib, "r", encoding="utf-8") as fh:
                lib = parse_library(fh.read())
        except (OSError, LibraryFormatError) as e:
            diags = e.diagnostics if isinstance(e, LibraryFormatError) else [_io_diag(args.lib, e)]
            return _fail(diags)
    circuit = generate_circuit(
        rows=args.rows,
        width=args.width,
        seed=args.seed,
        chain_prob=args.chain_prob,
        skip_prob=args.skip_prob,
        adversarial=args.adversarial,
        lib=lib,
    )
    text = serialize_circuit(circuit)
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _preset_config(name: str) -> OptimizationConfig:
    base = OptimizationConfig(priority_mode="lexicographic")
    if name == "table1a":
        return base
    if name == "table1b":
        return dataclasses.replace(base, s_min=5.0)
    if name == "table1c":
        return dataclasses.replace(base, priority=("period", "slack", "latency"))
    raise ValueError(name)


def cmd_sweep(args) -> int:
    names = [p.strip() for p in (args.configs or "").split(",") if p.strip()]
    if not names:
        print("sweep requires --configs with at least one preset", file=sys.stderr)
        return EXIT_INPUT
    unknown = [p for p in names if p not in PRESETS]
    if unknown:
        print(f"unknown presets: {', '.join(unknown)} (choose from {', '.join(PRESETS)})", file=sys.stderr)
        return EXIT_INPUT
    try:
        circuit, lib = _load_inputs(args)
    except ValidationError as e:
        return _fail(e.diagnostics)

    header = f"{'config':<14} {'freq (GHz)':>11} {'latency (ps)':>13} {'min slack (ps)':>15} {'buffers saved':>14}"
    lines = [header, "-" * len(header)]
    results = []

    plain = [n for n in names if n != "table3"]
    explored = {}
    if plain:
        tcs = build_constraints(circuit, lib, _preset_config(plain[0]))
        rows = explore(tcs, lib, [_preset_config(n) for n in plain], labels=plain)
        explored = {row.label: row for row in rows}

    def sta_of(circ, sched, cfg):
        return sta_check(circ, lib, sched, cfg.hold_mode) if circ.connections else None

    for name in names:
        if name != "table3":
            row = explored[name]
            if row.schedule is None:
                lines.append(f"{name:<14} {'infeasible':>11} {'-':>13} {'-':>15} {'-':>14}")
                results.append({"config": name, "error": [str(d) for d in row.error]})
                continue
            sched = row.schedule
            slacks = sta_of(circuit, sched, row.config)
            ms = "n/a" if slacks is None or slacks.min_slack is None else f"{slacks.min_slack:.2f}"
            lines.append(
                f"{name:<14} {1000.0 / sched.period:>11.3f} {sched.latency:>13.2f} {ms:>15} {'-':>14}"
            )
            results.append(
                {
                    "config": name,
                    "frequency_ghz": 1000.0 / sched.period,
                    "latency_ps": sched.latency,
                    "min_slack_ps": None if slacks is None else slacks.min_slack,
                }
            )
            continue
        try:
            cfg = _preset_config("table1a")
            base_sched = optimize_schedule(build_constraints(circuit, lib, cfg), lib, cfg)
            removed_circ, plan = remove_buffers(circuit, lib, max_skip=args.max_skip)
            ps_sched = optimize_schedule(build_constraints(removed_circ, lib, cfg), lib, cfg)
        except (InfeasibleScheduleError, UnsupportedSkipError, MalformedChainError) as e:
            log.warning("preset %s failed: %s", name, e)
            lines.append(f"{name:<14} {'infeasible':>11} {'-':>13} {'-':>15} {'-':>14}")
            results.append({"config": name, "error": [str(d) for d in e.diagnostics]})
            continue
        saved_pct = 100.0 * plan.buffers_removed / plan.buffers_total if plan.buffers_total else 0.0
        freq0, freq1 = 1000.0 / base_sched.period, 1000.0 / ps_sched.period
        dfreq = 100.0 * (freq1 - freq0) / freq0
        dlat = (
            100.0 * (ps_sched.latency - base_sched.latency) / base_sched.latency
            if base_sched.latency
            else 0.0
        )
        for tag, sched, circ in (("baseline", base_sched, circuit), ("phase-skip", ps_sched, removed_circ)):
            slacks = sta_of(circ, sched, cfg)
            ms = "n/a" if slacks is None or slacks.min_slack is None else f"{slacks.min_slack:.2f}"
            lines.append(
                f"{tag:<14} {1000.0 / sched.period:>11.3f} {sched.latency:>13.2f} {ms:>15} "
                f"{(f'{saved_pct:.1f}%' if tag == 'phase-skip' else '-'):>14}"
            )
        lines.append(f"{'change':<14} {dfreq:>10.1f}% {dlat:>12.1f}% {'':>15} {saved_pct:>13.1f}%")
        results.append(
            {
                "config": name,
                "baseline": {"frequency_ghz": freq0, "latency_ps": base_sched.latency},
                "phase_skipping": {"frequency_ghz": freq1, "latency_ps": ps_sched.latency},
                "frequency_change_pct": dfreq,
                "latency_change_pct": dlat,
                "buffers_saved_pct": saved_pct,
            }
        )

    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"circuit": circuit.name, "results": results}, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_common_solver_flags(sp) -> None:
    sp.add_argument("--priority", type=_parse_priority, default=("period", "latency", "slack"),
                    help="lexicographic criterion order, e.g. period,latency,slack")
    sp.add_argument("--tau", type=float, default=None, help="period weight (enables weighted mode)")
    sp.add_argument("--sigma", type=float, default=None, help="slack weight (enables weighted mode)")
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="latency weight (enables weighted mode)")
    sp.add_argument("--smin", type=float, default=0.0, help="minimum slack in ps")
    sp.add_argument("--smax", type=float, default=50.0, help="maximum rewarded slack in ps")
    sp.add_argument("--tmin", type=float, default=None, help="period lower bound override in ps")
    sp.add_argument("--tmax", type=float, default=None, help="period upper bound override in ps")
    sp.add_argument("--hold-mode", choices=("reset-delay", "dlplace"), default="reset-delay",
                    help="hold window model: true reset delay, or the full period")
    sp.add_argument("--max-skip", type=int, default=2,
                    help="largest row span a connection may cover")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqfpopt",
        description="Post-routing clock-delay scheduling and buffer removal for "
        "delay-line-clocked AQFP circuits.",
    )
    parser.add_argument("--version", action="version", version=f"aqfpopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("optimize", help="compute a timing-closed clock-delay schedule")
    sp.add_argument("--circuit", required=True, help="circuit file (*.qc.json)")
    sp.add_argument("--lib", required=True, help="cell library file (*.qlib.json)")
    sp.add_argument("--remove-buffers", action="store_true",
                    help="run globally optimal buffer removal before scheduling")
    sp.add_argument("--out", default=None, help="write the report JSON here")
    sp.add_argument("--verbose", action="store_true", help="include per-connection detail")
    _add_common_solver_flags(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("verify", help="re-check a stored schedule against the raw timing rules")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--lib", required=True)
    sp.add_argument("--schedule", required=True, help="report file produced by optimize")
    sp.add_argument("--hold-mode", choices=("reset-delay", "dlplace"), default="reset-delay",
                    help="hold model when the report manifest does not record one")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("gen", help="emit a synthetic benchmark circuit")
    sp.add_argument("--rows", type=int, required=True)
    sp.add_argument("--width", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--chain-prob", type=float, default=0.0,
                    help="per-row probability of inserting a buffer chain")
    sp.add_argument("--skip-prob", type=float, default=0.0,
                    help="per-row probability of a phase-skipping connection")
    sp.add_argument("--adversarial", action="store_true",
                    help="disable the schedulability guarantee")
    sp.add_argument("--lib", default=None, help="library whose envelope the generator targets")
    sp.add_argument("--out", default="-", help="output path, or - for stdout")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("sweep", help="compare optimizer configurations on one circuit")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--lib", required=True)
    sp.add_argument("--configs", required=True,
                    help=f"comma-separated presets from: {', '.join(PRESETS)}")
    sp.add_argument("--max-skip", type=int, default=2)
    sp.add_argument("--out", default=None, help="write the comparison JSON here")
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as e:
        return _fail(e.diagnostics)


if __name__ == "__main__":
    sys.exit(main())
