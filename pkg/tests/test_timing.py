import random

import pytest

from aqfpopt.cli import generate_circuit
from aqfpopt.model import (
    Circuit,
    Connection,
    Gate,
    OptimizationConfig,
    Schedule,
    pwl_eval,
)
from aqfpopt.timing import (
    UnsupportedSkipError,
    build_constraints,
    delta_clk,
    f_hold,
    f_setup,
    sta_check,
)


def three_row_skip_circuit():
    return Circuit(
        name="skip",
        num_rows=3,
        gates=(
            Gate("a", "majority3", 0, 0.0),
            Gate("b", "majority3", 1, 1.0),
            Gate("c", "majority3", 2, 2.0),
        ),
        connections=(
            Connection("a", "b", 5.0, prop=5.0),
            Connection("a", "c", 9.0, prop=9.0),  # skips row 1
        ),
    )


class TestDeltaClk:
    @pytest.mark.parametrize(
        "src_off,dst_off,expected", [(3.0, 5.0, 2.0), (4.0, 4.0, 0.0), (5.0, 3.0, -2.0)]
    )
    def test_offset_difference(self, src_off, dst_off, expected):
        c = Circuit(
            name="d",
            num_rows=2,
            gates=(Gate("a", "majority3", 0, src_off), Gate("b", "majority3", 1, dst_off)),
            connections=(Connection("a", "b", 1.0),),
        )
        assert delta_clk(c, c.connections[0]) == expected


class TestBuildConstraints:
    def test_adjacent_row_shape(self, two_row_circuit, fixture_library):
        tcs = build_constraints(two_row_circuit, fixture_library, OptimizationConfig())
        assert len(tcs.constraints) == 2
        setup = next(tc for tc in tcs.constraints if tc.kind == "setup")
        hold = next(tc for tc in tcs.constraints if tc.kind == "hold")
        assert setup.delta_rows == (0,) and hold.delta_rows == (0,)
        assert setup.sense == ">=" and hold.sense == "<="
        assert setup.rhs == pytest.approx(3.0)  # prop 5 - delta_clk 2
        assert hold.rhs == pytest.approx(3.0)

    def test_fixture_values_via_pseudo_variables(self, two_row_circuit, fixture_library):
        tcs = build_constraints(two_row_circuit, fixture_library, OptimizationConfig())
        setup = next(tc for tc in tcs.constraints if tc.kind == "setup")
        lhs = setup.lhs()
        assert lhs.coefficients == {"delta_0": 1.0, "FS[majority3,majority3]": -1.0, "S": -1.0}
        # combined terms on the fixture: F_S = 15, F_H = 5 + rd(T)
        assert f_setup(fixture_library, "majority3", "majority3", 200.0) == pytest.approx(15.0)
        assert f_hold(fixture_library, "majority3", "majority3", 200.0) == pytest.approx(5.0 + 72.0)

    def test_skip_connection_references_both_deltas(self, fixture_library):
        tcs = build_constraints(three_row_skip_circuit(), fixture_library, OptimizationConfig())
        skip = [tc for tc in tcs.constraints if tc.dst == "c"]
        assert all(tc.delta_rows == (0, 1) for tc in skip)
        adj = [tc for tc in tcs.constraints if tc.dst == "b"]
        assert all(tc.delta_rows == (0,) for tc in adj)

    def test_span_cap_enforced(self, fixture_library):
        c = Circuit(
            name="wide",
            num_rows=4,
            gates=(Gate("a", "majority3", 0, 0.0), Gate("d", "majority3", 3, 3.0)),
            connections=(Connection("a", "d", 9.0),),
        )
        with pytest.raises(UnsupportedSkipError) as e:
            build_constraints(c, fixture_library, OptimizationConfig(max_skip=2))
        assert e.value.diagnostics[0].code == "UNSUPPORTED_SKIP"
        assert e.value.diagnostics[0].entity == "a->d"
        tcs = build_constraints(c, fixture_library, OptimizationConfig(max_skip=None))
        assert {tc.delta_rows for tc in tcs.constraints} == {(0, 1, 2)}

    def test_latency_definition_covers_all_rows(self, fixture_library):
        tcs = build_constraints(three_row_skip_circuit(), fixture_library, OptimizationConfig())
        lat = tcs.latency_definition()
        assert lat.coefficients == {"L": 1.0, "delta_0": -1.0, "delta_1": -1.0}


class TestStaCheck:
    def test_fixture_slacks_at_200ps(self, two_row_circuit, fixture_library):
        sched = Schedule(period=200.0, row_deltas=(18.0,), slack=0.0, latency=18.0)
        rep = sta_check(two_row_circuit, fixture_library, sched)
        (entry,) = rep.entries
        assert entry.setup_slack == pytest.approx(0.0, abs=1e-12)
        assert entry.hold_slack == pytest.approx(62.0, abs=1e-12)
        assert rep.min_slack == pytest.approx(0.0, abs=1e-12)

    def test_setup_violation_detected(self, two_row_circuit, fixture_library):
        sched = Schedule(period=200.0, row_deltas=(17.0,), slack=0.0, latency=17.0)
        rep = sta_check(two_row_circuit, fixture_library, sched)
        assert rep.entries[0].setup_slack == pytest.approx(-1.0)
        assert not rep.passing()
        assert rep.worst == ("a->b",)

    def test_no_connections_min_slack_none(self, fixture_library):
        c = Circuit(name="e", num_rows=1, gates=(Gate("a", "majority3", 0, 0.0),), connections=())
        rep = sta_check(c, fixture_library, Schedule(period=200.0, row_deltas=(), slack=0.0, latency=0.0))
        assert rep.min_slack is None
        assert rep.passing()

    def test_dlplace_mode_uses_period_as_window(self, two_row_circuit, fixture_library):
        sched = Schedule(period=200.0, row_deltas=(18.0,), slack=0.0, latency=18.0)
        rep = sta_check(two_row_circuit, fixture_library, sched, hold_mode="dlplace")
        assert rep.entries[0].hold_slack == pytest.approx(62.0 + (200.0 - 72.0))


class TestReformulationEquivalence:
    def equivalence_case(self, circuit, lib, rng, hold_mode):
        t_lo, t_hi = lib.period_lo, lib.t_max
        period = rng.uniform(t_lo, t_hi)
        deltas = [rng.uniform(0.0, 80.0) for _ in range(circuit.num_rows - 1)]
        sched = Schedule(
            period=period, row_deltas=tuple(deltas), slack=0.0, latency=sum(deltas)
        )
        tcs = build_constraints(circuit, lib, OptimizationConfig(max_skip=None))
        residuals = tcs.residuals(lib, period, deltas, hold_mode)
        rep = sta_check(circuit, lib, sched, hold_mode)
        assert len(residuals) == 2 * len(circuit.connections)
        for entry in rep.entries:
            assert residuals[(entry.src, entry.dst, "setup")] == pytest.approx(
                entry.setup_slack, abs=1e-9
            )
            assert residuals[(entry.src, entry.dst, "hold")] == pytest.approx(
                entry.hold_slack, abs=1e-9
            )

    def test_random_circuits_both_modes(self, ref_lib):
        rng = random.Random(123)
        for trial in range(30):
            circuit = generate_circuit(
                rows=rng.randint(2, 8),
                width=rng.randint(1, 4),
                seed=rng.randint(0, 10**6),
                chain_prob=0.4,
                skip_prob=0.4,
                lib=ref_lib,
            )
            for mode in ("reset-delay", "dlplace"):
                self.equivalence_case(circuit, ref_lib, rng, mode)

    def test_negative_delta_clk_is_legal(self, fixture_library):
        c = Circuit(
            name="neg",
            num_rows=2,
            gates=(Gate("a", "majority3", 0, 5.0), Gate("b", "majority3", 1, 3.0)),
            connections=(Connection("a", "b", 5.0, prop=5.0),),
        )
        tcs = build_constraints(c, fixture_library, OptimizationConfig())
        setup = next(tc for tc in tcs.constraints if tc.kind == "setup")
        assert setup.rhs == pytest.approx(7.0)  # 5 - (-2)


class TestDlplaceRelaxation:
    def test_hold_bound_never_tighter(self, ref_lib):
        rng = random.Random(5)
        cells = sorted(ref_lib.cells)
        for _ in range(200):
            src, dst = rng.choice(cells), rng.choice(cells)
            t = rng.uniform(ref_lib.period_lo, ref_lib.t_max)
            assert f_hold(ref_lib, src, dst, t, "dlplace") >= f_hold(
                ref_lib, src, dst, t, "reset-delay"
            )
            assert pwl_eval(ref_lib.timing(src).rd, t) < t

    def test_feasible_schedule_stays_feasible_under_dlplace(self, ref_lib):
        rng = random.Random(6)
        for trial in range(10):
            circuit = generate_circuit(rows=5, width=3, seed=trial, lib=ref_lib)
            deltas = tuple(rng.uniform(50.0, 90.0) for _ in range(circuit.num_rows - 1))
            sched = Schedule(
                period=250.0, row_deltas=deltas, slack=0.0, latency=sum(deltas)
            )
            reset = sta_check(circuit, ref_lib, sched, "reset-delay")
            relaxed = sta_check(circuit, ref_lib, sched, "dlplace")
            for a, b in zip(reset.entries, relaxed.entries):
                assert b.hold_slack >= a.hold_slack - 1e-12
                assert b.setup_slack == pytest.approx(a.setup_slack, abs=1e-12)
