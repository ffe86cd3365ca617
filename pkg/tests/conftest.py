import pytest

from aqfpopt.cli import reference_library
from aqfpopt.model import (
    CellLibrary,
    CellTiming,
    Circuit,
    Connection,
    Gate,
    PiecewiseLinear,
)

BP2 = (0.0, 100.0, 300.0)
BP3 = (0.0, 100.0, 200.0, 300.0)


def const_fn(value, bps=BP2):
    return PiecewiseLinear(bps, tuple((0.0, value) for _ in range(len(bps) - 1)))


def make_library(cells, bps=BP2, t_min=100.0, t_max=300.0, max_frequency=10.0,
                 l_max_drive=120.0, l_buffer=10.0, prop_per_um=1.0):
    return CellLibrary(
        cells=cells,
        breakpoints=bps,
        l_max_drive=l_max_drive,
        l_buffer=l_buffer,
        prop_per_um=prop_per_um,
        t_min=t_min,
        t_max=t_max,
        max_frequency=max_frequency,
    )


@pytest.fixture(scope="session")
def fixture_library():
    """Uniform two-segment library: c2q=10, setup=5, hold=5, rd=0.3T+10 / 0.36T."""
    timing = CellTiming(
        c2q=const_fn(10.0),
        setup=const_fn(5.0),
        hold=const_fn(5.0),
        rd=PiecewiseLinear(BP2, ((0.3, 10.0), (0.36, 0.0))),
    )
    return make_library({"buffer": timing, "majority3": timing})


@pytest.fixture(scope="session")
def three_segment_library():
    """Continuous three-segment uniform library spanning 100..300 ps."""
    timing = CellTiming(
        c2q=PiecewiseLinear(BP3, ((0.02, 8.0),) * 3),
        setup=PiecewiseLinear(BP3, ((0.01, 4.0),) * 3),
        hold=PiecewiseLinear(BP3, ((0.01, 3.0),) * 3),
        rd=PiecewiseLinear(BP3, ((0.30, 6.0), (0.36, 0.0), (0.30, 12.0))),
    )
    cells = {name: timing for name in ("buffer", "majority3", "splitter2", "splitter3", "splitter4")}
    return make_library(cells, bps=BP3)


@pytest.fixture(scope="session")
def ref_lib():
    return reference_library()


@pytest.fixture
def two_row_circuit():
    """The worked 2-row example: prop 5 ps, base clock difference 2 ps."""
    return Circuit(
        name="fix2row",
        num_rows=2,
        gates=(
            Gate(id="a", cell="majority3", row=0, clock_offset=0.0),
            Gate(id="b", cell="majority3", row=1, clock_offset=2.0),
        ),
        connections=(Connection(src="a", dst="b", length=5.0, prop=5.0),),
    )
