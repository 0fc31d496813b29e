import time
from pathlib import Path

import pytest

from causal_repair.core import BoxSpace, GridPartition
from causal_repair.discretization import center_sampled
from causal_repair.hp_model import build_model, encode
from causal_repair.search import FailureStatement, SamplerConfig, sample_counterfactual
from causal_repair.simulation import (
    CONTROL_SPACE,
    STATE_SPACE,
    CellMapSimulator,
    ClosedLoopSimulator,
    flawed_controller,
    mountain_car_config,
)

DATA = Path(__file__).resolve().parent.parent / "src" / "causal_repair" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def mc_sim():
    return ClosedLoopSimulator(mountain_car_config())


@pytest.fixture(scope="session")
def reduced(mc_sim):
    """Flawed controller on the coarse 9x7 input / 10 output grid, centre-sampled."""
    g = center_sampled(flawed_controller(), GridPartition(STATE_SPACE, (0.2, 0.02)),
                       GridPartition(CONTROL_SPACE, (0.2,)))
    model = build_model(g.input_grid, g.output_grid, mc_sim)
    return model, mc_sim, encode(g, model)


@pytest.fixture(scope="session")
def reduced_counterfactuals(reduced):
    """The first 25 seeds (counting up from 0) whose sampling succeeds on the reduced grid."""
    model, sim, _ = reduced
    t = time.perf_counter()
    found, skipped, seed = [], [], 0
    while len(found) < 25:
        vp = sample_counterfactual(model, sim, SamplerConfig(seed=seed))
        if isinstance(vp, FailureStatement):
            skipped.append(seed)
        else:
            found.append((seed, vp))
        seed += 1
    return found, skipped, time.perf_counter() - t


def unit_grids(m, n, d_out=1):
    """``m`` unit input cells on a line, ``n`` unit output bins per output dimension."""
    ig = GridPartition(BoxSpace((0.0,), (float(m),)), (1.0,))
    og = GridPartition(BoxSpace((0.0,) * d_out, (float(n),) * d_out), (1.0,) * d_out)
    return ig, og


def table_sim(fn, output_grid):
    """Simulator over per-cell output multi-indices: ``fn(list of tuples) -> bool``."""
    return CellMapSimulator(lambda cm: fn([output_grid.multi_of(j) for j in cm]))


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
