import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_repair.core import (
    BoxSpace,
    DimensionError,
    FunctionBehavior,
    GridPartition,
    RepresentativeBehavior,
    SamplingPlan,
    behavior_distance,
    cell_of,
    center_of,
    constant_behavior,
    leq_behavior,
)
from causal_repair.simulation import CONTROL_SPACE, STATE_SPACE


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        BoxSpace((1.0,), (0.0,))
    with pytest.raises(DimensionError):
        BoxSpace((0.0, 0.0), (1.0,))


def test_mountain_car_grid_counts_survive_float_noise():
    # 0.14 / 0.01 is 14.000000000000002 in floating point
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    assert g.counts == (18, 14)
    assert g.size == 252
    assert GridPartition(CONTROL_SPACE, (0.1,)).counts == (20,)


def test_ragged_last_cell():
    g = GridPartition(BoxSpace((0.0,), (1.0,)), (0.3,))
    assert g.counts == (4,)
    lo, hi = g.cell_bounds(3)
    assert lo[0] == pytest.approx(0.9) and hi == (1.0,)
    assert center_of(g, 3)[0] == pytest.approx(0.95)


def test_start_state_cell():
    # (-0.5 + 1.2) / 0.1 is 6.999999999999999; the snap keeps it in cell 7
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    assert cell_of(g, (-0.5, 0.0)).multi == (7, 7)


def test_upper_boundary_goes_to_last_cell():
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    assert cell_of(g, (0.6, 0.07)).multi == (17, 13)


def test_out_of_domain():
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    with pytest.raises(ValueError):
        cell_of(g, (0.7, 0.0))


def test_row_major_flat_index():
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    for flat in (0, 1, 13, 14, 251):
        assert g.flat_of(g.multi_of(flat)) == flat
    assert g.multi_of(14) == (1, 0)


def test_centers_match_center_of():
    g = GridPartition(STATE_SPACE, (0.2, 0.02))
    c = g.centers()
    for i in range(g.size):
        assert tuple(c[i]) == pytest.approx(center_of(g, i))
        assert cell_of(g, c[i]).flat == i


def test_cells_of_matches_scalar_lookup():
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    rng = np.random.default_rng(0)
    pts = rng.uniform(STATE_SPACE.lower, STATE_SPACE.upper, (500, 2))
    assert list(g.cells_of(pts)) == [g.flat_cell_of(p) for p in pts]


def test_grid_json_round_trip():
    g = GridPartition(STATE_SPACE, (0.1, 0.01))
    assert GridPartition.from_json(g.to_json()) == g
    assert json.loads(g.to_json())["widths"] == [0.1, 0.01]


widths = st.floats(0.01, 1.0)


@settings(max_examples=200, deadline=None)
@given(w0=widths, w1=widths, u=st.floats(0, 1), v=st.floats(0, 1))
def test_point_lies_in_its_cell(w0, w1, u, v):
    box = BoxSpace((-1.0, 2.0), (1.5, 3.0))
    g = GridPartition(box, (w0, min(w1, 1.0)))
    x = (-1.0 + 2.5 * u, 2.0 + v)
    lo, hi = g.cell_bounds(cell_of(g, x).flat)
    for k in range(2):
        assert lo[k] - 1e-9 <= x[k] <= hi[k] + 1e-9


@settings(max_examples=100, deadline=None)
@given(w=widths)
def test_cells_tile_the_box(w):
    g = GridPartition(BoxSpace((0.0,), (1.0,)), (w,))
    total = sum(g.cell_bounds(i)[1][0] - g.cell_bounds(i)[0][0] for i in range(g.size))
    assert total == pytest.approx(1.0)
    assert g.counts[0] == math.ceil(1.0 / w - 1e-9)


def test_halved_doubles_counts():
    g = GridPartition(STATE_SPACE, (0.2, 0.02))
    assert g.halved().counts == (18, 14)


def test_behavior_clamps_into_output_box():
    f = FunctionBehavior(lambda x: (5.0,), STATE_SPACE, CONTROL_SPACE)
    assert f((0.0, 0.0)) == (1.0,)


def test_representative_behavior_evaluates_to_cell_centres():
    ig = GridPartition(STATE_SPACE, (0.9, 0.07))
    og = GridPartition(CONTROL_SPACE, (0.5,))
    g = RepresentativeBehavior(ig, og, [0, 1, 2, 3])
    assert g((-1.0, -0.05)) == (-0.75,)
    assert g((0.5, 0.05)) == (0.75,)
    assert g.evaluate_many(np.array([[-1.0, -0.05], [0.5, 0.05]])).ravel().tolist() == \
        [-0.75, 0.75]
    assert RepresentativeBehavior.from_dict(g.to_dict()) == g


def test_representative_behavior_rejects_bad_map():
    ig = GridPartition(STATE_SPACE, (0.9, 0.07))
    og = GridPartition(CONTROL_SPACE, (0.5,))
    with pytest.raises(DimensionError):
        RepresentativeBehavior(ig, og, [0, 1])
    with pytest.raises(IndexError):
        RepresentativeBehavior(ig, og, [0, 1, 2, 4])


def test_distance_and_order():
    ig = GridPartition(BoxSpace((0.0,), (2.0,)), (1.0,))
    og = GridPartition(BoxSpace((0.0,), (4.0,)), (1.0,))
    base = RepresentativeBehavior(ig, og, [0, 3])
    f1 = RepresentativeBehavior(ig, og, [1, 2])
    f2 = RepresentativeBehavior(ig, og, [2, 1])
    assert behavior_distance(base, f2) == 2.0
    assert leq_behavior(f1, f2, base)
    assert not leq_behavior(f2, f1, base)
    assert leq_behavior(base, f1, base)


def test_distance_needs_probe_for_opaque_behaviors():
    a = constant_behavior(0.0, STATE_SPACE, CONTROL_SPACE)
    b = constant_behavior(0.5, STATE_SPACE, CONTROL_SPACE)
    with pytest.raises(ValueError):
        behavior_distance(a, b)
    assert behavior_distance(a, b, SamplingPlan.of([(0.0, 0.0)])) == 0.5
