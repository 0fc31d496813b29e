import csv
import json
import math

import numpy as np
import pytest

from causal_repair.core import BoxSpace, FunctionBehavior
from causal_repair.simulation import (
    CONTROL_SPACE,
    STATE_SPACE,
    NeuralBehavior,
    NumericDivergenceError,
    Plant,
    SimulatorConfig,
    energy_pumping_controller,
    eval_neural,
    flawed_controller,
    load_weights,
    mountain_car_config,
    mountain_car_step,
    parse_formula,
    reference_controller,
    simulate,
    zero_controller,
)
from causal_repair.simulation.mountain_car import GOAL

from .conftest import GOLDEN


def test_step_closed_form():
    pos, vel = mountain_car_step((-0.5, 0.0), 1.0)
    assert pos == -0.5
    assert abs(vel - (0.0015 - 0.0025 * math.cos(-1.5))) < 1e-12


def test_step_uses_old_velocity_for_position():
    pos, _ = mountain_car_step((-0.5, 0.03), 0.0)
    assert pos == pytest.approx(-0.47)


def test_step_clamps_and_stops_at_left_wall():
    pos, vel = mountain_car_step((-1.19, -0.05), -1.0)
    assert pos == -1.2 and vel == 0.0
    _, vel = mountain_car_step((-math.pi / 6, 0.0699), 1.0)
    assert vel == 0.07


def test_scripted_controller_verdicts(mc_sim):
    assert mc_sim(energy_pumping_controller())
    assert not mc_sim(zero_controller())
    assert not mc_sim(flawed_controller())


def test_energy_pumping_reaches_goal_late():
    verdict, tr = simulate(energy_pumping_controller(), mountain_car_config())
    assert verdict
    assert len(tr.states) - 1 == 106
    assert tr.states[-1][0] >= GOAL


def test_early_stop_does_not_change_verdicts():
    for f in (energy_pumping_controller(), flawed_controller(), zero_controller(),
              flawed_controller(-0.3, 0.1)):
        a = simulate(f, mountain_car_config(stop_at_goal=True))[0]
        b = simulate(f, mountain_car_config(stop_at_goal=False))[0]
        assert a == b


def test_time_optimal_push_left_then_right(mc_sim):
    # pushing left for 17 steps then right reaches the goal in 64 steps
    state, t = (-0.5, 0.0), 0
    while state[0] < GOAL:
        state = mountain_car_step(state, -1.0 if t < 17 else 1.0)
        t += 1
    assert t == 64


def test_trajectory_csv(tmp_path):
    _, tr = simulate(energy_pumping_controller(), mountain_car_config())
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "pos", "vel", "ctrl"]
    assert len(rows) == len(tr.states) + 1
    assert rows[-1][3] == ""
    assert float(rows[1][1]) == -0.5


def test_space_mismatch_rejected():
    f = FunctionBehavior(lambda x: (0.0,), BoxSpace((0.0,), (1.0,)), CONTROL_SPACE)
    with pytest.raises(ValueError):
        simulate(f, mountain_car_config())


def test_bad_start_state():
    with pytest.raises(ValueError):
        mountain_car_config(s0=(1.0, 0.0))


def test_divergence_detected():
    box = BoxSpace((-1e308,), (1e308,))
    plant = Plant("blowup", ("x",), box, lambda s, u: (s[0] * 1e200,), 5, box,
                  BoxSpace((0.0,), (1.0,)), control_input=None)
    cfg = SimulatorConfig(plant, (1.0,), parse_formula("(F 0 5 (>= x 0))"))
    f = FunctionBehavior(lambda x: (0.0,), box, BoxSpace((0.0,), (1.0,)))
    with pytest.raises(NumericDivergenceError):
        simulate(f, cfg)


def test_simulator_is_deterministic(mc_sim):
    f = flawed_controller()
    a = mc_sim.rollout(f)
    b = mc_sim.rollout(f)
    assert a.states == b.states


def test_reference_network_matches_plain_python_forward_pass():
    golden = json.loads((GOLDEN / "reference_controller_points.json").read_text())
    nb = reference_controller()
    for x, y in zip(golden["points"], golden["outputs"]):
        assert eval_neural(nb, x) == pytest.approx(tuple(y), abs=1e-12)
    batch = nb.evaluate_many(np.array(golden["points"]))
    assert batch.ravel() == pytest.approx([y[0] for y in golden["outputs"]], abs=1e-12)


def test_reference_network_lipschitz_bound_holds():
    nb = reference_controller()
    rng = np.random.default_rng(1)
    a = rng.uniform(STATE_SPACE.lower, STATE_SPACE.upper, (2000, 2))
    b = np.clip(a + rng.normal(0, 1e-3, a.shape), STATE_SPACE.lower, STATE_SPACE.upper)
    ratio = np.abs(nb.evaluate_many(a) - nb.evaluate_many(b)).ravel() / \
        np.abs(a - b).max(axis=1)
    assert ratio.max() <= nb.lipschitz_bound()


def test_weights_shape_errors():
    d = reference_controller().to_dict()
    d["layers"][1]["w"] = d["layers"][1]["w"][:-1]
    with pytest.raises(ValueError):
        load_weights(d)
    d = reference_controller().to_dict()
    d["layers"][0]["act"] = "relu6"
    with pytest.raises(ValueError):
        load_weights(d)


def test_weights_round_trip(tmp_path):
    nb = reference_controller()
    p = tmp_path / "w.json"
    p.write_text(json.dumps(nb.to_dict()))
    nb2 = load_weights(p)
    assert isinstance(nb2, NeuralBehavior)
    assert nb2((-0.5, 0.0)) == nb((-0.5, 0.0))


def test_eval_outside_input_box():
    with pytest.raises(ValueError):
        eval_neural(reference_controller(), (1.0, 0.0))
