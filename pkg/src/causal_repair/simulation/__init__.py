from .mountain_car import (
    CONTROL_SPACE,
    STATE_SPACE,
    energy_pumping_controller,
    flawed_controller,
    mountain_car_step,
    zero_controller,
)
from .neural import NeuralBehavior, eval_neural, load_weights, reference_controller
from .rollout import (
    CellMapSimulator,
    ClosedLoopSimulator,
    ConstantSimulator,
    NumericDivergenceError,
    Plant,
    SimulatorConfig,
    Trajectory,
    mountain_car_config,
    mountain_car_plant,
    simulate,
)
from .stl import parse_formula, stl_eval

__all__ = [
    "CONTROL_SPACE", "STATE_SPACE", "energy_pumping_controller", "flawed_controller",
    "mountain_car_step", "zero_controller", "NeuralBehavior", "eval_neural", "load_weights",
    "reference_controller", "CellMapSimulator", "ClosedLoopSimulator", "ConstantSimulator",
    "NumericDivergenceError", "Plant", "SimulatorConfig", "Trajectory", "mountain_car_config",
    "mountain_car_plant", "simulate", "parse_formula", "stl_eval",
]
