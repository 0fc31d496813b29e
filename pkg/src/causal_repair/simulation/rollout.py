"""Deterministic closed-loop rollouts and the verdict function used everywhere else."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import Behavior, BoxSpace
from . import mountain_car as mc
from .stl import Formula, Predicate, parse_formula, stl_eval


class NumericDivergenceError(ArithmeticError):
    """A rollout produced a NaN or infinite state."""


@dataclass(frozen=True)
class Plant:
    name: str
    state_names: tuple[str, ...]
    bounds: BoxSpace
    step: Callable[[tuple, float | tuple], tuple]
    horizon: int
    input_space: BoxSpace
    output_space: BoxSpace
    control_names: tuple[str, ...] = ("ctrl",)
    # state -> controller input; identity when None
    control_input: Callable[[tuple], tuple] | None = None

    @property
    def state_dims(self) -> int:
        return len(self.state_names)


def mountain_car_plant(horizon: int = mc.HORIZON) -> Plant:
    return Plant(
        name="mountain_car",
        state_names=("pos", "vel"),
        bounds=mc.STATE_SPACE,
        step=lambda s, u: mc.mountain_car_step(s, u[0]),
        horizon=horizon,
        input_space=mc.STATE_SPACE,
        output_space=mc.CONTROL_SPACE,
    )


@dataclass(frozen=True)
class SimulatorConfig:
    plant: Plant
    s0: tuple[float, ...]
    prop: Formula
    stop_at_goal: bool = False
    goal: Predicate | None = None

    def __post_init__(self):
        s0 = tuple(float(v) for v in self.s0)
        if not self.plant.bounds.contains(s0):
            raise ValueError(f"initial state {s0} outside plant bounds")
        object.__setattr__(self, "s0", s0)


def mountain_car_config(s0=mc.S0, horizon: int = mc.HORIZON,
                        stop_at_goal: bool = True) -> SimulatorConfig:
    prop = parse_formula(f"(F 0 {horizon} (>= pos {mc.GOAL}))")
    return SimulatorConfig(mountain_car_plant(horizon), tuple(s0), prop,
                           stop_at_goal=stop_at_goal, goal=prop.child)


@dataclass
class Trajectory:
    states: list[tuple[float, ...]]
    controls: list[tuple[float, ...]]
    verdict: bool
    state_names: tuple[str, ...] = ("pos", "vel")
    control_names: tuple[str, ...] = ("ctrl",)

    def to_csv(self, path) -> None:
        """Write ``t,<state names>,<control names>``; the last row has no control."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *self.state_names, *self.control_names])
            for t, s in enumerate(self.states):
                if t < len(self.controls):
                    u = [repr(v) for v in self.controls[t]]
                else:
                    u = [""] * len(self.control_names)
                w.writerow([t, *(repr(v) for v in s), *u])


def simulate(f: Behavior, cfg: SimulatorConfig) -> tuple[bool, Trajectory]:
    """Roll out ``f`` in closed loop from ``cfg.s0`` and evaluate the property."""
    plant = cfg.plant
    if f.input_space != plant.input_space or f.output_space != plant.output_space:
        raise ValueError("behavior spaces do not match the plant's controller interface")
    state = cfg.s0
    states = [state]
    controls = []
    goal = cfg.goal if cfg.stop_at_goal else None
    names = list(plant.state_names)
    for _ in range(plant.horizon):
        if goal is not None and goal.holds(state, names):
            break
        x = state if plant.control_input is None else plant.control_input(state)
        u = f(x)
        state = plant.step(state, u)
        if not all(math.isfinite(v) for v in state):
            raise NumericDivergenceError(f"non-finite state {state} after {len(states)} steps")
        controls.append(tuple(u))
        states.append(tuple(state))
    verdict = stl_eval(cfg.prop, np.asarray(states), names)
    return verdict, Trajectory(states, controls, verdict, plant.state_names, plant.control_names)


class ClosedLoopSimulator:
    """The verdict function ``behavior -> {True, False}`` for one fixed start state."""

    def __init__(self, cfg: SimulatorConfig):
        self.cfg = cfg
        self.input_space = cfg.plant.input_space
        self.output_space = cfg.plant.output_space

    def __call__(self, f: Behavior) -> bool:
        return simulate(f, self.cfg)[0]

    def rollout(self, f: Behavior) -> Trajectory:
        return simulate(f, self.cfg)[1]


class ConstantSimulator:
    """A simulator whose verdict ignores the behavior entirely."""

    def __init__(self, verdict: bool, input_space: BoxSpace, output_space: BoxSpace):
        self.verdict = bool(verdict)
        self.input_space = input_space
        self.output_space = output_space

    def __call__(self, f: Behavior) -> bool:
        return self.verdict


class CellMapSimulator:
    """Verdict computed from a representative behavior's cell map.

    Used for toy models whose "dynamics" are a table or predicate over the
    output cell chosen for each input cell.
    """

    def __init__(self, predicate: Callable[[Sequence[int]], bool],
                 input_space: BoxSpace | None = None, output_space: BoxSpace | None = None):
        self.predicate = predicate
        self.input_space = input_space
        self.output_space = output_space

    def __call__(self, f: Behavior) -> bool:
        cell_map = getattr(f, "cell_map", None)
        if cell_map is None:
            raise TypeError("CellMapSimulator needs a representative behavior")
        return bool(self.predicate(cell_map))
