"""Mountain-car plant and a few scripted controllers for it."""
from __future__ import annotations

import math

import numpy as np

from ..core import BoxSpace, FunctionBehavior

POS_BOUNDS = (-1.2, 0.6)
VEL_BOUNDS = (-0.07, 0.07)
CTRL_BOUNDS = (-1.0, 1.0)
POWER = 0.0015
STEEPNESS = 0.0025
GOAL = 0.45
HORIZON = 110
S0 = (-0.5, 0.0)

STATE_SPACE = BoxSpace((POS_BOUNDS[0], VEL_BOUNDS[0]), (POS_BOUNDS[1], VEL_BOUNDS[1]))
CONTROL_SPACE = BoxSpace((CTRL_BOUNDS[0],), (CTRL_BOUNDS[1],))


def mountain_car_step(state, ctrl: float) -> tuple[float, float]:
    """One step of the closed-form dynamics.

    Position advances with the pre-update velocity.  Both variables are clamped
    to their bounds, and velocity is zeroed if the car is pressed against the
    left wall while moving left.
    """
    pos, vel = state
    ctrl = min(max(float(ctrl), CTRL_BOUNDS[0]), CTRL_BOUNDS[1])
    new_pos = min(max(pos + vel, POS_BOUNDS[0]), POS_BOUNDS[1])
    new_vel = vel + POWER * ctrl - STEEPNESS * math.cos(3 * pos)
    new_vel = min(max(new_vel, VEL_BOUNDS[0]), VEL_BOUNDS[1])
    if new_pos == POS_BOUNDS[0] and new_vel < 0:
        new_vel = 0.0
    return new_pos, new_vel


def _sign(v):
    return np.where(v >= 0, 1.0, -1.0)


def energy_pumping_controller() -> FunctionBehavior:
    """Bang-bang ``sign(vel)``, pushing right at rest."""
    return FunctionBehavior(
        lambda x: (1.0 if x[1] >= 0 else -1.0,),
        STATE_SPACE, CONTROL_SPACE,
        vectorized=lambda X: _sign(X[:, 1])[:, None],
        name="energy_pumping",
    )


def flawed_controller(lo: float = -0.4, hi: float = 0.0) -> FunctionBehavior:
    """Energy pumping with the push reversed while ``lo <= pos < hi``.

    Braking through the middle of the valley bleeds off the momentum the car
    needs, so the goal is missed from the standard start.
    """

    def fn(x):
        s = 1.0 if x[1] >= 0 else -1.0
        return (-s if lo <= x[0] < hi else s,)

    def vec(X):
        s = _sign(X[:, 1])
        inside = (X[:, 0] >= lo) & (X[:, 0] < hi)
        return np.where(inside, -s, s)[:, None]

    return FunctionBehavior(fn, STATE_SPACE, CONTROL_SPACE, vectorized=vec, name="flawed")


def zero_controller() -> FunctionBehavior:
    return FunctionBehavior(lambda x: (0.0,), STATE_SPACE, CONTROL_SPACE,
                            vectorized=lambda X: np.zeros((len(X), 1)), name="zero")


SCRIPTED = {
    "flawed": flawed_controller,
    "energy_pumping": energy_pumping_controller,
    "zero": zero_controller,
}
