"""Classic fixed-step fourth-order Runge-Kutta stepping.

The state may be any object supporting ``+`` and scalar ``*`` (floats, numpy
vectors, density matrices).
"""

from typing import Callable, TypeVar

State = TypeVar("State")


def rk4_step(rhs: Callable[[float, State], State], t: float, y: State, dt: float) -> State:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
