"""Robot state, goal geometry and the discrete-time unicycle transition.

The scalar cores are compiled with numba so the planner's training kernel and
the Python-level API share one implementation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _wrap(angle):
    if -math.pi <= angle < math.pi:
        return angle
    out = (angle + math.pi) % TWO_PI - math.pi
    # float modulo can round up to exactly 2*pi for inputs just below -pi
    if out >= math.pi:
        out -= TWO_PI
    elif out < -math.pi:
        out += TWO_PI
    return out


@njit(cache=True)
def _sat(value, lo, hi):
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value


@njit(cache=True)
def _features(x, y, theta, xg, yg):
    dx = xg - x
    dy = yg - y
    return math.sqrt(dx * dx + dy * dy), _wrap(math.atan2(dy, dx) - theta)


@njit(cache=True)
def _step(x, y, theta, v, omega, a_v, a_omega, lim):
    # lim = (v_min, v_max, omega_min, omega_max, dt)
    dt = lim[4]
    v1 = _sat(v + a_v * dt, lim[0], lim[1])
    w1 = _sat(omega + a_omega * dt, lim[2], lim[3])
    x1 = x + v1 * math.cos(theta) * dt
    y1 = y + v1 * math.sin(theta) * dt
    th1 = _wrap(theta + w1 * dt)
    return x1, y1, th1, v1, w1


@dataclass(frozen=True)
class MotionLimits:
    v_min: float = 0.0
    v_max: float = 0.25
    omega_min: float = -0.15
    omega_max: float = 0.15
    a_v_min: float = -0.10
    a_v_max: float = 0.10
    a_omega_min: float = -0.02
    a_omega_max: float = 0.02
    dt: float = 0.05

    def __post_init__(self):
        pairs = [
            ("v", self.v_min, self.v_max),
            ("omega", self.omega_min, self.omega_max),
            ("a_v", self.a_v_min, self.a_v_max),
            ("a_omega", self.a_omega_min, self.a_omega_max),
        ]
        for name, lo, hi in pairs:
            if not lo < hi:
                raise ValueError(f"{name}: min must be below max ({lo} >= {hi})")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def as_array(self) -> np.ndarray:
        """Packed (v_min, v_max, omega_min, omega_max, dt) used by compiled kernels."""
        return np.array([self.v_min, self.v_max, self.omega_min, self.omega_max, self.dt])

    @property
    def a_omega_brake(self) -> float:
        """Largest available angular deceleration magnitude."""
        return max(abs(self.a_omega_min), self.a_omega_max)


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class GoalSpec:
    x_g: float
    y_g: float
    goal_tol: float = 0.10

    def __post_init__(self):
        if not self.goal_tol > 0:
            raise ValueError("goal_tol must be positive")


@dataclass(frozen=True)
class Workspace:
    x_lo: float = -25.0
    x_hi: float = 25.0
    y_lo: float = -25.0
    y_hi: float = 25.0

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError("workspace bounds must satisfy lo < hi")

    @classmethod
    def square(cls, half_width: float) -> "Workspace":
        return cls(-half_width, half_width, -half_width, half_width)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_hi - self.x_lo, self.y_hi - self.y_lo)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_lo, self.x_hi, self.y_lo, self.y_hi])


def wrap_pi(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    if not math.isfinite(angle):
        raise ValueError(f"cannot wrap non-finite angle {angle!r}")
    return float(_wrap(float(angle)))


def goal_features(state: RobotState, goal: GoalSpec) -> tuple[float, float]:
    """Distance to the goal and wrapped heading error toward it."""
    d, e = _features(state.x, state.y, state.theta, goal.x_g, goal.y_g)
    return float(d), float(e)


def step_unicycle(state: RobotState, a_v: float, a_omega: float, limits: MotionLimits) -> RobotState:
    """Advance one step: saturate the new velocities, move with the old heading."""
    x, y, th, v, w = _step(
        state.x, state.y, state.theta, state.v, state.omega,
        float(a_v), float(a_omega), limits.as_array(),
    )
    return RobotState(float(x), float(y), float(th), float(v), float(w))


def in_workspace(state: RobotState, ws: Workspace) -> bool:
    return ws.x_lo <= state.x <= ws.x_hi and ws.y_lo <= state.y <= ws.y_hi
