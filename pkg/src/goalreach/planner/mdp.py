"""State binning and the acceleration action grid of the tabular planner."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..geometry import MotionLimits, Workspace


@njit(cache=True)
def _bin(value, lo, hi, n):
    i = int(math.floor((value - lo) / (hi - lo) * n))
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


@njit(cache=True)
def _discretize(d, e, v, omega, disc):
    # disc = (n_d, n_theta, n_v, n_omega, d_max, v_min, v_max, omega_min, omega_max)
    n_d = int(disc[0])
    n_e = int(disc[1])
    n_v = int(disc[2])
    n_w = int(disc[3])
    i_d = _bin(d, 0.0, disc[4], n_d)
    i_e = _bin(e, -math.pi, math.pi, n_e)
    i_v = _bin(v, disc[5], disc[6], n_v)
    i_w = _bin(omega, disc[7], disc[8], n_w)
    return ((i_d * n_e + i_e) * n_v + i_v) * n_w + i_w


@dataclass(frozen=True)
class DiscretizerSpec:
    n_d: int
    n_theta: int = 24
    n_v: int = 4
    n_omega: int = 5
    d_max: float = 71.0
    v_min: float = 0.0
    v_max: float = 0.25
    omega_min: float = -0.15
    omega_max: float = 0.15

    def __post_init__(self):
        for name in ("n_d", "n_theta", "n_v", "n_omega"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")

    @classmethod
    def for_workspace(cls, ws: Workspace, limits: MotionLimits, resolution: float = 1.0,
                      n_theta: int = 24, n_v: int = 4, n_omega: int = 5) -> "DiscretizerSpec":
        """Distance bins over the workspace diagonal, about ``resolution`` wide."""
        n_d = max(2, math.ceil(ws.diagonal / resolution - 1e-9))
        return cls(n_d=n_d, n_theta=n_theta, n_v=n_v, n_omega=n_omega,
                   d_max=ws.diagonal, v_min=limits.v_min, v_max=limits.v_max,
                   omega_min=limits.omega_min, omega_max=limits.omega_max)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_d, self.n_theta, self.n_v, self.n_omega)

    @property
    def n_states(self) -> int:
        return self.n_d * self.n_theta * self.n_v * self.n_omega

    def as_array(self) -> np.ndarray:
        return np.array([self.n_d, self.n_theta, self.n_v, self.n_omega, self.d_max,
                         self.v_min, self.v_max, self.omega_min, self.omega_max], dtype=float)

    def bin_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        def centers(lo, hi, n):
            return lo + (np.arange(n) + 0.5) * (hi - lo) / n
        return (centers(0.0, self.d_max, self.n_d),
                centers(-math.pi, math.pi, self.n_theta),
                centers(self.v_min, self.v_max, self.n_v),
                centers(self.omega_min, self.omega_max, self.n_omega))


@dataclass(frozen=True)
class DiscreteState:
    i_d: int
    i_e: int
    i_v: int
    i_omega: int
    flat: int


@dataclass(frozen=True)
class ActionGrid:
    a_v: tuple[float, ...] = (-0.10, 0.0, 0.10)
    a_omega: tuple[float, ...] = (-0.02, 0.0, 0.02)

    def __post_init__(self):
        for levels in (self.a_v, self.a_omega):
            if len(levels) == 0 or list(levels) != sorted(levels):
                raise ValueError("action levels must be non-empty and sorted")

    @classmethod
    def from_limits(cls, limits: MotionLimits, step_v: float = 0.10,
                    step_omega: float = 0.02) -> "ActionGrid":
        def levels(lo, hi, step):
            n = int(round((hi - lo) / step)) + 1
            vals = np.linspace(lo, hi, n)
            vals[np.abs(vals) < 1e-12] = 0.0
            return tuple(float(v) for v in vals)
        return cls(levels(limits.a_v_min, limits.a_v_max, step_v),
                   levels(limits.a_omega_min, limits.a_omega_max, step_omega))

    @property
    def n_actions(self) -> int:
        return len(self.a_v) * len(self.a_omega)

    def action(self, index: int) -> tuple[float, float]:
        i_v, i_w = divmod(int(index), len(self.a_omega))
        return self.a_v[i_v], self.a_omega[i_w]

    def table(self) -> np.ndarray:
        """(n_actions, 2) array of (a_v, a_omega) in flat index order."""
        return np.array([self.action(k) for k in range(self.n_actions)])


def flatten(i_d: int, i_e: int, i_v: int, i_omega: int, spec: DiscretizerSpec) -> int:
    return ((i_d * spec.n_theta + i_e) * spec.n_v + i_v) * spec.n_omega + i_omega


def unflatten(flat: int, spec: DiscretizerSpec) -> DiscreteState:
    if not 0 <= flat < spec.n_states:
        raise IndexError(f"state index {flat} outside [0, {spec.n_states})")
    i_d, i_e, i_v, i_w = np.unravel_index(flat, spec.shape)
    return DiscreteState(int(i_d), int(i_e), int(i_v), int(i_w), int(flat))


def discretize(d: float, e: float, v: float, omega: float, spec: DiscretizerSpec) -> DiscreteState:
    """Uniform binning of (d, e, v, omega); out-of-range values land in the edge bins."""
    flat = _discretize(float(d), float(e), float(v), float(omega), spec.as_array())
    return unflatten(int(flat), spec)


def spec_hash(spec: DiscretizerSpec, grid: ActionGrid) -> str:
    blob = json.dumps({"discretizer": asdict(spec), "actions": asdict(grid)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
