"""Synthetic in-wheel actuator: wheel-speed dynamics, slip disturbance and datasets.

Each wheel obeys ``A * dv/dt = u + F(v) + d`` with a resistive static
nonlinearity ``F(v) = -c1 v - c2 v|v| - c3 tanh(v / v_s)``. The exact inverse of
the undisturbed plant is ``u = A dv_d/dt - F(v_d)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

DISTURBANCE_MODELS = ("none", "constant-ratio", "stochastic")
EXCITATIONS = ("ramps", "chirps", "random-steps")


@dataclass(frozen=True)
class PlantParams:
    """Wheel actuator constants in normalized drive units.

    ``v_lo``/``v_hi`` bound the wheel-speed operating range: body speeds in
    [0, 0.25] m/s combined with turn rates up to 0.15 rad/s on a 2 m track.
    """

    A: float = 0.1
    c1: float = 0.1
    c2: float = 0.05
    c3: float = 0.05
    v_s: float = 0.02
    wheel_radius: float = 0.4
    v_lo: float = -0.15
    v_hi: float = 0.40
    substeps: int = 10

    def __post_init__(self):
        if self.A <= 0:
            raise ValueError("A must be positive")
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("friction coefficients must be non-negative")
        if self.v_s <= 0 or self.wheel_radius <= 0:
            raise ValueError("v_s and wheel_radius must be positive")
        if not self.v_lo < self.v_hi:
            raise ValueError("v_lo must be below v_hi")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")


def friction(v, p: PlantParams):
    """F(v): viscous, quadratic-drag and smoothed Coulomb resistance."""
    v = np.asarray(v, dtype=float)
    return -p.c1 * v - p.c2 * v * np.abs(v) - p.c3 * np.tanh(v / p.v_s)


def friction_slope(v, p: PlantParams):
    """dF/dv, always negative (F is strictly decreasing)."""
    v = np.asarray(v, dtype=float)
    return -p.c1 - 2.0 * p.c2 * np.abs(v) - p.c3 / p.v_s / np.cosh(v / p.v_s) ** 2


def peak_friction(p: PlantParams) -> float:
    """Largest |F| over the operating speed range (reached at an end point)."""
    return float(np.max(np.abs(friction([p.v_lo, p.v_hi], p))))


@dataclass(frozen=True)
class DisturbanceSpec:
    """Slip disturbance acting on the wheel dynamics.

    ``constant-ratio`` opposes motion with the full bound; ``stochastic`` is an
    Ornstein-Uhlenbeck process with correlation time ``tau`` clipped to the
    bound. Both fade out as the commanded wheel speed goes to zero, since slip
    needs traction demand.
    """

    model: str = "none"
    d_star: float = 0.0
    rng_seed: int = 0
    tau: float = 1.0

    def __post_init__(self):
        if self.model not in DISTURBANCE_MODELS:
            raise ValueError(f"unknown disturbance model {self.model!r}")
        if self.d_star < 0 or self.tau <= 0:
            raise ValueError("d_star must be >= 0 and tau > 0")

    @classmethod
    def for_terrain(cls, terrain: str, params: PlantParams, rng_seed: int = 0,
                    fractions: dict[str, float] | None = None) -> "DisturbanceSpec":
        fractions = fractions or {"asphalt": 0.05, "soft": 0.25}
        if terrain not in fractions:
            raise ValueError(f"unknown terrain {terrain!r}; expected one of {sorted(fractions)}")
        return cls("stochastic", fractions[terrain] * peak_friction(params), rng_seed)


class Disturbance:
    """Stateful per-wheel disturbance generator; never exceeds ``spec.d_star``."""

    def __init__(self, spec: DisturbanceSpec, n_wheels: int = 4, v_s: float = 0.02):
        self.spec = spec
        self.v_s = v_s
        self.rng = np.random.default_rng(spec.rng_seed)
        self.state = np.zeros(n_wheels)

    def sample(self, v_ref, dt: float) -> np.ndarray:
        v_ref = np.atleast_1d(np.asarray(v_ref, dtype=float))
        s = self.spec
        if s.model == "none" or s.d_star == 0.0:
            return np.zeros_like(v_ref)
        gate = np.tanh(np.abs(v_ref) / self.v_s)
        if s.model == "constant-ratio":
            return -s.d_star * np.sign(v_ref) * gate
        a = math.exp(-dt / s.tau)
        # stationary std of the unclipped process is d_star / 2
        noise = self.rng.standard_normal(self.state.shape)
        self.state = a * self.state + math.sqrt(1.0 - a * a) * 0.5 * s.d_star * noise
        return np.clip(self.state, -s.d_star, s.d_star) * gate


def step_plant(v, u, params: PlantParams, d=0.0, dt: float = 0.05):
    """Advance wheel speed(s) by ``dt`` with explicit Euler sub-steps.

    ``u`` and ``d`` are held over the interval. Sub-stepping keeps the stiff
    Coulomb region near zero speed numerically stable.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    h = dt / params.substeps
    for _ in range(params.substeps):
        v = v + h / params.A * (u + friction(v, params) + d)
    return v


def ideal_inverse(v_d, params: PlantParams, dt: float = 0.05) -> np.ndarray:
    """Exact inverse of the undisturbed plant along a sampled reference.

    The derivative is the forward difference over each interval (the last
    sample reuses the previous one), so a constant reference is held exactly.
    """
    v_d = np.atleast_1d(np.asarray(v_d, dtype=float))
    vdot = np.zeros_like(v_d)
    if v_d.size > 1:
        vdot[:-1] = np.diff(v_d) / dt
        vdot[-1] = vdot[-2]
    return params.A * vdot - friction(v_d, params)


@dataclass
class ActuatorDataset:
    v: np.ndarray
    u: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.v.shape != self.u.shape or self.v.ndim != 1:
            raise ValueError("v and u must be 1-D arrays of equal length")
        if self.v.size < 3:
            raise ValueError("a dataset needs at least 3 samples")
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.u))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.v.size

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "v", "u"])
            for k, (v, u) in enumerate(zip(self.v, self.u)):
                w.writerow([k, repr(float(v)), repr(float(u))])
        sidecar = dict(self.meta, dt=self.dt, n_samples=len(self))
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ActuatorDataset":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = {}
        side = path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
        dt = float(meta.pop("dt", 0.05))
        meta.pop("n_samples", None)
        return cls(data[:, 1], data[:, 2], dt, meta)


def _excitation(kind: str, n: int, dt: float, lo: float, hi: float, period: float,
                rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) * dt
    if kind == "ramps":
        phase = (t / period) % 1.0
        tri = 1.0 - np.abs(2.0 * phase - 1.0)
        return lo + (hi - lo) * tri
    if kind == "chirps":
        # instantaneous frequency sweeps from 1/period down-to-up over the record
        f0, f1 = 0.2 / period, 2.0 / period
        total = max(t[-1], dt)
        phase = 2 * math.pi * (f0 * t + 0.5 * (f1 - f0) * t * t / total)
        return lo + (hi - lo) * 0.5 * (1.0 - np.cos(phase))
    # random steps: piecewise-constant levels, smoothed with a first-order filter
    hold = max(1, int(round(0.25 * period / dt)))
    levels = rng.uniform(lo, hi, size=n // hold + 1)
    raw = np.repeat(levels, hold)[:n]
    out = np.empty(n)
    a = math.exp(-dt / (0.05 * period))
    acc = raw[0]
    for k in range(n):
        acc = a * acc + (1 - a) * raw[k]
        out[k] = acc
    return out


def generate_dataset(excitation: str, params: PlantParams, duration: float, dt: float = 0.05,
                     rng_seed: int = 0, period: float = 60.0,
                     v_range: tuple[float, float] | None = None,
                     disturbance: DisturbanceSpec | None = None) -> ActuatorDataset:
    """Drive the plant with the ideal inverse of an excitation and record (v, u).

    ``v_range`` defaults to the plant's operating range and must lie inside it.
    """
    if excitation not in EXCITATIONS:
        raise ValueError(f"unknown excitation {excitation!r}")
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    lo, hi = v_range if v_range is not None else (params.v_lo, params.v_hi)
    if lo < params.v_lo - 1e-12 or hi > params.v_hi + 1e-12 or not lo < hi:
        raise ValueError(f"excitation range [{lo}, {hi}] leaves the operating range "
                         f"[{params.v_lo}, {params.v_hi}]")
    n = int(round(duration / dt))
    if n < 3:
        raise ValueError("duration too short for a dataset")
    if excitation == "ramps" and duration < 0.5 * period:
        raise ValueError("ramp excitation needs at least half a period to cover the range")
    rng = np.random.default_rng(rng_seed)
    v_d = _excitation(excitation, n, dt, lo, hi, period, rng)
    u = ideal_inverse(v_d, params, dt)
    dist = Disturbance(disturbance or DisturbanceSpec(), 1, params.v_s)
    v = np.empty(n)
    v_now = v_d[0]
    for k in range(n):
        v[k] = v_now
        v_now = float(step_plant(v_now, u[k], params, dist.sample(v_d[k], dt)[0], dt))
    meta = {"excitation": excitation, "rng_seed": rng_seed, "period": period,
            "v_range": [lo, hi], "duration": duration, "plant": asdict(params),
            "disturbance": asdict(disturbance or DisturbanceSpec())}
    return ActuatorDataset(v, u, dt, meta)


def range_coverage(v, lo: float, hi: float, width: float = 0.01) -> float:
    """Fraction of ``width``-wide speed bins over [lo, hi] that contain a sample."""
    edges = np.arange(lo, hi + 0.5 * width, width)
    if edges[-1] < hi:
        edges = np.append(edges, hi)
    counts, _ = np.histogram(np.asarray(v), bins=edges)
    return float(np.mean(counts > 0))
