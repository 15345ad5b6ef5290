"""Safety supervisor state machine, goal-sequence progression and pose-fault injection.

Mode graph::

    NOMINAL <-> NEAR_BARRIER
    NOMINAL | NEAR_BARRIER --(E >= O)--> BRAKING --(zero speed)--> RETURN_TO_SAFE
    RETURN_TO_SAFE --(at the safe point)--> STOPPED
    NOMINAL | NEAR_BARRIER --(goal reached)--> GOAL_REACHED --(next goal)--> NOMINAL

BRAKING, RETURN_TO_SAFE and STOPPED are latched: only ``reset()`` leaves them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .control import SafetyZone
from .geometry import GoalSpec, MotionLimits, _sat, wrap_pi
from .pose import PoseSample


class Mode(str, Enum):
    NOMINAL = "NOMINAL"
    NEAR_BARRIER = "NEAR_BARRIER"
    BRAKING = "BRAKING"
    RETURN_TO_SAFE = "RETURN_TO_SAFE"
    STOPPED = "STOPPED"
    GOAL_REACHED = "GOAL_REACHED"


LATCHED = (Mode.BRAKING, Mode.RETURN_TO_SAFE, Mode.STOPPED)
ALLOWED = {
    Mode.NOMINAL: {Mode.NEAR_BARRIER, Mode.BRAKING, Mode.GOAL_REACHED},
    Mode.NEAR_BARRIER: {Mode.NOMINAL, Mode.BRAKING, Mode.GOAL_REACHED},
    Mode.GOAL_REACHED: {Mode.NOMINAL, Mode.BRAKING},
    Mode.BRAKING: {Mode.RETURN_TO_SAFE},
    Mode.RETURN_TO_SAFE: {Mode.STOPPED},
    Mode.STOPPED: set(),
}


@dataclass(frozen=True)
class SupervisorConfig:
    near_ratio: float = 0.9
    min_scale: float = 0.2
    k_p: float = 0.5
    k_h: float = 0.8
    safe_point: tuple[float, float] = (0.0, 0.0)
    goal_tol: float = 0.10

    def __post_init__(self):
        if not 0 < self.near_ratio < 1:
            raise ValueError("near_ratio must lie in (0, 1)")
        if not 0 < self.min_scale <= 1:
            raise ValueError("min_scale must lie in (0, 1]")
        if self.k_p <= 0 or self.k_h <= 0 or self.goal_tol <= 0:
            raise ValueError("gains and tolerance must be positive")


def near_barrier_scale(ratio: float, cfg: SupervisorConfig) -> float:
    """1 below the threshold, then linear down to ``min_scale`` at E/O = 1."""
    if ratio < cfg.near_ratio:
        return 1.0
    frac = min(1.0, (ratio - cfg.near_ratio) / (1.0 - cfg.near_ratio))
    return 1.0 - frac * (1.0 - cfg.min_scale)


def return_to_safe_command(pose: PoseSample, safe_point, limits: MotionLimits,
                           k_p: float = 0.5, k_h: float = 0.8,
                           goal_tol: float = 0.10) -> tuple[float, float, bool]:
    """Heading-proportional steering with a cosine-gated forward speed.

    Returns (v, omega, arrived); at the safe point the command is zero.
    """
    dx, dy = safe_point[0] - pose.x, safe_point[1] - pose.y
    d = math.hypot(dx, dy)
    if d <= goal_tol:
        return 0.0, 0.0, True
    e = wrap_pi(math.atan2(dy, dx) - pose.theta)
    omega = _sat(k_h * e, limits.omega_min, limits.omega_max)
    v = _sat(k_p * d, limits.v_min, limits.v_max) * max(0.0, math.cos(e))
    return float(_sat(v, limits.v_min, limits.v_max)), float(omega), False


def _toward_zero(x: float, step: float) -> float:
    return 0.0 if abs(x) <= step else x - math.copysign(step, x)


@dataclass
class Transition:
    tick: int
    mode: Mode
    cause: str


class Supervisor:
    def __init__(self, limits: MotionLimits, cfg: SupervisorConfig = SupervisorConfig()):
        self.limits = limits
        self.cfg = cfg
        self.reset()

    def reset(self) -> None:
        self.mode = Mode.NOMINAL
        self.last_cmd = (0.0, 0.0)
        self.log: list[Transition] = []
        self.tick = 0

    @property
    def latched(self) -> bool:
        return self.mode in LATCHED

    def _enter(self, mode: Mode, cause: str) -> None:
        if mode is self.mode:
            return
        if mode not in ALLOWED[self.mode]:
            raise RuntimeError(f"illegal supervisor transition {self.mode.value} -> {mode.value}")
        self.mode = mode
        self.log.append(Transition(self.tick, mode, cause))

    def goal_reached(self) -> None:
        if self.mode in (Mode.NOMINAL, Mode.NEAR_BARRIER):
            self._enter(Mode.GOAL_REACHED, "goal")

    def next_goal(self) -> None:
        if self.mode is Mode.GOAL_REACHED:
            self._enter(Mode.NOMINAL, "next-goal")

    def supervise(self, zone: SafetyZone, cmd: tuple[float, float],
                  trusted: PoseSample | None = None) -> tuple[float, float]:
        """Filter one planner command; called exactly once per control tick.

        ``trusted`` is the fallback pose channel used after a fault latches
        the machine into RETURN_TO_SAFE.
        """
        lim = self.limits
        cfg = self.cfg
        v, w = cmd
        if self.mode in (Mode.NOMINAL, Mode.NEAR_BARRIER, Mode.GOAL_REACHED) and zone.violated:
            self._enter(Mode.BRAKING, f"E={zone.E:.4f} >= O={zone.O:.4f}")
        if self.mode is Mode.GOAL_REACHED:
            out = (0.0, 0.0)
        elif self.mode in (Mode.NOMINAL, Mode.NEAR_BARRIER):
            s = near_barrier_scale(zone.ratio, cfg)
            self._enter(Mode.NEAR_BARRIER if s < 1.0 else Mode.NOMINAL,
                        f"E/O={zone.ratio:.4f}")
            out = (_sat(v, lim.v_min, lim.v_max) * s, _sat(w, lim.omega_min, lim.omega_max) * s)
        elif self.mode is Mode.BRAKING:
            v0, w0 = self.last_cmd
            out = (_toward_zero(v0, abs(lim.a_v_min) * lim.dt),
                   _toward_zero(w0, lim.a_omega_brake * lim.dt))
            if out == (0.0, 0.0):
                self._enter(Mode.RETURN_TO_SAFE, "stopped")
        elif self.mode is Mode.RETURN_TO_SAFE:
            if trusted is None:
                raise ValueError("RETURN_TO_SAFE needs the trusted pose channel")
            rv, rw, arrived = return_to_safe_command(trusted, cfg.safe_point, lim, cfg.k_p,
                                                     cfg.k_h, cfg.goal_tol)
            out = (rv, rw)
            if arrived:
                self._enter(Mode.STOPPED, "safe point reached")
        else:
            out = (0.0, 0.0)
        self.last_cmd = (float(out[0]), float(out[1]))
        self.tick += 1
        return self.last_cmd


@dataclass
class GoalSequence:
    goals: list[tuple[float, float]]
    goal_tol: float = 0.10
    index: int = 0
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def done(self) -> bool:
        return self.index >= len(self.goals)

    def current(self) -> GoalSpec | None:
        if self.done:
            return None
        g = self.goals[self.index]
        return GoalSpec(g[0], g[1], self.goal_tol)


def advance_goal(seq: GoalSequence, pose: PoseSample) -> GoalSpec | None:
    """Move to the next goal if the current one is reached.

    On advancing, the segment origin is reset to the present pose, so the new
    segment's zone is built as if the robot started at relative (0, 0).
    """
    g = seq.current()
    if g is None:
        return None
    if math.hypot(g.x_g - pose.x, g.y_g - pose.y) > g.goal_tol:
        return g
    seq.index += 1
    seq.origin = (pose.x, pose.y)
    return seq.current()


FAULT_KINDS = ("pose-offset", "pose-freeze", "pose-jump")


@dataclass(frozen=True)
class FaultEvent:
    """Corruption of the SLAM pose stream.

    The event triggers at ``trigger_time`` seconds or, when
    ``trigger_goal_index`` is set, ``delay`` seconds after that many goals
    have been reached. ``pose-offset`` ramps a displacement of ``magnitude``
    metres along ``direction`` in over ``ramp_s``; ``pose-jump`` applies it at
    once; ``pose-freeze`` holds the last pre-fault sample.
    """

    kind: str = "pose-offset"
    magnitude: float = 10.0
    direction: tuple[float, float] = (0.0, 1.0)
    trigger_time: float | None = None
    trigger_goal_index: int | None = None
    delay: float = 1.0
    ramp_s: float = 5.0

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if (self.trigger_time is None) == (self.trigger_goal_index is None):
            raise ValueError("set exactly one of trigger_time and trigger_goal_index")
        if self.ramp_s < 0 or self.delay < 0:
            raise ValueError("ramp_s and delay must be non-negative")


@dataclass
class FaultInjector:
    event: FaultEvent
    start_time: float | None = None
    frozen: PoseSample | None = None
    history: list[float] = field(default_factory=list)

    def armed(self, t: float, goals_reached: int, goal_time: float | None) -> bool:
        ev = self.event
        if self.start_time is None:
            if ev.trigger_time is not None and t >= ev.trigger_time:
                self.start_time = t
            elif (ev.trigger_goal_index is not None and goals_reached >= ev.trigger_goal_index
                  and goal_time is not None and t >= goal_time + ev.delay):
                self.start_time = t
        return self.start_time is not None

    def apply(self, sample: PoseSample, t: float, goals_reached: int = 0,
              goal_time: float | None = None) -> PoseSample:
        if not self.armed(t, goals_reached, goal_time):
            self.frozen = sample
            return sample
        ev = self.event
        if ev.kind == "pose-freeze":
            held = self.frozen or sample
            return PoseSample(sample.t, held.x, held.y, held.theta)
        norm = math.hypot(*ev.direction) or 1.0
        ux, uy = ev.direction[0] / norm, ev.direction[1] / norm
        frac = 1.0
        if ev.kind == "pose-offset" and ev.ramp_s > 0:
            frac = min(1.0, (t - self.start_time) / ev.ramp_s)
        m = ev.magnitude * frac
        return PoseSample(sample.t, sample.x + m * ux, sample.y + m * uy, sample.theta)


def inject_fault(stream: list[PoseSample], event: FaultEvent) -> list[PoseSample]:
    """Corrupt a recorded pose stream (time-triggered events only)."""
    if event.trigger_time is None:
        raise ValueError("offline injection needs a time-triggered event")
    inj = FaultInjector(event)
    return [inj.apply(s, s.t) for s in stream]
