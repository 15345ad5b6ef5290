"""Closed-loop simulation of the planner, supervisor, wheel controllers and plant.

One control tick (dt from the motion limits):

1. the pose provider (optionally corrupted by a fault) yields the measured pose;
2. the safety zone of the active segment is updated from it;
3. the greedy planner proposes (v, omega) and the supervisor filters it;
4. the command is split into four wheel references, each wheel runs the
   adaptive control law around the learned inverse model;
5. the wheel plants and the body pose are integrated over the tick.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .actuator import Disturbance, DisturbanceSpec, PlantParams
from .control import (ControllerGains, VehicleGeometry, adapt, allocate_wheel_refs, barrier_gain,
                      control_law, update_safety_zone)
from .geometry import GoalSpec, MotionLimits, _features, _sat, _step
from .metrics import rmse, segment_steady_state_errors, tracking_metrics
from .neural import NetworkModel
from .planner.agent import QTable, _greedy, _shape_action
from .planner.mdp import _discretize
from .planner.rewards import RewardWeights, pack_params
from .pose import GroundTruthPose, PoseSample
from .supervisor import (FaultEvent, FaultInjector, Mode, Supervisor, SupervisorConfig,
                         return_to_safe_command)

TELEMETRY_FIELDS = (
    ["tick", "t", "x", "y", "theta", "x_meas", "y_meas", "theta_meas", "mode", "goal_index",
     "E", "O", "v_cmd", "omega_cmd"]
    + [f"{k}{i}" for k in ("v_d", "v", "e", "chi", "u") for i in range(1, 5)]
)


@njit(cache=True)
def _integrate(vw, u, d, x, y, th, A, c1, c2, c3, vs, dt, n, track):
    """Explicit-Euler sub-steps of the four wheel plants and the body pose."""
    h = dt / n
    for _ in range(n):
        for i in range(4):
            v = vw[i]
            F = -c1 * v - c2 * v * abs(v) - c3 * math.tanh(v / vs)
            vw[i] = v + h / A * (u[i] + F + d[i])
        left = 0.5 * (vw[0] + vw[1])
        right = 0.5 * (vw[2] + vw[3])
        vb = 0.5 * (left + right)
        wb = (right - left) / track
        x += vb * math.cos(th) * h
        y += vb * math.sin(th) * h
        th += wb * h
    th = (th + math.pi) % (2.0 * math.pi) - math.pi
    return x, y, th


def goal_seek_command(pose: PoseSample, goal: GoalSpec, limits: MotionLimits, k_p: float,
                      k_h: float) -> tuple[float, float]:
    """Heading-proportional go-to-goal law used as the liveness fallback."""
    v, w, _ = return_to_safe_command(pose, (goal.x_g, goal.y_g), limits, k_p, k_h, goal.goal_tol)
    return v, w


class GreedyPlanner:
    """Evaluation-time planner: greedy table readout plus hysteresis/zero-lock shaping.

    It integrates its own commanded (v, omega) with the motion limits, exactly
    as in the MDP the table was trained on.
    """

    def __init__(self, q: QTable, limits: MotionLimits, weights: RewardWeights = RewardWeights()):
        self.q = q
        self.limits = limits
        self.lim = limits.as_array()
        self.disc = q.spec.as_array()
        self.acts = q.grid.table()
        self.P = pack_params(weights, limits, 0.0)
        self.v = 0.0
        self.omega = 0.0

    def reset(self) -> None:
        self.v = 0.0
        self.omega = 0.0

    def command(self, pose: PoseSample, goal: GoalSpec) -> tuple[float, float, float]:
        """Return (v, omega, d) for the next tick."""
        d, e = _features(pose.x, pose.y, pose.theta, goal.x_g, goal.y_g)
        s = _discretize(d, e, self.v, self.omega, self.disc)
        v1, w1 = self._apply(_greedy(self.q.values[s]), d, e)
        return v1, w1, float(d)

    def _apply(self, a: int, d: float, e: float) -> tuple[float, float]:
        a_v, a_w, clamp = _shape_action(self.acts[a, 0], self.acts[a, 1], d, e, self.omega, True,
                                        self.P, self.limits.a_omega_min, self.limits.a_omega_max)
        w0 = 0.0 if clamp else self.omega
        _, _, _, v1, w1 = _step(0.0, 0.0, 0.0, self.v, w0, a_v, 0.0 if clamp else a_w, self.lim)
        return float(v1), float(w1)

    def sync(self, v: float, omega: float) -> None:
        """Adopt the command actually executed after supervision."""
        self.v = v
        self.omega = omega


def _rate_limited(cmd: tuple[float, float], planner: GreedyPlanner,
                 lim: MotionLimits) -> tuple[float, float]:
    """Move from the planner's last (v, omega) toward ``cmd`` within the acceleration limits."""
    dv = _sat(cmd[0] - planner.v, lim.a_v_min * lim.dt, lim.a_v_max * lim.dt)
    dw = _sat(cmd[1] - planner.omega, lim.a_omega_min * lim.dt, lim.a_omega_max * lim.dt)
    return (float(_sat(planner.v + dv, lim.v_min, lim.v_max)),
            float(_sat(planner.omega + dw, lim.omega_min, lim.omega_max)))


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    terrain: str = "asphalt"
    goals: list[tuple[float, float]] = field(default_factory=list)
    fault: FaultEvent | None = None
    start_pose: tuple[float, float, float] = (0.0, 0.0, math.pi / 2)
    zeta: float = 2.0
    goal_tol: float = 0.10
    disturbance_seed: int = 0
    terrain_fractions: dict = field(default_factory=lambda: {"asphalt": 0.05, "soft": 0.25})
    limits: MotionLimits = field(default_factory=MotionLimits)
    plant: PlantParams = field(default_factory=PlantParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    chi0: float = 0.1
    settle_speed: float = 1e-3
    settle_max_s: float = 5.0
    segment_timeout_s: float = 300.0
    max_retries: int = 3
    stall_s: float = 20.0
    stall_progress: float = 0.05
    fallback_progress: float = 0.5
    max_time_s: float = 3600.0


@dataclass
class GoalResult:
    label: str
    target: tuple[float, float]
    final: tuple[float, float]
    error: float
    reached: bool
    time_s: float


@dataclass
class RunReport:
    scenario: str
    terrain: str
    goals: list[GoalResult]
    rmse: float
    success: bool
    mode_log: list[dict]
    ticks: int
    final_mode: str
    barrier_detect_lag_ticks: int | None = None
    wheel_metrics: list[dict | None] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "terrain": self.terrain,
            "goals": [{"label": g.label, "target": list(g.target), "final": list(g.final),
                       "error": g.error, "reached": g.reached, "time_s": g.time_s} for g in self.goals],
            "rmse": self.rmse,
            "success": self.success,
            "mode_log": self.mode_log,
            "ticks": self.ticks,
            "final_mode": self.final_mode,
            "barrier_detect_lag_ticks": self.barrier_detect_lag_ticks,
            "wheel_metrics": self.wheel_metrics,
            "meta": self.meta,
        }


class InverseModel:
    """Adapter giving u_IDM for a vector of wheel references."""

    def __init__(self, fn):
        self.fn = fn

    @classmethod
    def from_network(cls, model: NetworkModel) -> "InverseModel":
        return cls(model.forward)

    def __call__(self, v_ref: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(v_ref), dtype=float)


def simulate(cfg: ScenarioConfig, q: QTable, inverse: InverseModel, provider=None,
             telemetry: list | None = None) -> RunReport:
    """Run a goal sequence (and any scheduled fault) to completion."""
    lim = cfg.limits
    dt = lim.dt
    p = cfg.plant
    provider = provider or GroundTruthPose()
    planner = GreedyPlanner(q, lim)
    sup = Supervisor(lim, SupervisorConfig(**{**cfg.supervisor.__dict__, "goal_tol": cfg.goal_tol}))
    dspec = DisturbanceSpec.for_terrain(cfg.terrain, p, cfg.disturbance_seed, cfg.terrain_fractions)
    dist = Disturbance(dspec, 4, p.v_s)
    injector = FaultInjector(cfg.fault) if cfg.fault is not None else None

    x, y, th = cfg.start_pose
    vw = np.zeros(4)
    chi = np.full(4, cfg.chi0)
    goal_idx = 0
    origin = (x, y)
    results: list[GoalResult] = []
    goal_time: float | None = None
    settle_start: float | None = None
    segment_start = 0.0
    retries = 0
    best_d, best_time = math.inf, 0.0
    fallback_count = 0
    fallback_until: float | None = None
    return_origin: tuple[float, float] | None = None
    detect_lag: int | None = None
    first_violation_tick: int | None = None
    hist_ref: list[np.ndarray] = []
    hist_v: list[np.ndarray] = []
    tick = 0
    t = 0.0
    n_ticks = int(round(cfg.max_time_s / dt))
    for tick in range(n_ticks):
        t = tick * dt
        truth = PoseSample(t, x, y, th)
        meas = provider.sample(t, truth)
        if injector is not None:
            meas = injector.apply(meas, t, goal_idx, goal_time)
        goal = GoalSpec(*cfg.goals[goal_idx], cfg.goal_tol) if goal_idx < len(cfg.goals) else None

        # zone of the active segment; the return leg gets its own zone from the trusted pose
        if sup.mode in (Mode.RETURN_TO_SAFE, Mode.STOPPED) and return_origin is not None:
            zone = update_safety_zone((x, y), cfg.supervisor.safe_point, cfg.zeta, return_origin)
        else:
            # after the last goal the final segment's zone stays in force
            anchor = cfg.goals[min(goal_idx, len(cfg.goals) - 1)] if cfg.goals else origin
            zone = update_safety_zone((meas.x, meas.y), anchor, cfg.zeta, origin)
        if zone.violated and first_violation_tick is None and not sup.latched:
            first_violation_tick = tick

        cmd = (0.0, 0.0)
        if sup.mode in (Mode.NOMINAL, Mode.NEAR_BARRIER) and goal is not None:
            v_c, w_c, d = planner.command(meas, goal)
            if d < best_d - cfg.stall_progress:
                best_d, best_time = d, t
            if d <= cfg.goal_tol:
                sup.goal_reached()
                settle_start = t
                cmd = (0.0, 0.0)
            elif fallback_until is not None or (cfg.stall_s > 0 and t - best_time > cfg.stall_s):
                # no new closest approach for a while: steer straight at the goal until
                # the distance has dropped by fallback_progress, then hand back
                if fallback_until is None:
                    fallback_until = d - cfg.fallback_progress
                    fallback_count += 1
                if d <= fallback_until:
                    fallback_until = None
                    best_d, best_time = d, t
                    cmd = (v_c, w_c)
                else:
                    cmd = _rate_limited(goal_seek_command(meas, goal, lim, cfg.supervisor.k_p,
                                                          cfg.supervisor.k_h), planner, lim)
            elif t - segment_start > cfg.segment_timeout_s:
                results.append(GoalResult(f"goal {goal_idx + 1}", cfg.goals[goal_idx], (x, y),
                                          math.hypot(goal.x_g - x, goal.y_g - y), False, t))
                break
            else:
                cmd = (v_c, w_c)
        elif sup.mode is Mode.GOAL_REACHED:
            settled = bool(np.all(np.abs(vw) < cfg.settle_speed))
            if settled or t - settle_start >= cfg.settle_max_s:
                d_meas = math.hypot(goal.x_g - meas.x, goal.y_g - meas.y)
                if d_meas <= cfg.goal_tol or retries >= cfg.max_retries:
                    results.append(GoalResult(f"goal {goal_idx + 1}", cfg.goals[goal_idx], (x, y),
                                              math.hypot(goal.x_g - x, goal.y_g - y),
                                              d_meas <= cfg.goal_tol, t))
                    goal_idx += 1
                    goal_time = t
                    if goal_idx < len(cfg.goals):
                        origin = (meas.x, meas.y)
                    retries = 0
                    segment_start = t
                else:
                    retries += 1
                planner.reset()
                best_d, best_time = math.inf, t
                fallback_until = None
                sup.next_goal()

        n_log = len(sup.log)
        v_cmd, w_cmd = sup.supervise(zone, cmd, truth)
        if detect_lag is None and first_violation_tick is not None and any(
                m.mode is Mode.BRAKING for m in sup.log[n_log:]):
            detect_lag = tick - first_violation_tick
        if sup.mode is Mode.RETURN_TO_SAFE and return_origin is None:
            return_origin = (x, y)
        planner.sync(v_cmd, w_cmd)

        v_ref = allocate_wheel_refs(v_cmd, w_cmd, cfg.geometry)
        L = barrier_gain(zone)
        if math.isinf(L):
            L = 0.0
        e = vw - v_ref
        u_idm = inverse(v_ref)
        u = control_law(e, u_idm, L, chi, cfg.gains)
        chi = np.maximum(adapt(chi, e, L, cfg.gains, dt), 0.0)
        d_w = dist.sample(v_ref, dt)
        hist_ref.append(v_ref)
        hist_v.append(vw.copy())
        if telemetry is not None:
            telemetry.append([tick, t, x, y, th, meas.x, meas.y, meas.theta, sup.mode.value, goal_idx,
                              zone.E, zone.O, v_cmd, w_cmd, *v_ref, *vw, *e, *chi, *u])
        x, y, th = _integrate(vw, u, d_w, x, y, th, p.A, p.c1, p.c2, p.c3, p.v_s, dt,
                              p.substeps, cfg.geometry.track_width)

        if goal_idx >= len(cfg.goals) and sup.mode is Mode.NOMINAL:
            fault_pending = injector is not None and injector.start_time is None
            if injector is None or (not fault_pending and not zone.violated and t - goal_time > 60.0):
                break
        if sup.mode is Mode.STOPPED and np.all(np.abs(vw) < cfg.settle_speed):
            break

    ticks = tick + 1
    if return_origin is not None:
        sp = cfg.supervisor.safe_point
        err = math.hypot(sp[0] - x, sp[1] - y)
        results.append(GoalResult("safe area", tuple(sp), (x, y), err, sup.mode is Mode.STOPPED,
                                  ticks * dt))
    all_reached = len([r for r in results if r.label != "safe area"]) == len(cfg.goals) and all(
        r.reached and r.error <= cfg.goal_tol for r in results)
    if cfg.fault is not None:
        all_reached = all_reached and sup.mode is Mode.STOPPED
    report = RunReport(
        cfg.name, cfg.terrain, results, rmse([r.error for r in results]), bool(all_reached),
        [{"tick": m.tick, "mode": m.mode.value, "cause": m.cause} for m in sup.log], ticks,
        sup.mode.value, detect_lag, wheel_metrics(dt, hist_ref, hist_v),
        {"d_star": dspec.d_star, "disturbance_seed": cfg.disturbance_seed, "dt": dt,
         "fallback_engagements": fallback_count},
    )
    return report


def write_telemetry(path: str | Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TELEMETRY_FIELDS)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def wheel_metrics(dt: float, refs, speeds) -> list[dict | None]:
    """Per-wheel step metrics plus the mean steady-state error over all constant segments."""
    if len(refs) < 2:
        return [None] * 4
    R, V = np.asarray(refs), np.asarray(speeds)
    t = np.arange(R.shape[0]) * dt
    out: list[dict | None] = []
    for i in range(4):
        m = tracking_metrics(t, R[:, i], V[:, i])
        sse = segment_steady_state_errors(R[:, i], V[:, i])
        if m is None:
            out.append(None)
            continue
        # JSON has no infinity: a response that never settles reports null
        row = {k: (v if math.isfinite(v) else None) for k, v in m.to_dict().items()}
        row["mean_segment_steady_state_error"] = float(np.mean(sse)) if sse else None
        out.append(row)
    return out


def wheel_step_response(v_step: float, cfg: ScenarioConfig, inverse: InverseModel,
                        duration_s: float = 30.0, t_step: float = 1.0, goal_distance: float = 20.0,
                        telemetry: list | None = None):
    """Drive straight ahead with a wheel-speed step and record the four wheel channels.

    The robot starts at rest facing a goal ``goal_distance`` ahead so the zone
    (and therefore the barrier term) is the one of a real straight segment.
    Returns (t, v_ref, wheel speeds) with wheel speeds shaped (ticks, 4).
    """
    lim = cfg.limits
    dt = lim.dt
    p = cfg.plant
    dspec = DisturbanceSpec.for_terrain(cfg.terrain, p, cfg.disturbance_seed, cfg.terrain_fractions)
    dist = Disturbance(dspec, 4, p.v_s)
    x, y, th = cfg.start_pose
    goal = (x + goal_distance * math.cos(th), y + goal_distance * math.sin(th))
    origin = (x, y)
    vw = np.zeros(4)
    chi = np.full(4, cfg.chi0)
    n = int(round(duration_s / dt))
    ts, refs, speeds = np.zeros(n), np.zeros(n), np.zeros((n, 4))
    for k in range(n):
        t = k * dt
        v_d = v_step if t >= t_step else 0.0
        v_ref = np.full(4, v_d)
        zone = update_safety_zone((x, y), goal, cfg.zeta, origin)
        L = barrier_gain(zone)
        if math.isinf(L):
            L = 0.0
        ts[k], refs[k], speeds[k] = t, v_d, vw
        e = vw - v_ref
        u = control_law(e, inverse(v_ref), L, chi, cfg.gains)
        chi = np.maximum(adapt(chi, e, L, cfg.gains, dt), 0.0)
        if telemetry is not None:
            telemetry.append([k, t, x, y, th, x, y, th, Mode.NOMINAL.value, 0, zone.E, zone.O,
                              v_d, 0.0, *v_ref, *vw, *e, *chi, *u])
        x, y, th = _integrate(vw, u, dist.sample(v_ref, dt), x, y, th, p.A, p.c1, p.c2, p.c3,
                              p.v_s, dt, p.substeps, cfg.geometry.track_width)
    return ts, refs, speeds


def simulate_step(cfg: ScenarioConfig, inverse: InverseModel, v_step: float = 0.2,
                  t_step: float = 1.0, duration_s: float = 30.0, goal_distance: float = 20.0,
                  telemetry: list | None = None) -> RunReport:
    """Dedicated wheel-speed step scenario; the report carries the per-wheel metrics."""
    ts, refs, speeds = wheel_step_response(v_step, cfg, inverse, duration_s, t_step,
                                           goal_distance, telemetry)
    R = np.repeat(refs[:, None], 4, axis=1)
    wm = wheel_metrics(cfg.limits.dt, R, speeds)
    ok = all(m is not None and m["steady_state_error"] <= 0.05 * abs(v_step) for m in wm)
    dspec = DisturbanceSpec.for_terrain(cfg.terrain, cfg.plant, cfg.disturbance_seed,
                                        cfg.terrain_fractions)
    return RunReport(cfg.name, cfg.terrain, [], 0.0, bool(ok), [], int(ts.size), Mode.NOMINAL.value,
                     None, wm, {"d_star": dspec.d_star, "disturbance_seed": cfg.disturbance_seed,
                                "dt": cfg.limits.dt, "v_step": v_step, "t_step": t_step})


__all__ = ["GreedyPlanner", "InverseModel", "RunReport", "ScenarioConfig", "TELEMETRY_FIELDS",
           "goal_seek_command", "simulate", "simulate_step", "wheel_metrics", "wheel_step_response",
           "write_telemetry"]
