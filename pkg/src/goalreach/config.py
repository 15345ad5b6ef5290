"""Layered TOML configuration and builders for the typed runtime objects.

A config file may name a parent with a top-level ``extends`` key (a shipped
profile name such as ``"desk"`` or a path relative to the file). Tables are
merged key by key, children overriding parents; ``baseline`` is the root of
every chain.
"""
from __future__ import annotations

import copy
import math
from importlib import resources
from pathlib import Path
from typing import Any

import tomli

from .actuator import PlantParams
from .control import ControllerGains, VehicleGeometry
from .geometry import MotionLimits, Workspace
from .neural import FitConfig, SplitSpec
from .planner.agent import TrainConfig, UpdateRule
from .planner.mdp import DiscretizerSpec
from .planner.rewards import RewardWeights
from .planner.training import PlannerEnv
from .pose import NoiseSpec, make_provider
from .sim import ScenarioConfig
from .supervisor import FaultEvent, SupervisorConfig

PROFILES = ("baseline", "desk", "table3_asphalt", "table4_soft", "step_asphalt")
_MAX_DEPTH = 16


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def profile_path(name: str) -> Path:
    if name not in PROFILES:
        raise ConfigError(f"unknown shipped profile {name!r}; expected one of {PROFILES}")
    return Path(str(resources.files("goalreach") / "data" / f"{name}.toml"))


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _read(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_parent(ref: str, child: Path) -> Path:
    if ref in PROFILES:
        return profile_path(ref)
    p = Path(ref)
    return p if p.is_absolute() else child.parent / p


def load_config(source: str | Path | None = None) -> dict:
    """Load a config file (or shipped profile name) merged over its ``extends`` chain."""
    if source is None:
        source = "baseline"
    path = profile_path(str(source)) if str(source) in PROFILES else Path(source)
    chain = []
    seen = set()
    while True:
        key = path.resolve()
        if key in seen or len(chain) > _MAX_DEPTH:
            raise ConfigError(f"circular or too deep 'extends' chain at {path}")
        seen.add(key)
        data = _read(path)
        parent = data.pop("extends", None)
        chain.append(data)
        if parent is None:
            break
        path = _resolve_parent(str(parent), path)
    root = _read(profile_path("baseline"))
    root.pop("extends", None)
    merged = root
    for layer in reversed(chain):
        merged = deep_merge(merged, layer)
    validate_keys(merged, root)
    return merged


def validate_keys(cfg: dict, reference: dict) -> None:
    """Reject tables and keys that the baseline does not define (typo guard)."""
    for section, table in cfg.items():
        if section not in reference:
            raise ConfigError(f"unknown config section [{section}]")
        if isinstance(table, dict):
            unknown = sorted(set(table) - set(reference[section]))
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _build(cls, section: str, values: dict, **extra):
    try:
        return cls(**values, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def motion_limits(cfg: dict) -> MotionLimits:
    return _build(MotionLimits, "limits", cfg["limits"])


def reward_weights(cfg: dict) -> RewardWeights:
    return _build(RewardWeights, "rewards", cfg["rewards"])


def planner_env(cfg: dict) -> PlannerEnv:
    p = cfg["planner"]
    lim = motion_limits(cfg)
    try:
        ws = Workspace.square(float(p["workspace_half"]))
        disc = DiscretizerSpec.for_workspace(ws, lim, float(p["distance_resolution"]),
                                             int(p["n_theta"]), int(p["n_v"]), int(p["n_omega"]))
        return PlannerEnv(workspace=ws, limits=lim, weights=reward_weights(cfg), discretizer=disc,
                          goal_tol=float(p["goal_tol"]), start_min_dist=float(p["start_min_dist"]),
                          goal_mode=str(p["goal_mode"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[planner] {exc}") from exc


def train_config(cfg: dict, rule: str | None = None, seed: int | None = None) -> TrainConfig:
    p = cfg["planner"]
    try:
        return TrainConfig(alpha=float(p["alpha"]), gamma=float(p["gamma"]),
                           episodes=int(p["episodes"]), eval_episodes=int(p["eval_episodes"]),
                           eps_0=float(p["eps_0"]), eps_final=float(p["eps_final"]),
                           timeout_steps=int(p["timeout_steps"]),
                           rule=UpdateRule(rule or p["rule"]),
                           rng_seed=int(p["seed"] if seed is None else seed))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[planner] {exc}") from exc


def plant_params(cfg: dict) -> PlantParams:
    return _build(PlantParams, "plant", cfg["plant"])


def terrain_fractions(cfg: dict) -> dict[str, float]:
    fr = {k: float(v) for k, v in cfg["terrain"].items()}
    if any(v < 0 for v in fr.values()):
        raise ConfigError("[terrain] fractions must be non-negative")
    return fr


def fit_config(cfg: dict, seed: int | None = None) -> tuple[FitConfig, SplitSpec]:
    d = cfg["dnn"]
    try:
        split = SplitSpec(*[float(r) for r in d["split"]], rng_seed=int(d["split_seed"]))
        fc = FitConfig(hidden=tuple(int(h) for h in d["hidden"]), max_epochs=int(d["max_epochs"]),
                       goal=float(d["goal"]), min_grad=float(d["min_grad"]),
                       max_fail=int(d["max_fail"]), rng_seed=int(d["seed"] if seed is None else seed))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[dnn] {exc}") from exc
    if not fc.hidden or min(fc.hidden) < 1 or fc.max_epochs < 1:
        raise ConfigError("[dnn] hidden sizes and max_epochs must be positive")
    return fc, split


def controller_gains(cfg: dict) -> ControllerGains:
    c = {k: v for k, v in cfg["controller"].items() if k != "chi0"}
    return _build(ControllerGains, "controller", c)


def supervisor_config(cfg: dict) -> SupervisorConfig:
    s = dict(cfg["supervisor"])
    s["safe_point"] = tuple(float(v) for v in s["safe_point"])
    return _build(SupervisorConfig, "supervisor", s, goal_tol=float(cfg["planner"]["goal_tol"]))


def fault_event(cfg: dict, n_goals: int) -> FaultEvent | None:
    f = dict(cfg["fault"])
    if not f.pop("enabled"):
        return None
    t_time = float(f.pop("trigger_time"))
    t_goal = int(f.pop("trigger_goal_index"))
    f["direction"] = tuple(float(v) for v in f["direction"])
    if t_time >= 0:
        return _build(FaultEvent, "fault", f, trigger_time=t_time)
    idx = n_goals if t_goal < 0 else t_goal
    if idx > n_goals:
        raise ConfigError(f"[fault] trigger_goal_index {idx} exceeds the {n_goals} goals")
    return _build(FaultEvent, "fault", f, trigger_goal_index=idx)


def pose_provider(cfg: dict, base_dir: Path | None = None):
    p = cfg["pose"]
    log = p["log"] or None
    if log is not None and base_dir is not None and not Path(log).is_absolute():
        log = base_dir / log
    try:
        return make_provider(p["mode"], NoiseSpec(float(p["sigma_xy"]), float(p["sigma_theta"]),
                                                  int(p["seed"])), log)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"[pose] {exc}") from exc


_SCENARIO_PASSTHROUGH = ("settle_speed", "settle_max_s", "segment_timeout_s", "max_retries",
                         "stall_s", "stall_progress", "fallback_progress", "max_time_s")


def scenario_config(cfg: dict, terrain: str | None = None, seed: int | None = None) -> ScenarioConfig:
    s = cfg["scenario"]
    goals = [tuple(float(c) for c in g) for g in s["goals"]]
    if any(len(g) != 2 or not all(math.isfinite(c) for c in g) for g in goals):
        raise ConfigError("[scenario] goals must be finite [x, y] pairs")
    start = tuple(float(c) for c in s["start_pose"])
    if len(start) != 3:
        raise ConfigError("[scenario] start_pose must be [x, y, theta]")
    terrain = terrain or s["terrain"]
    fractions = terrain_fractions(cfg)
    if terrain not in fractions:
        raise ConfigError(f"[scenario] unknown terrain {terrain!r}; expected one of {sorted(fractions)}")
    if float(s["zeta"]) <= 0:
        raise ConfigError("[scenario] zeta must be positive")
    extra = {k: int(s[k]) if k == "max_retries" else float(s[k]) for k in _SCENARIO_PASSTHROUGH}
    try:
        return ScenarioConfig(
            name=str(s["name"]), terrain=terrain, goals=goals, fault=fault_event(cfg, len(goals)),
            start_pose=start, zeta=float(s["zeta"]), goal_tol=float(cfg["planner"]["goal_tol"]),
            disturbance_seed=int(s["disturbance_seed"] if seed is None else seed),
            terrain_fractions=fractions, limits=motion_limits(cfg), plant=plant_params(cfg),
            gains=controller_gains(cfg),
            geometry=_build(VehicleGeometry, "vehicle", cfg["vehicle"]),
            supervisor=supervisor_config(cfg), chi0=float(cfg["controller"]["chi0"]), **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[scenario] {exc}") from exc


def dump_toml(cfg: dict[str, Any]) -> str:
    """Serialise a merged config back to TOML (flat tables of scalars and arrays)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, float)):
            return repr(v)
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        raise TypeError(f"cannot serialise {type(v).__name__}")

    lines = []
    for section, table in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in table.items())
        lines.append("")
    return "\n".join(lines)
