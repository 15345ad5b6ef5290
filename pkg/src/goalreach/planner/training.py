"""Episode simulation, Q-learning/SARSA training and greedy evaluation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ..geometry import MotionLimits, Workspace, _features, _step
from .agent import QTable, TrainConfig, TransitionRecord, UpdateRule, _select, _shape_action, _td_update
from .mdp import ActionGrid, DiscretizerSpec, _discretize
from .rewards import CAUSE_FROM_CODE, I_GTOL, RewardWeights, TerminalCause, _shape_reward, _task_reward, pack_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerEnv:
    """Everything that defines the planner's MDP apart from the learning schedule."""

    workspace: Workspace = field(default_factory=Workspace)
    limits: MotionLimits = field(default_factory=MotionLimits)
    weights: RewardWeights = field(default_factory=RewardWeights)
    discretizer: DiscretizerSpec | None = None
    actions: ActionGrid | None = None
    goal_tol: float = 0.10
    start_min_dist: float = 0.20
    goal_mode: str = "uniform"

    def __post_init__(self):
        if self.discretizer is None:
            object.__setattr__(self, "discretizer",
                               DiscretizerSpec.for_workspace(self.workspace, self.limits))
        if self.actions is None:
            object.__setattr__(self, "actions", ActionGrid.from_limits(self.limits))
        if self.goal_mode not in ("uniform", "center"):
            raise ValueError("goal_mode must be 'uniform' or 'center'")
        if self.start_min_dist <= self.goal_tol:
            raise ValueError("start_min_dist must exceed goal_tol")

    def new_table(self) -> QTable:
        return QTable(self.discretizer, self.actions)

    def sample_start(self, rng: np.random.Generator) -> tuple[tuple[float, float, float], tuple[float, float]]:
        """Uniform start pose and goal with the minimum start-to-goal distance enforced."""
        ws = self.workspace
        if self.goal_mode == "center":
            goal = (0.5 * (ws.x_lo + ws.x_hi), 0.5 * (ws.y_lo + ws.y_hi))
        else:
            goal = (rng.uniform(ws.x_lo, ws.x_hi), rng.uniform(ws.y_lo, ws.y_hi))
        while True:
            x, y = rng.uniform(ws.x_lo, ws.x_hi), rng.uniform(ws.y_lo, ws.y_hi)
            if math.hypot(goal[0] - x, goal[1] - y) >= self.start_min_dist:
                break
        theta = rng.uniform(-math.pi, math.pi)
        return (float(x), float(y), float(theta)), (float(goal[0]), float(goal[1]))


@njit(cache=True)
def _episode(Q, x, y, th, xg, yg, ws, lim, disc, acts, P, aw_min, aw_max, eps, alpha, gamma,
             sarsa, eval_phase, learn, timeout, U, rec, rec_r):
    gtol = P[I_GTOL]
    v = 0.0
    w = 0.0
    d, e = _features(x, y, th, xg, yg)
    s0 = 0.0
    if e > 0.0:
        s0 = 1.0
    elif e < 0.0:
        s0 = -1.0
    s = _discretize(d, e, v, w, disc)
    a = _select(Q[s], eps, U[0, 0], U[0, 1])
    ret = 0.0
    cause = 0
    steps = 0
    for t in range(timeout):
        a_v, a_w, clamp = _shape_action(acts[a, 0], acts[a, 1], d, e, w, eval_phase, P,
                                        aw_min, aw_max)
        if clamp:
            x1, y1, th1, v1, w1 = _step(x, y, th, v, 0.0, a_v, 0.0, lim)
        else:
            x1, y1, th1, v1, w1 = _step(x, y, th, v, w, a_v, a_w, lim)
        d1, e1 = _features(x1, y1, th1, xg, yg)
        if d1 <= gtol:
            cause = 1
        elif x1 < ws[0] or x1 > ws[1] or y1 < ws[2] or y1 > ws[3]:
            cause = 3
        elif t + 1 >= timeout:
            cause = 2
        r = _task_reward(d, d1, cause, P) + _shape_reward(d, d1, e, e1, v1, w, w1, a_v, a_w, s0, P)
        s1 = _discretize(d1, e1, v1, w1, disc)
        a1 = -1
        if sarsa and cause == 0:
            a1 = _select(Q[s1], eps, U[t + 1, 0], U[t + 1, 1])
        if learn:
            _td_update(Q, s, a, r, s1, a1, cause != 0, alpha, gamma, sarsa)
        if not sarsa and cause == 0:
            a1 = _select(Q[s1], eps, U[t + 1, 0], U[t + 1, 1])
        if rec.shape[0] > 0:
            rec[t, 0] = s
            rec[t, 1] = a
            rec[t, 2] = s1
            rec[t, 3] = a1
            rec[t, 4] = cause
            rec_r[t] = r
        ret += r
        steps = t + 1
        x, y, th, v, w, d, e, s, a = x1, y1, th1, v1, w1, d1, e1, s1, a1
        if cause != 0:
            break
    return steps, cause, ret, d


@dataclass
class EpisodeResult:
    steps: int
    cause: TerminalCause
    episode_return: float
    final_distance: float
    records: list[TransitionRecord] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.cause is TerminalCause.GOAL


class _Runner:
    """Pre-packed kernel arguments for one environment."""

    def __init__(self, env: PlannerEnv):
        self.env = env
        self.ws = env.workspace.as_array()
        self.lim = env.limits.as_array()
        self.disc = env.discretizer.as_array()
        self.acts = env.actions.table()
        self.P = pack_params(env.weights, env.limits, env.goal_tol)

    def run(self, Q, start, goal, eps, cfg: TrainConfig, eval_phase, learn, rng, record=False):
        timeout = cfg.timeout_steps
        U = rng.random((timeout + 1, 2))
        rec = np.zeros((timeout if record else 0, 5), dtype=np.int64)
        rec_r = np.zeros(timeout if record else 0)
        steps, cause, ret, d = _episode(
            Q, start[0], start[1], start[2], goal[0], goal[1], self.ws, self.lim, self.disc,
            self.acts, self.P, self.env.limits.a_omega_min, self.env.limits.a_omega_max,
            eps, cfg.alpha, cfg.gamma, cfg.rule is UpdateRule.SARSA, eval_phase, learn,
            timeout, U, rec, rec_r)
        result = EpisodeResult(int(steps), CAUSE_FROM_CODE[int(cause)], float(ret), float(d))
        if record:
            for t in range(result.steps):
                c = CAUSE_FROM_CODE[int(rec[t, 4])]
                a_next = int(rec[t, 3])
                result.records.append(TransitionRecord(
                    int(rec[t, 0]), int(rec[t, 1]), float(rec_r[t]), int(rec[t, 2]),
                    None if a_next < 0 else a_next, c is not TerminalCause.NONE, c.value))
        return result


def run_episode(env: PlannerEnv, q: QTable, cfg: TrainConfig, phase: str, rng: np.random.Generator,
                eps: float | None = None, start=None, goal=None, learn: bool | None = None,
                record: bool = True) -> EpisodeResult:
    """Simulate one episode from a sampled (or given) start.

    ``phase`` selects the policy shaping ("train" brakes inside the goal lock window,
    "eval" hard-clamps the angular velocity). Learning defaults to on in training.
    """
    if phase not in ("train", "eval"):
        raise ValueError("phase must be 'train' or 'eval'")
    if q.hash != env.new_table().hash:
        raise ValueError("Q-table layout does not match the environment")
    if start is None or goal is None:
        s_start, s_goal = env.sample_start(rng)
        start = s_start if start is None else start
        goal = s_goal if goal is None else goal
    if eps is None:
        eps = 0.0 if phase == "eval" else cfg.eps_0
    if learn is None:
        learn = phase == "train"
    return _Runner(env).run(q.values, start, goal, eps, cfg, phase == "eval", learn, rng, record)


@dataclass
class LearningCurve:
    episode: list[int] = field(default_factory=list)
    episode_return: list[float] = field(default_factory=list)
    final_distance: list[float] = field(default_factory=list)
    success: list[bool] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "return", "final_distance", "success"])
            for row in zip(self.episode, self.episode_return, self.final_distance, self.success):
                writer.writerow([row[0], repr(row[1]), repr(row[2]), int(row[3])])


def train(cfg: TrainConfig, env: PlannerEnv) -> tuple[QTable, LearningCurve]:
    rng = np.random.default_rng(cfg.rng_seed)
    q = env.new_table()
    runner = _Runner(env)
    curve = LearningCurve()
    for ep in range(cfg.episodes):
        start, goal = env.sample_start(rng)
        res = runner.run(q.values, start, goal, cfg.epsilon(ep), cfg, False, True, rng)
        curve.episode.append(ep)
        curve.episode_return.append(res.episode_return)
        curve.final_distance.append(res.final_distance)
        curve.success.append(res.success)
        if (ep + 1) % max(1, cfg.episodes // 10) == 0:
            recent = curve.success[-max(1, cfg.episodes // 10):]
            log.info("episode %d/%d eps=%.4f success(last block)=%.3f", ep + 1, cfg.episodes,
                     cfg.epsilon(ep), float(np.mean(recent)))
    q.meta.update({"rule": cfg.rule.value, "episodes": cfg.episodes, "rng_seed": cfg.rng_seed,
                   "alpha": cfg.alpha, "gamma": cfg.gamma, "timeout_steps": cfg.timeout_steps})
    return q, curve


@dataclass(frozen=True)
class EvalSummary:
    success_rate: float
    mean_final_distance: float
    mean_episode_length: float
    episodes: int


def evaluate_greedy(q: QTable, env: PlannerEnv, n_episodes: int, timeout_steps: int = 1200,
                    seed: int = 12345) -> EvalSummary:
    """Greedy (eps = 0) rollouts with evaluation-phase shaping; the table is not modified."""
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(episodes=1, timeout_steps=timeout_steps)
    runner = _Runner(env)
    values = q.values.copy()
    succ, dist, length = [], [], []
    for _ in range(n_episodes):
        start, goal = env.sample_start(rng)
        res = runner.run(values, start, goal, 0.0, cfg, True, False, rng)
        succ.append(res.success)
        dist.append(res.final_distance)
        length.append(res.steps)
    return EvalSummary(float(np.mean(succ)), float(np.mean(dist)), float(np.mean(length)), n_episodes)
