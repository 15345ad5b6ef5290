"""Tabular action values, TD updates, epsilon-greedy selection and policy-side shaping."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit

from ..geometry import MotionLimits
from .mdp import ActionGrid, DiscreteState, DiscretizerSpec, spec_hash
from .rewards import I_DLOCK, I_DT, I_EDB, I_ELOCK, I_WDB, RewardWeights, pack_params

QTABLE_FORMAT = "goalreach.qtable"
QTABLE_VERSION = 1


class UpdateRule(str, Enum):
    QLEARNING = "qlearning"
    SARSA = "sarsa"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.10
    gamma: float = 0.95
    episodes: int = 30000
    eval_episodes: int = 1000
    eps_0: float = 1.0
    eps_final: float = 1e-3
    timeout_steps: int = 1200
    rule: UpdateRule = UpdateRule.QLEARNING
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.eps_final <= self.eps_0 <= 1:
            raise ValueError("need 0 < eps_final <= eps_0 <= 1")
        if self.episodes < 1 or self.timeout_steps < 1:
            raise ValueError("episodes and timeout_steps must be positive")
        object.__setattr__(self, "rule", UpdateRule(self.rule))

    def epsilon(self, episode: int) -> float:
        """Exponential decay from eps_0 at episode 0 to eps_final at the last episode."""
        if self.episodes == 1:
            return self.eps_0
        frac = episode / (self.episodes - 1)
        return self.eps_0 * (self.eps_final / self.eps_0) ** frac


@dataclass
class TransitionRecord:
    s: int
    a: int
    r: float
    s_next: int
    a_next: int | None
    terminal: bool
    cause: str = "none"

    def __post_init__(self):
        if self.terminal == (self.cause == "none"):
            raise ValueError("terminal cause must be set iff the transition is terminal")


@dataclass(frozen=True)
class ShapedAction:
    a_v: float
    a_omega: float
    clamp_omega: bool = False


@njit(cache=True)
def _greedy(row):
    best = 0
    for k in range(1, row.shape[0]):
        if row[k] > row[best]:
            best = k
    return best


@njit(cache=True)
def _select(row, eps, u_explore, u_action):
    n = row.shape[0]
    if u_explore < eps:
        k = int(u_action * n)
        return k if k < n else n - 1
    return _greedy(row)


@njit(cache=True)
def _td_update(Q, s, a, r, s_next, a_next, terminal, alpha, gamma, sarsa):
    if terminal:
        target = r
    elif sarsa:
        target = r + gamma * Q[s_next, a_next]
    else:
        row = Q[s_next]
        best = row[0]
        for k in range(1, row.shape[0]):
            if row[k] > best:
                best = row[k]
        target = r + gamma * best
    Q[s, a] += alpha * (target - Q[s, a])


@njit(cache=True)
def _shape_action(a_v, a_w, d, e, omega, eval_phase, P, aw_min, aw_max):
    clamp = False
    if abs(e) < P[I_EDB] and abs(omega) < P[I_WDB]:
        a_w = 0.0
    if abs(e) <= P[I_ELOCK] and d <= P[I_DLOCK]:
        if eval_phase:
            clamp = True
            a_w = -omega / P[I_DT]
        else:
            a_w = min(max(-omega / P[I_DT], aw_min), aw_max)
    return a_v, a_w, clamp


class QTable:
    """Dense |S| x |A| action values bound to the discretizer and action grid."""

    def __init__(self, spec: DiscretizerSpec, grid: ActionGrid, values: np.ndarray | None = None,
                 meta: dict | None = None):
        self.spec = spec
        self.grid = grid
        shape = (spec.n_states, grid.n_actions)
        if values is None:
            values = np.zeros(shape)
        values = np.ascontiguousarray(values, dtype=float)
        if values.shape != shape:
            raise ValueError(f"value matrix shape {values.shape} does not match {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Q-table contains non-finite entries")
        self.values = values
        self.meta = dict(meta or {})

    @property
    def hash(self) -> str:
        return spec_hash(self.spec, self.grid)

    def greedy(self, s: int) -> int:
        return int(_greedy(self.values[s]))

    def save(self, path: str | Path) -> None:
        doc = {
            "format": QTABLE_FORMAT,
            "version": QTABLE_VERSION,
            "spec_hash": self.hash,
            "discretizer": asdict(self.spec),
            "actions": {"a_v": list(self.grid.a_v), "a_omega": list(self.grid.a_omega)},
            "meta": self.meta,
            "values": self.values.tolist(),
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path, expect_hash: str | None = None) -> "QTable":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != QTABLE_FORMAT:
            raise ValueError(f"{path}: not a Q-table file")
        if doc.get("version") != QTABLE_VERSION:
            raise ValueError(f"{path}: unsupported Q-table version {doc.get('version')}")
        spec = DiscretizerSpec(**doc["discretizer"])
        grid = ActionGrid(tuple(doc["actions"]["a_v"]), tuple(doc["actions"]["a_omega"]))
        table = cls(spec, grid, np.array(doc["values"], dtype=float), doc.get("meta"))
        if table.hash != doc["spec_hash"]:
            raise ValueError(f"{path}: embedded spec hash does not match its discretizer/actions")
        if expect_hash is not None and table.hash != expect_hash:
            raise ValueError(f"{path}: Q-table was trained for a different state/action layout")
        return table


def td_update(q: QTable, rec: TransitionRecord, cfg: TrainConfig) -> float:
    """Apply one TD correction to ``q`` in place and return the new Q(s, a)."""
    sarsa = cfg.rule is UpdateRule.SARSA
    if sarsa and not rec.terminal and rec.a_next is None:
        raise ValueError("SARSA update needs the next action on non-terminal transitions")
    a_next = -1 if rec.a_next is None else int(rec.a_next)
    _td_update(q.values, int(rec.s), int(rec.a), float(rec.r), int(rec.s_next), a_next,
               bool(rec.terminal), cfg.alpha, cfg.gamma, sarsa)
    return float(q.values[rec.s, rec.a])


def select_action(q: QTable, s: DiscreteState | int, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action index; greedy ties go to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    flat = s.flat if isinstance(s, DiscreteState) else int(s)
    u = rng.random(2)
    return int(_select(q.values[flat], eps, u[0], u[1]))


def shape_policy_action(raw: tuple[float, float], d: float, e: float, omega: float, phase: str,
                        w: RewardWeights, limits: MotionLimits) -> ShapedAction:
    """Hysteresis clamp and goal zero-lock applied to a selected (a_v, a_omega)."""
    if phase not in ("train", "eval"):
        raise ValueError("phase must be 'train' or 'eval'")
    P = pack_params(w, limits, 0.0)
    a_v, a_w, clamp = _shape_action(float(raw[0]), float(raw[1]), d, e, omega, phase == "eval", P,
                                    limits.a_omega_min, limits.a_omega_max)
    return ShapedAction(float(a_v), float(a_w), bool(clamp))
