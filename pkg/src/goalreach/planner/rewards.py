"""Task reward, the twelve shaping terms, and the distance/heading potential."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from ..geometry import MotionLimits


class TerminalCause(str, Enum):
    NONE = "none"
    GOAL = "goal"
    TIMEOUT = "timeout"
    OUT_OF_WORKSPACE = "out-of-workspace"


# integer codes used inside compiled kernels
CAUSE_CODES = {TerminalCause.NONE: 0, TerminalCause.GOAL: 1,
               TerminalCause.TIMEOUT: 2, TerminalCause.OUT_OF_WORKSPACE: 3}
CAUSE_FROM_CODE = {v: k for k, v in CAUSE_CODES.items()}

# magnitudes below this count as zero when testing for an angular-velocity sign flip;
# repeated +/-a*dt increments leave ~1e-18 residues instead of an exact zero
SIGN_EPS = 1e-9

SHAPE_TERM_NAMES = ("theta", "omega", "v_par", "v_perp", "accel", "hyst", "goal",
                    "flip", "inc", "stall", "stop", "sign")


@dataclass(frozen=True)
class RewardWeights:
    k_d: float = 5.0
    k_theta: float = 6.0
    k_v: float = 0.08
    k_lat: float = 0.9
    k_omega: float = 0.28
    k_av: float = 0.10
    k_aomega: float = 0.10
    k_step: float = 0.04
    k_timeout: float = 3.0
    k_ws: float = 1.2
    k_wflip: float = 0.85
    k_head_inc: float = 0.25
    k_head_stall: float = 0.03
    delta_e_head: float = 0.02
    k_wstop: float = 1.5
    e_pad: float = 0.01
    k_wsign: float = 0.8
    e_db: float = 0.01
    omega_db: float = 0.001
    e_lock: float = 0.03
    d_lock: float = 0.30

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


_FIELDS = tuple(RewardWeights.__dataclass_fields__)
# packed layout: the RewardWeights fields in order, then goal_tol, a_omega_brake, dt
IDX = {name: i for i, name in enumerate(_FIELDS + ("goal_tol", "a_omega_brake", "dt"))}
I_KD, I_KTH, I_KV, I_KLAT, I_KW, I_KAV, I_KAW, I_KSTEP, I_KTO, I_KWS, I_KFLIP, \
    I_KINC, I_KSTALL, I_DEHEAD, I_KSTOP, I_EPAD, I_KSIGN, I_EDB, I_WDB, I_ELOCK, \
    I_DLOCK, I_GTOL, I_AWB, I_DT = range(len(IDX))


def pack_params(w: RewardWeights, limits: MotionLimits, goal_tol: float) -> np.ndarray:
    vals = [getattr(w, f) for f in _FIELDS] + [goal_tol, limits.a_omega_brake, limits.dt]
    return np.array(vals, dtype=float)


@njit(cache=True)
def _task_reward(d_t, d_n, cause, P):
    r = -P[I_KSTEP] + P[I_KD] * (d_t - d_n)
    if cause == 2:
        r -= P[I_KTO] * d_n
    return r


@njit(cache=True)
def _shape_terms(d_t, d_n, e_t, e_n, v_n, w_t, w_n, a_v, a_w, s0, P):
    ae_t = abs(e_t)
    ae_n = abs(e_n)
    align = 0.5 * (1.0 + math.cos(ae_n))
    r_theta = P[I_KTH] * (ae_t - ae_n)
    r_omega = -P[I_KW] * align * w_n * w_n
    c = max(0.0, math.cos(e_n))
    r_vpar = P[I_KV] * v_n * c * c
    s = math.sin(e_n)
    r_vperp = -P[I_KLAT] * v_n * v_n * s * s
    r_acc = -P[I_KAV] * a_v * a_v - P[I_KAW] * (0.5 + 0.5 * align) * a_w * a_w
    r_hyst = 0.0
    if ae_n < P[I_EDB]:
        ex = max(0.0, abs(w_n) - P[I_WDB])
        r_hyst = -P[I_KWS] * ex * ex
    r_goal = 0.0
    if d_n <= P[I_GTOL]:
        r_goal = P[I_KD] * d_t
    r_flip = 0.0
    if (w_t > SIGN_EPS and w_n < -SIGN_EPS) or (w_t < -SIGN_EPS and w_n > SIGN_EPS):
        r_flip = -P[I_KFLIP]
    de = ae_n - ae_t
    r_inc = -P[I_KINC] * max(0.0, de)
    r_stall = 0.0
    if abs(de) < P[I_DEHEAD]:
        r_stall = -P[I_KSTALL] * ae_n
    theta_stop = w_n * w_n / (2.0 * P[I_AWB])
    excess = max(0.0, theta_stop - (ae_n + P[I_EPAD]))
    r_stop = -P[I_KSTOP] * excess * excess
    wrong = max(0.0, -s0 * w_n - P[I_WDB])
    r_sign = 0.0
    if wrong > 0.0:
        r_sign = -P[I_KSIGN] * wrong * wrong
    return (r_theta, r_omega, r_vpar, r_vperp, r_acc, r_hyst, r_goal,
            r_flip, r_inc, r_stall, r_stop, r_sign)


@njit(cache=True)
def _shape_reward(d_t, d_n, e_t, e_n, v_n, w_t, w_n, a_v, a_w, s0, P):
    t = _shape_terms(d_t, d_n, e_t, e_n, v_n, w_t, w_n, a_v, a_w, s0, P)
    return (t[0] + t[1] + t[2] + t[3] + t[4] + t[5] + t[6]
            + t[7] + t[8] + t[9] + t[10] + t[11])


@dataclass(frozen=True)
class Transition:
    """Continuous quantities of one planner step needed by the shaping terms."""

    d_t: float
    d_next: float
    e_t: float
    e_next: float
    v_next: float
    omega_t: float
    omega_next: float
    a_v: float
    a_omega: float
    e0_sign: float


def task_reward(d_t: float, d_next: float, terminal_cause: TerminalCause | str, d_T: float,
                w: RewardWeights) -> float:
    """Step cost plus distance progress, plus the timeout penalty on timeout only.

    ``d_T`` is the distance at the terminal step; it only matters on timeout.
    """
    cause = TerminalCause(terminal_cause)
    r = -w.k_step + w.k_d * (d_t - d_next)
    if cause is TerminalCause.TIMEOUT:
        r -= w.k_timeout * d_T
    return r


def shape_terms(tr: Transition, w: RewardWeights, limits: MotionLimits,
                goal_tol: float = 0.10) -> dict[str, float]:
    P = pack_params(w, limits, goal_tol)
    vals = _shape_terms(tr.d_t, tr.d_next, tr.e_t, tr.e_next, tr.v_next, tr.omega_t,
                        tr.omega_next, tr.a_v, tr.a_omega, tr.e0_sign, P)
    return dict(zip(SHAPE_TERM_NAMES, (float(v) for v in vals)))


def shape_reward(tr: Transition, w: RewardWeights, limits: MotionLimits,
                 goal_tol: float = 0.10) -> float:
    P = pack_params(w, limits, goal_tol)
    return float(_shape_reward(tr.d_t, tr.d_next, tr.e_t, tr.e_next, tr.v_next, tr.omega_t,
                               tr.omega_next, tr.a_v, tr.a_omega, tr.e0_sign, P))


def potential(d: float, e: float, w: RewardWeights) -> float:
    return w.k_d * d + w.k_theta * abs(e)
