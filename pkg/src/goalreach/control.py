"""Per-wheel robust adaptive control with a logarithmic safety barrier.

Control law and adaptive law for wheel ``i``::

    u_i     = u_IDM,i - eps_i e_i / 2 - gamma_i e_i L chi_i
    dchi_i  = -delta_i chi_i + gamma_i e_i^2 L
    L       = log^2(O / (O - E))

with ``e_i = v_i - v_d,i`` and the zone quantities ``E`` (distance of the robot
from the start/goal midpoint) and ``O`` (safety radius).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ControllerGains:
    epsilon: float = 1.0
    gamma: float = 0.01
    delta: float = 0.2
    kappa: float | None = None

    def __post_init__(self):
        if self.kappa is None:
            object.__setattr__(self, "kappa", 0.5 * self.epsilon)
        if min(self.epsilon, self.gamma, self.delta, self.kappa) <= 0:
            raise ValueError("controller gains must be positive")
        if not self.epsilon > self.kappa:
            raise ValueError("epsilon must exceed kappa")


@dataclass(frozen=True)
class VehicleGeometry:
    track_width: float = 2.0
    wheel_radius: float = 0.4

    def __post_init__(self):
        if self.track_width <= 0 or self.wheel_radius <= 0:
            raise ValueError("track width and wheel radius must be positive")


# wheel order: front-left, rear-left, front-right, rear-right
LEFT = np.array([True, True, False, False])


def allocate_wheel_refs(v: float, omega: float, geom: VehicleGeometry) -> np.ndarray:
    """Skid-steer split of body (v, omega) into the four wheel-speed references."""
    half = 0.5 * omega * geom.track_width
    return np.array([v - half, v - half, v + half, v + half])


def body_velocity(wheel_speeds, geom: VehicleGeometry) -> tuple[float, float]:
    """Inverse of the allocation: mean side speeds give v, their difference omega."""
    w = np.asarray(wheel_speeds, dtype=float)
    left = w[LEFT].mean()
    right = w[~LEFT].mean()
    return float(0.5 * (left + right)), float((right - left) / geom.track_width)


@dataclass(frozen=True)
class SafetyZone:
    """Robot zone E and safety radius O, in the frame reset at the segment start."""

    E: float
    O: float
    zeta: float
    origin: tuple[float, float] = (0.0, 0.0)
    goal: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.O > 0:
            raise ValueError("safety radius O must be positive")

    @property
    def violated(self) -> bool:
        return not self.E < self.O

    @property
    def ratio(self) -> float:
        return self.E / self.O


def update_safety_zone(pose_xy, goal_xy, zeta: float, origin=(0.0, 0.0)) -> SafetyZone:
    """Zone of a segment from ``origin`` to ``goal_xy``.

    Coordinates are shifted so the segment starts at (0, 0); E is the distance
    from the pose to the midpoint and O the midpoint distance plus ``zeta``.
    """
    gx, gy = goal_xy[0] - origin[0], goal_xy[1] - origin[1]
    px, py = pose_xy[0] - origin[0], pose_xy[1] - origin[1]
    mx, my = 0.5 * gx, 0.5 * gy
    E = math.hypot(px - mx, py - my)
    O = zeta + math.hypot(mx, my)
    return SafetyZone(E, O, zeta, (float(origin[0]), float(origin[1])),
                      (float(goal_xy[0]), float(goal_xy[1])))


def barrier_gain(zone: SafetyZone) -> float:
    """log^2(O / (O - E)); returns ``inf`` as the violation signal when E >= O."""
    if zone.violated:
        return math.inf
    return math.log(zone.O / (zone.O - zone.E)) ** 2


@dataclass(frozen=True)
class WheelLoopState:
    e: float = 0.0
    chi_hat: float = 0.1
    u: float = 0.0
    barrier_violation: bool = False

    def __post_init__(self):
        if self.chi_hat < 0:
            raise ValueError("adaptive gain must be non-negative")


def control_law(e, u_idm, L: float, chi_hat, gains: ControllerGains):
    """u = u_IDM - eps e / 2 - gamma e L chi (works elementwise on arrays)."""
    return u_idm - 0.5 * gains.epsilon * e - gains.gamma * e * L * chi_hat


def adapt(chi_hat, e, L: float, gains: ControllerGains, dt: float):
    """Explicit-Euler step of the adaptive law (non-negative for delta*dt < 1)."""
    return chi_hat + dt * (-gains.delta * chi_hat + gains.gamma * e * e * L)


def control_step(loop: WheelLoopState, v_meas: float, v_ref: float, u_idm: float,
                 zone: SafetyZone, gains: ControllerGains, dt: float) -> tuple[float, WheelLoopState]:
    """One control tick for one wheel.

    A violated zone does not raise: the barrier term is suspended for the tick,
    the adaptive gain only decays, and the returned state carries the
    violation flag for the supervisor.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    L = barrier_gain(zone)
    violated = math.isinf(L)
    if violated:
        L = 0.0
    e = float(v_meas - v_ref)
    u = float(control_law(e, u_idm, L, loop.chi_hat, gains))
    chi = float(adapt(loop.chi_hat, e, L, gains, dt))
    return u, WheelLoopState(e, max(chi, 0.0), u, violated)


@dataclass(frozen=True)
class StabilityConstants:
    mu: float
    ell: float

    @property
    def ultimate_bound(self) -> float:
        return self.ell / self.mu


def stability_constants(A, gains: ControllerGains | list[ControllerGains], d_star) -> StabilityConstants:
    """Decay rate and offset of the dissipation inequality dV/dt <= -mu V + ell.

    mu = min_i min(A_i^-1 (eps_i - kappa_i), delta_i) and
    ell = sum_i d*_i^2 / (2 kappa_i), summed over all four wheels.
    """
    A = np.broadcast_to(np.asarray(A, dtype=float), (4,))
    d_star = np.broadcast_to(np.asarray(d_star, dtype=float), (4,))
    gl = gains if isinstance(gains, (list, tuple)) else [gains] * 4
    mu = min(min((g.epsilon - g.kappa) / a, g.delta) for g, a in zip(gl, A))
    ell = float(sum(d * d / (2.0 * g.kappa) for g, d in zip(gl, d_star)))
    return StabilityConstants(float(mu), ell)


def lyapunov_value(e, chi_hat, A) -> np.ndarray:
    """V = sum_i A_i e_i^2 / 2 + chi_i^2 / 2 for each sample (rows = time)."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    chi = np.atleast_2d(np.asarray(chi_hat, dtype=float))
    A = np.asarray(A, dtype=float)
    return np.sum(0.5 * A * e ** 2 + 0.5 * chi ** 2, axis=1)


@dataclass
class LyapunovReport:
    t: np.ndarray
    V: np.ndarray
    V_dot: np.ndarray
    mu: float
    ell: float
    envelope: np.ndarray
    envelope_ok: bool
    dissipation_ok: np.ndarray
    fitted_mu: float
    fitted_ell: float
    fit_r2: float
    meta: dict = field(default_factory=dict)


def lyapunov_diagnostics(t, e, chi_hat, A, gains, d_star=0.0, rtol: float = 1e-9) -> LyapunovReport:
    """Evaluate V along a sampled trajectory of all four loops.

    The envelope V(0) exp(-mu t) + ell / mu is checked at every sample. The
    fitted rate comes from a least-squares line through log(V - V_inf) over
    the decaying part, V_inf being the tail mean.
    """
    t = np.asarray(t, dtype=float)
    V = lyapunov_value(e, chi_hat, A)
    sc = stability_constants(A, gains, d_star)
    V_dot = np.gradient(V, t) if V.size > 1 else np.zeros_like(V)
    envelope = V[0] * np.exp(-sc.mu * (t - t[0])) + sc.ultimate_bound
    ok = bool(np.all(V <= envelope * (1.0 + rtol) + 1e-300))
    dissip = V_dot <= -sc.mu * V + sc.ell + rtol * np.abs(V_dot)

    tail = V[int(0.9 * V.size):]
    v_inf = float(tail.mean()) if tail.size else 0.0
    excess = V - v_inf
    mask = excess > max(1e-12, 1e-6 * V[0])
    mask &= np.cumprod(mask).astype(bool)  # leading contiguous decay segment only
    fitted_mu, fit_r2 = math.nan, math.nan
    if mask.sum() >= 3:
        tt, yy = t[mask], np.log(excess[mask])
        slope, icpt = np.polyfit(tt, yy, 1)
        pred = slope * tt + icpt
        ss_res = float(np.sum((yy - pred) ** 2))
        ss_tot = float(np.sum((yy - yy.mean()) ** 2))
        fitted_mu = float(-slope)
        fit_r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    fitted_ell = fitted_mu * v_inf if math.isfinite(fitted_mu) else math.nan
    return LyapunovReport(t, V, V_dot, sc.mu, sc.ell, envelope, ok, dissip, fitted_mu,
                          fitted_ell, fit_r2)


def wheel_loop_trajectory(v_ref, e0, plant, gains: ControllerGains, zone: SafetyZone,
                          dt: float = 0.05, chi0: float = 0.1, disturbance=None):
    """Closed loop of the four wheels around the exact plant inverse (a white-box instrument).

    ``v_ref`` has one row of four references per tick; the wheels start at
    ``v_ref[0] + e0``. ``disturbance`` is an optional object with a
    ``sample(v_ref, dt)`` method. Returns (t, e, chi_hat), each with one row per tick.
    """
    from .actuator import ideal_inverse, step_plant

    R = np.asarray(v_ref, dtype=float)
    if R.ndim != 2 or R.shape[1] != 4:
        raise ValueError("v_ref must have shape (ticks, 4)")
    L = barrier_gain(zone)
    if math.isinf(L):
        raise ValueError("the zone is violated")
    u_idm = np.column_stack([ideal_inverse(R[:, i], plant, dt) for i in range(4)])
    n = R.shape[0]
    v = R[0] + np.broadcast_to(np.asarray(e0, dtype=float), (4,))
    chi = np.full(4, float(chi0))
    E, X = np.zeros((n, 4)), np.zeros((n, 4))
    for k in range(n):
        e = v - R[k]
        E[k], X[k] = e, chi
        u = control_law(e, u_idm[k], L, chi, gains)
        chi = np.maximum(adapt(chi, e, L, gains, dt), 0.0)
        d = 0.0 if disturbance is None else disturbance.sample(R[k], dt)
        v = step_plant(v, u, plant, d, dt)
    return np.arange(n) * dt, E, X
