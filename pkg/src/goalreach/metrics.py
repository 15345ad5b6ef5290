"""Goal-sequence accuracy and wheel-speed step-response metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


def rmse(errors) -> float:
    """Root mean square of Euclidean final-position errors; 0 for an empty list."""
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        return 0.0
    return float(math.sqrt(np.mean(e ** 2)))


def position_errors(targets, finals) -> np.ndarray:
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    f = np.asarray(finals, dtype=float).reshape(-1, 2)
    return np.hypot(*(f - t).T)


@dataclass(frozen=True)
class StepMetrics:
    peak_time: float
    overshoot: float
    settling_time: float
    steady_state_error: float

    def to_dict(self) -> dict:
        return asdict(self)


def step_metrics(t, y, ref: float, t_step: float = 0.0, band: float = 0.02) -> StepMetrics:
    """Metrics of one constant-reference segment starting at ``t_step``.

    Peak time is measured from the step to the maximum response; overshoot is
    the largest excess over the reference (m/s, zero if never exceeded);
    settling time is the last entry into the +-``band`` relative band;
    steady-state error is the mean |y - ref| over the final 10 % of the segment.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = t >= t_step
    if m.sum() < 2:
        raise ValueError("segment needs at least two samples after the step")
    ts, ys = t[m] - t_step, y[m]
    k_peak = int(np.argmax(ys))
    overshoot = max(0.0, float(ys[k_peak] - ref))
    tol = band * abs(ref) if ref != 0 else band
    outside = np.nonzero(np.abs(ys - ref) > tol)[0]
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] == ys.size - 1:
        settling = math.inf
    else:
        settling = float(ts[outside[-1] + 1])
    tail = ys[int(math.floor(0.9 * ys.size)):]
    sse = float(np.mean(np.abs(tail - ref)))
    return StepMetrics(float(ts[k_peak]), overshoot, settling, sse)


def constant_segments(ref, min_len: int = 2, atol: float = 1e-12) -> list[tuple[int, int]]:
    """Half-open index ranges [a, b) over which ``ref`` stays constant, at least ``min_len`` long."""
    r = np.asarray(ref, dtype=float)
    if r.size == 0:
        return []
    breaks = np.nonzero(np.abs(np.diff(r)) > atol)[0] + 1
    edges = np.concatenate([[0], breaks, [r.size]])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b - a >= min_len]


def tracking_metrics(t, ref, y, min_duration: float = 1.0, band: float = 0.02) -> StepMetrics | None:
    """Step metrics on the first non-zero constant-reference segment.

    The segment starts at the sample where the reference switched to its
    value and must last ``min_duration`` seconds; returns None when no such
    segment exists.
    """
    t = np.asarray(t, dtype=float)
    ref = np.asarray(ref, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return None
    dt = float(np.median(np.diff(t)))
    min_len = max(2, int(math.ceil(min_duration / dt)))
    for a, b in constant_segments(ref, min_len):
        if ref[a] != 0.0:
            return step_metrics(t[a:b], y[a:b], float(ref[a]), float(t[a]), band)
    return None


def segment_steady_state_errors(ref, y, min_len: int = 20) -> list[float]:
    """Mean |y - ref| over the final 10 % of every constant-reference segment."""
    ref = np.asarray(ref, dtype=float)
    y = np.asarray(y, dtype=float)
    out = []
    for a, b in constant_segments(ref, min_len):
        k = a + int(math.floor(0.9 * (b - a)))
        out.append(float(np.mean(np.abs(y[k:b] - ref[k:b]))))
    return out
