"""Pose sources standing in for visual SLAM: ground truth, noisy truth, log replay."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import wrap_pi


@dataclass(frozen=True)
class PoseSample:
    t: float
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class NoiseSpec:
    sigma_xy: float = 0.0
    sigma_theta: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma_xy < 0 or self.sigma_theta < 0:
            raise ValueError("noise standard deviations must be non-negative")


class StreamExhausted(Exception):
    """Raised when a replayed log is sampled past its last timestamp."""


class GroundTruthPose:
    mode = "truth"

    def sample(self, t: float, truth: PoseSample) -> PoseSample:
        return PoseSample(t, truth.x, truth.y, wrap_pi(truth.theta))


class NoisyPose:
    """Ground truth plus seeded Gaussian noise on position and heading."""

    mode = "noisy"

    def __init__(self, spec: NoiseSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.rng_seed)

    def sample(self, t: float, truth: PoseSample) -> PoseSample:
        s = self.spec
        if s.sigma_xy == 0.0 and s.sigma_theta == 0.0:
            return PoseSample(t, truth.x, truth.y, wrap_pi(truth.theta))
        n = self.rng.standard_normal(3)
        return PoseSample(t, truth.x + s.sigma_xy * n[0], truth.y + s.sigma_xy * n[1],
                          wrap_pi(truth.theta + s.sigma_theta * n[2]))


class ReplayPose:
    """Zero-order hold over a recorded (t, x, y, theta) log."""

    mode = "replay"

    def __init__(self, samples: list[PoseSample]):
        if not samples:
            raise ValueError("empty pose log")
        ts = np.array([s.t for s in samples])
        if np.any(np.diff(ts) <= 0):
            raise ValueError("pose log timestamps must be strictly increasing")
        self.samples = samples
        self.times = ts

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReplayPose":
        return cls(read_pose_log(path))

    def sample(self, t: float, truth: PoseSample | None = None) -> PoseSample:
        if t < self.times[0] - 1e-12:
            raise StreamExhausted(f"t = {t} precedes the log start {self.times[0]}")
        # a small tolerance absorbs accumulated float error in tick times
        if t > self.times[-1] + 1e-9:
            raise StreamExhausted(f"t = {t} is past the log end {self.times[-1]}")
        k = int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1
        s = self.samples[max(k, 0)]
        return PoseSample(t, s.x, s.y, s.theta)


def write_pose_log(path: str | Path, samples: list[PoseSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "theta"])
        for s in samples:
            w.writerow([repr(float(v)) for v in (s.t, s.x, s.y, s.theta)])


def read_pose_log(path: str | Path) -> list[PoseSample]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [PoseSample(float(r["t"]), float(r["x"]), float(r["y"]), float(r["theta"])) for r in rows]


def make_provider(mode: str, noise: NoiseSpec | None = None, log_path: str | Path | None = None):
    if mode == "truth":
        return GroundTruthPose()
    if mode == "noisy":
        return NoisyPose(noise or NoiseSpec())
    if mode == "replay":
        if log_path is None:
            raise ValueError("replay mode needs a pose log path")
        return ReplayPose.from_csv(log_path)
    raise ValueError(f"unknown pose provider mode {mode!r}")
