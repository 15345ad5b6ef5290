import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalreach.pose import (GroundTruthPose, NoiseSpec, NoisyPose, PoseSample, ReplayPose,
                            StreamExhausted, make_provider, read_pose_log, write_pose_log)

TRUTH = [PoseSample(k * 0.05, 0.1 * k, -0.02 * k, 0.3 * k - 2.0) for k in range(100)]


def test_zero_noise_equals_ground_truth():
    gt, noisy = GroundTruthPose(), NoisyPose(NoiseSpec())
    assert all(gt.sample(p.t, p) == noisy.sample(p.t, p) for p in TRUTH)


def test_noise_is_seeded():
    spec = NoiseSpec(0.05, 0.01, 42)
    a = [NoisyPose(spec).sample(p.t, p) for p in TRUTH[:1]]
    pa, pb = NoisyPose(spec), NoisyPose(spec)
    assert [pa.sample(p.t, p) for p in TRUTH] == [pb.sample(p.t, p) for p in TRUTH]
    assert a[0] != TRUTH[0]
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)


@given(st.floats(-1e3, 1e3), st.floats(0, 1.0), st.integers(0, 100))
def test_heading_always_wrapped(theta, sigma, seed):
    truth = PoseSample(0.0, 0.0, 0.0, theta)
    for prov in (GroundTruthPose(), NoisyPose(NoiseSpec(0.0, sigma, seed))):
        th = prov.sample(0.0, truth).theta
        assert -math.pi <= th < math.pi


def test_replay_round_trip_is_bit_exact(tmp_path):
    path = tmp_path / "pose.csv"
    rng = np.random.default_rng(0)
    samples = [PoseSample(k * 0.05, *rng.normal(size=2), float(rng.uniform(-math.pi, math.pi)))
               for k in range(300)]
    write_pose_log(path, samples)
    assert read_pose_log(path) == samples
    rp = make_provider("replay", log_path=path)
    assert [rp.sample(s.t) for s in samples] == samples


def test_replay_zero_order_hold_and_exhaustion():
    rp = ReplayPose(TRUTH[:10])
    assert rp.sample(0.07) == PoseSample(0.07, TRUTH[1].x, TRUTH[1].y, TRUTH[1].theta)
    with pytest.raises(StreamExhausted):
        rp.sample(1.0)
    with pytest.raises(StreamExhausted):
        rp.sample(-0.1)
    with pytest.raises(ValueError):
        ReplayPose([TRUTH[1], TRUTH[0]])
    with pytest.raises(ValueError):
        make_provider("lidar")
    with pytest.raises(ValueError):
        make_provider("replay")
