import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalreach.actuator import (ActuatorDataset, Disturbance, DisturbanceSpec, PlantParams, friction,
                                friction_slope, generate_dataset, ideal_inverse, peak_friction,
                                range_coverage, step_plant)

P = PlantParams()
LINEAR = PlantParams(c1=0.2, c2=0.0, c3=0.0)


def test_ideal_inverse_holds_constant_reference():
    for v_d in (-0.1, 0.0, 0.07, 0.3):
        u = ideal_inverse(np.full(50, v_d), P)
        v = v_d
        for k in range(50):
            v = float(step_plant(v, u[k], P))
        assert v == pytest.approx(v_d, abs=1e-12)


def test_zero_input_frictionless_plant_is_constant():
    p = PlantParams(c1=0.0, c2=0.0, c3=0.0)
    assert float(step_plant(0.123, 0.0, p, 0.0, 1.0)) == 0.123


def test_constant_disturbance_offset_on_linear_plant():
    # A dv/dt = u - c v + d with u = c v_d settles at v_d + d / c
    v_d, d_star = 0.2, 0.01
    u = float(ideal_inverse([v_d, v_d], LINEAR)[0])
    v = v_d
    for _ in range(4000):
        v = float(step_plant(v, u, LINEAR, d_star))
    assert v - v_d == pytest.approx(-d_star / float(friction_slope(v_d, LINEAR)), rel=1e-9)


def test_ideal_inverse_linear_and_zero_examples():
    assert ideal_inverse(np.full(5, 0.3), LINEAR) == pytest.approx(np.full(5, 0.2 * 0.3))
    assert np.all(ideal_inverse(np.zeros(7), P) == 0.0)


def test_ideal_inverse_ramp_contains_inertia_term():
    dt = 0.05
    v_d = 0.01 + 0.02 * np.arange(20) * dt
    u = ideal_inverse(v_d, P, dt)
    vdot = np.diff(v_d) / dt
    assert u[:-1] + friction(v_d[:-1], P) == pytest.approx(P.A * vdot, abs=1e-12)


def test_tracking_error_shrinks_with_dt():
    errs = []
    for dt in (0.05, 0.025, 0.0125):
        t = np.arange(0.0, 10.0, dt)
        v_d = 0.1 + 0.05 * np.sin(0.5 * t)
        u = ideal_inverse(v_d, P, dt)
        v, err = v_d[0], 0.0
        for k in range(t.size - 1):
            v = float(step_plant(v, u[k], P, 0.0, dt))
            err = max(err, abs(v - v_d[k + 1]))
        errs.append(err)
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.25)  # first order in dt


@given(st.sampled_from(["constant-ratio", "stochastic"]), st.floats(0.0, 0.05), st.integers(0, 2**31),
       st.lists(st.floats(-0.4, 0.4), min_size=1, max_size=50))
def test_disturbance_never_exceeds_bound(model, d_star, seed, refs):
    dist = Disturbance(DisturbanceSpec(model, d_star, seed, tau=0.2), n_wheels=4)
    for r in refs:
        assert np.all(np.abs(dist.sample(np.full(4, r), 0.05)) <= d_star)


def test_plant_state_finite_for_bounded_inputs():
    rng = np.random.default_rng(0)
    v = np.zeros(4)
    for _ in range(5000):
        v = step_plant(v, rng.uniform(-1, 1, 4), P, rng.uniform(-0.05, 0.05, 4))
        assert np.all(np.isfinite(v))


def test_terrain_disturbance_bounds():
    peak = peak_friction(P)
    assert DisturbanceSpec.for_terrain("asphalt", P).d_star == pytest.approx(0.05 * peak)
    assert DisturbanceSpec.for_terrain("soft", P).d_star == pytest.approx(0.25 * peak)
    with pytest.raises(ValueError):
        DisturbanceSpec.for_terrain("ice", P)


def test_ramp_dataset_covers_range():
    ds = generate_dataset("ramps", P, 120.0, rng_seed=0, period=60.0)
    assert range_coverage(ds.v, P.v_lo, P.v_hi, 0.01) >= 0.95
    assert ds.meta["excitation"] == "ramps" and ds.meta["rng_seed"] == 0


@pytest.mark.parametrize("kind", ["chirps", "random-steps"])
def test_other_excitations_stay_in_range(kind):
    ds = generate_dataset(kind, P, 300.0, rng_seed=1)
    assert ds.v.min() >= P.v_lo - 1e-3 and ds.v.max() <= P.v_hi + 1e-3


def test_dataset_rejections():
    with pytest.raises(ValueError):
        generate_dataset("ramps", P, 0.0)
    with pytest.raises(ValueError):
        generate_dataset("ramps", P, 100.0, v_range=(-0.5, 0.3))
    with pytest.raises(ValueError):
        generate_dataset("sines", P, 100.0)
    with pytest.raises(ValueError):
        ActuatorDataset(np.zeros(2), np.zeros(2), 0.05)
    with pytest.raises(ValueError):
        ActuatorDataset(np.array([0, 1, np.nan]), np.zeros(3), 0.05)


def test_dataset_is_deterministic_and_round_trips(tmp_path):
    a = generate_dataset("random-steps", P, 60.0, rng_seed=7,
                         disturbance=DisturbanceSpec("stochastic", 0.01, 3))
    b = generate_dataset("random-steps", P, 60.0, rng_seed=7,
                         disturbance=DisturbanceSpec("stochastic", 0.01, 3))
    assert a.v.tobytes() == b.v.tobytes() and a.u.tobytes() == b.u.tobytes()
    a.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "k,v,u"
    back = ActuatorDataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.v, a.v) and np.array_equal(back.u, a.u)
    assert back.dt == a.dt and back.meta["excitation"] == "random-steps"


def test_plant_param_validation():
    with pytest.raises(ValueError):
        PlantParams(A=0.0)
    with pytest.raises(ValueError):
        PlantParams(v_lo=0.5, v_hi=0.1)
    assert math.isfinite(peak_friction(P)) and peak_friction(P) > 0
