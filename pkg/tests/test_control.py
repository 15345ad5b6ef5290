import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalreach.actuator import Disturbance, DisturbanceSpec, PlantParams
from goalreach.control import (ControllerGains, SafetyZone, VehicleGeometry, WheelLoopState,
                               allocate_wheel_refs, barrier_gain, body_velocity, control_step,
                               lyapunov_diagnostics, lyapunov_value, stability_constants,
                               update_safety_zone, wheel_loop_trajectory)

G = ControllerGains()
GEOM = VehicleGeometry()
P = PlantParams()


def test_allocation_examples():
    assert allocate_wheel_refs(0.2, 0.0, GEOM) == pytest.approx([0.2] * 4)
    assert allocate_wheel_refs(0.0, 0.1, GEOM) == pytest.approx([-0.1, -0.1, 0.1, 0.1])
    assert allocate_wheel_refs(0.2, 0.1, GEOM) == pytest.approx([0.1, 0.1, 0.3, 0.3])


@given(st.floats(-0.3, 0.3), st.floats(-0.2, 0.2), st.floats(0.5, 4.0))
def test_allocation_inverts(v, w, track):
    geom = VehicleGeometry(track_width=track)
    v2, w2 = body_velocity(allocate_wheel_refs(v, w, geom), geom)
    assert v2 == pytest.approx(v, abs=1e-15) and w2 == pytest.approx(w, abs=1e-15)


def test_safety_zone_examples():
    z = update_safety_zone((0.0, 0.0), (4.0, 3.0), 1.0)
    assert (z.O, z.E) == pytest.approx((3.5, 2.5))
    assert update_safety_zone((4.0, 3.0), (4.0, 3.0), 1.0).E == pytest.approx(2.5)
    assert update_safety_zone((2.0, 1.5), (4.0, 3.0), 1.0).E == 0.0
    shifted = update_safety_zone((12.0, 13.0), (14.0, 13.0), 1.0, origin=(10.0, 10.0))
    assert (shifted.E, shifted.O) == pytest.approx((1.5, 3.5))
    with pytest.raises(ValueError):
        SafetyZone(0.0, 0.0, 0.0)


def test_barrier_gain_examples():
    assert barrier_gain(SafetyZone(0.0, 3.0, 1.0)) == 0.0
    assert barrier_gain(SafetyZone(3.0 * (1 - 1 / math.e), 3.0, 1.0)) == pytest.approx(1.0)
    assert math.isinf(barrier_gain(SafetyZone(3.0, 3.0, 1.0)))
    assert math.isinf(barrier_gain(SafetyZone(4.0, 3.0, 1.0)))


def test_barrier_gain_strictly_increasing():
    Es = np.linspace(0.0, 2.999, 500)
    L = [barrier_gain(SafetyZone(E, 3.0, 1.0)) for E in Es]
    assert np.all(np.diff(L) > 0)


def test_control_step_examples():
    zone0 = SafetyZone(0.0, 3.0, 1.0)
    u, st1 = control_step(WheelLoopState(chi_hat=0.5), 0.2, 0.2, 1.25, zone0, G, 0.05)
    assert u == 1.25 and st1.chi_hat == pytest.approx(0.5 * (1 - 0.2 * 0.05))
    u, _ = control_step(WheelLoopState(), 0.3, 0.2, 1.25, zone0, G, 0.05)
    assert u == pytest.approx(1.25 - 0.05)


def test_control_step_barrier_violation_is_a_signal():
    u, st1 = control_step(WheelLoopState(chi_hat=0.5), 0.3, 0.2, 1.0, SafetyZone(3.0, 3.0, 1.0), G, 0.05)
    assert st1.barrier_violation and math.isfinite(u)
    assert st1.chi_hat < 0.5
    with pytest.raises(ValueError):
        control_step(WheelLoopState(), 0.0, 0.0, 0.0, SafetyZone(0.0, 3.0, 1.0), G, 0.0)


def test_adaptive_gain_decays_like_exponential():
    zone = SafetyZone(1.0, 3.0, 1.0)
    st1 = WheelLoopState(chi_hat=1.0)
    dt = 0.001
    for _ in range(5000):
        _, st1 = control_step(st1, 0.1, 0.1, 0.0, zone, G, dt)
    assert st1.chi_hat == pytest.approx(math.exp(-0.2 * 5.0), rel=1e-3)


def test_feedback_is_linear_in_error_at_zone_centre():
    zone = SafetyZone(0.0, 3.0, 1.0)
    u1, _ = control_step(WheelLoopState(), 0.23, 0.2, 0.0, zone, G, 0.05)
    u2, _ = control_step(WheelLoopState(), 0.26, 0.2, 0.0, zone, G, 0.05)
    assert u2 == pytest.approx(2 * u1, rel=1e-12)


@given(st.floats(0.0, 2.0), st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=40),
       st.floats(0.0, 2.9))
def test_adaptive_gain_stays_non_negative(chi0, errors, E):
    zone = SafetyZone(E, 3.0, 1.0)
    state = WheelLoopState(chi_hat=chi0)
    for e in errors:
        _, state = control_step(state, e, 0.0, 0.0, zone, G, 0.05)
        assert state.chi_hat >= 0.0


def test_stability_constants_and_zero_trajectory():
    sc = stability_constants(P.A, G, 0.01)
    assert sc.mu == pytest.approx(min((1.0 - 0.5) / P.A, 0.2))
    assert sc.ell == pytest.approx(4 * 0.01 ** 2 / (2 * 0.5))
    assert np.all(lyapunov_value(np.zeros((5, 4)), np.zeros((5, 4)), P.A) == 0.0)
    with pytest.raises(ValueError):
        ControllerGains(epsilon=1.0, kappa=1.0)


def _ref(n=1200, level=0.2):
    return np.full((n, 4), level)


def test_undisturbed_loop_respects_exponential_envelope():
    zone = SafetyZone(1.0, 3.0, 1.0)
    t, e, chi = wheel_loop_trajectory(_ref(), [0.05, -0.04, 0.03, -0.02], P, G, zone)
    rep = lyapunov_diagnostics(t, e, chi, P.A, G)
    assert rep.envelope_ok
    assert np.all(rep.V <= rep.envelope)
    assert rep.fit_r2 >= 0.99


def test_disturbed_loop_stays_under_ultimate_bound():
    zone = SafetyZone(1.0, 3.0, 1.0)
    d_star = 0.25 * 0.05
    dist = Disturbance(DisturbanceSpec("stochastic", d_star, 4, tau=0.5), 4, P.v_s)
    t, e, chi = wheel_loop_trajectory(_ref(2400), 0.05, P, G, zone, disturbance=dist)
    rep = lyapunov_diagnostics(t, e, chi, P.A, G, d_star)
    assert rep.envelope_ok
    after = t >= 5.0 / rep.mu
    assert np.all(rep.V[after] <= 1.1 * rep.ell / rep.mu)
