import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cchtrim import airframe
from cchtrim.airframe import (PROP_FRAME, body_velocity, elevator_control_efficiency,
                              elevator_effectiveness, empennage_loads, fuselage_loads,
                              propeller_loads, total_loads, zero_thrust_pitch)
from cchtrim.core import ControlVector, FlightCondition


def test_frames_are_rotations(cfg):
    for m in (airframe.hub_frame(cfg), PROP_FRAME):
        assert np.allclose(m @ m.T, np.eye(3))
    # pusher thrust axis points forward along body x
    assert np.allclose(np.array([0.0, 0.0, -1.0]) @ PROP_FRAME, [1.0, 0.0, 0.0])


@pytest.mark.parametrize("U", [20.0, 60.0, 100.0])
def test_zero_thrust_pitch_gives_no_thrust(cfg, U):
    vp = body_velocity(np.array([U]), np.array([0.0]), np.array([0.0])) @ PROP_FRAME.T
    th = float(zero_thrust_pitch(cfg, vp.T)[0])
    loads = propeller_loads(th, FlightCondition(U), cfg)
    assert abs(loads.force[0]) < 50.0


def test_propeller_thrust_monotone_in_pitch(cfg):
    cond = FlightCondition(60.0)
    th0 = float(zero_thrust_pitch(cfg, (np.array([0.0]), np.array([0.0]), np.array([-60.0])))[0])
    pitches = np.linspace(th0, th0 + 14.0, 8)
    thrust = [propeller_loads(p, cond, cfg).force[0] for p in pitches]
    assert np.all(np.diff(thrust) > 0)


def test_propeller_pitch_range_enforced(cfg):
    with pytest.raises(ValueError):
        propeller_loads(75.0, FlightCondition(50.0), cfg)


def test_fuselage_no_load_in_still_air(cfg):
    loads = fuselage_loads(FlightCondition(0.0), cfg)
    assert np.all(loads.force == 0) and np.all(loads.moment == 0)


def test_fuselage_drag_oracle(cfg):
    c = cfg.replace(**{"calibration.fuselage_flat_plate_area": 2.3})
    loads = fuselage_loads(FlightCondition(100.0), c)
    assert -loads.force[0] == pytest.approx(0.5 * 1.225 * 1e4 * 2.3, rel=1e-12)
    assert -loads.force[0] == pytest.approx(14.09e3, abs=5.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(5.0, 100.0), st.floats(-10.0, 10.0))
def test_fuselage_loads_scale_with_dynamic_pressure(cfg, U, pitch):
    a = fuselage_loads(FlightCondition(U), cfg, pitch=pitch)
    b = fuselage_loads(FlightCondition(U / 2), cfg, pitch=pitch)
    assert np.allclose(a.force, 4 * b.force, rtol=1e-10, atol=1e-9)


def test_elevator_ramp(cfg):
    lo, hi = cfg.calibration.elevator_ramp
    assert elevator_effectiveness(lo, cfg) == 0.0
    assert elevator_effectiveness(hi, cfg) == 1.0
    assert elevator_effectiveness(0.5 * (lo + hi), cfg) == pytest.approx(0.5)
    eta = elevator_effectiveness(np.linspace(0, 100, 101), cfg)
    assert np.all(np.diff(eta) >= 0)


def test_elevator_has_no_effect_at_30(cfg):
    cond = FlightCondition(30.0)
    base = empennage_loads(cond, cfg, 0.0)[0]
    for de in (-10.0, -3.0, 5.0):
        hs = empennage_loads(cond, cfg, de)[0]
        assert np.array_equal(hs.moment, base.moment)


def test_negative_elevator_pitches_nose_up_at_70(cfg):
    cond = FlightCondition(70.0)
    my = [empennage_loads(cond, cfg, de)[0].moment[1] for de in (0.0, -3.0, -6.0)]
    assert my[0] < my[1] < my[2]


def test_neutral_elevator_force_is_small(cfg):
    hs, vs = empennage_loads(FlightCondition(70.0), cfg, 0.0, 0.0)
    assert abs(hs.force[2]) < 0.05 * cfg.weight
    assert abs(vs.force[1]) < 1e-9


def test_surface_ranges_enforced(cfg):
    with pytest.raises(ValueError):
        empennage_loads(FlightCondition(70.0), cfg, -26.0)
    with pytest.raises(ValueError):
        empennage_loads(FlightCondition(70.0), cfg, 0.0, 31.0)


@pytest.fixture(scope="module")
def cruise_controls():
    return ControlVector(theta0=8.0, theta1s=-2.0, theta_prop=30.0, pitch=1.0)


def test_control_efficiency_vanishes_at_low_speed(cfg, cruise_controls):
    ce20 = elevator_control_efficiency(FlightCondition(20.0), cruise_controls, cfg)
    ce100 = elevator_control_efficiency(FlightCondition(100.0), cruise_controls, cfg)
    assert abs(ce20) < 1e-3 * abs(ce100)


def test_control_efficiency_grows_with_speed(cfg, cruise_controls):
    ce60 = elevator_control_efficiency(FlightCondition(60.0), cruise_controls, cfg)
    ce100 = elevator_control_efficiency(FlightCondition(100.0), cruise_controls, cfg)
    assert abs(ce100) > abs(ce60)


def test_control_efficiency_linear_regime(cfg, cruise_controls):
    cond = FlightCondition(80.0)
    a = elevator_control_efficiency(cond, cruise_controls, cfg, step=0.5)
    b = elevator_control_efficiency(cond, cruise_controls, cfg, step=0.25)
    assert abs(a - b) < 0.01 * abs(a)


def test_gravity_only(cfg):
    br = total_loads(ControlVector(), FlightCondition(50.0), cfg, rotors=False, aero=False)
    assert np.allclose(br.total_force, [0.0, 0.0, cfg.weight])
    assert np.linalg.norm(br.total_force) == pytest.approx(5500 * 9.80665, rel=1e-12)
    assert np.linalg.norm(br.total_force) == pytest.approx(53955, rel=4e-4)


def test_breakdown_totals_are_sums(cfg, cruise_controls):
    br = total_loads(cruise_controls, FlightCondition(60.0), cfg)
    assert [c.component for c in br.components] == list(airframe.COMPONENTS)
    f = sum(c.force for c in br.components)
    m = sum(c.moment for c in br.components)
    assert np.allclose(br.total_force, f) and np.allclose(br.total_moment, m)
    rows = br.rows()
    assert rows[-1][0] == "Total" and len(rows) == len(airframe.COMPONENTS) + 1


def test_batch_matches_single(cfg, cruise_controls):
    X = np.stack([cruise_controls.as_array(), cruise_controls.replace(delta_e=-4.0).as_array()])
    batch = airframe.evaluate(cfg, 70.0, X)
    one = total_loads(cruise_controls.replace(delta_e=-4.0), FlightCondition(70.0), cfg)
    assert np.allclose(batch.total_force[1], one.total_force, rtol=1e-9, atol=1e-6)
