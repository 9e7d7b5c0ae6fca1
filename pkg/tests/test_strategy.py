import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cchtrim import strategy, trim
from cchtrim.strategy import (RESOLUTION, ReferenceCache, StrategyRecord, check_properties,
                              descent_search, engagement_speeds, grid_search,
                              heuristic_descent_search, power_ordering, til_from_loads)


def quadratic(minimum, base=100.0):
    # load barely grows, so TIL stays feasible over the whole domain
    return lambda d: ((d - minimum) ** 2 + base, 50.0 - 0.01 * d)


def test_synthetic_minimum():
    de, p, trace = descent_search(quadratic(-3.0))
    assert abs(de + 3.0) <= 0.01 and p == pytest.approx(100.0)
    assert not trace.at_edge


def test_power_rising_immediately_stops_at_zero():
    de, p, trace = descent_search(lambda d: (100.0 - d, 50.0))
    assert de == 0.0 and p == 100.0
    assert not any(ok for *_, ok in trace.probes)


def test_flat_power_stays_at_zero():
    de, _, _ = descent_search(lambda d: (100.0 + 1e-12 * d, 50.0))
    assert de == 0.0


def test_step_schedule_and_pass_ordering():
    calls = []
    f = quadratic(-4.37)

    def probe(d):
        calls.append(round(d / RESOLUTION))
        return f(d)

    de_star, _, trace = descent_search(probe)
    assert de_star == pytest.approx(-4.37)
    assert trace.alphas == [1.0, 0.1, 0.01]
    assert trace.alpha == 0.01
    de = [d for d, *_ in trace.probes]
    passes = 1 + sum(1 for a, b in zip(de, de[1:]) if b >= a)
    assert passes == 3
    # revisits are served from the memo: each lattice point costs one trim at most
    assert len(set(calls)) == len(calls)


def test_domain_edge_flagged():
    de, _, trace = descent_search(quadratic(-30.0))
    assert de == -15.0 and trace.at_edge
    assert min(d for d, *_ in trace.probes) >= -15.0


def test_til_cap_limits_deflection():
    # TIL equals -delta_e percent; cap 2.5 % forbids going below -2.5 deg
    probe = lambda d: ((d + 8.0) ** 2, 100.0 * (1.0 - d / 100.0))
    de, _, _ = descent_search(probe, til_cap=2.5, reference_load=100.0)
    assert de == pytest.approx(-2.5)


def test_cap_must_be_positive():
    with pytest.raises(ValueError):
        descent_search(quadratic(-1.0), til_cap=0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-16.0, 0.0), st.floats(0.1, 30.0), st.floats(0.2, 5.0))
def test_descent_matches_exhaustive_grid(minimum, cap, curvature):
    probe = lambda d: (curvature * (d - minimum) ** 2 + 500.0, 100.0 * (1.0 - d / 100.0))
    de, p, _ = descent_search(probe, til_cap=cap, reference_load=100.0)
    g_de, g_p = grid_search(probe, til_cap=cap, reference_load=100.0)
    assert abs(de - g_de) <= 0.01 + 1e-9
    assert abs(p / g_p - 1.0) < 1e-3


def test_til_examples():
    assert til_from_loads(56.8, 56.8) == 0.0
    assert til_from_loads(63.7, 56.8) == pytest.approx(12.1, abs=0.05)
    assert til_from_loads(71.6, 56.8) == pytest.approx(26.1, abs=0.05)


def test_til_zero_deflection_is_exactly_zero(cfg, strim_sweep):
    cache = ReferenceCache(cfg, strim_sweep)
    assert 70.0 in cache
    assert strategy.til(70.0, 0.0, cache) == 0.0


def test_til_trim_backed(cfg, strim_sweep):
    cache = ReferenceCache(cfg, strim_sweep)
    t = strategy.til(90.0, -4.0, cache)
    assert t > 0


# trim-backed search -----------------------------------------------------------

@pytest.fixture(scope="module")
def search90(cfg, strim_by_speed):
    return heuristic_descent_search(90.0, 5.0, cfg, strim_by_speed[90.0])


def test_search_result_consistent(cfg, strim_by_speed, search90):
    de, p, trace, sol = search90
    ref = strim_by_speed[90.0]
    assert -15.0 <= de <= 0.0
    assert sol.controls.delta_e == de and sol.power == p
    assert p <= ref.power * (1 + 1e-8)
    assert til_from_loads(sol.rotor_load, ref.rotor_load) <= 5.0
    assert trace.alphas == [1.0, 0.1, 0.01]


def test_mptrim_equals_htrim_when_cap_inactive(cfg, strim_by_speed, search90):
    de, p, trace, _ = search90
    if any(t > 5.0 for _, _, t, _ in trace.probes):
        pytest.skip("TIL cap active at this speed")
    de_mp, p_mp, _, _ = heuristic_descent_search(90.0, math.inf, cfg, strim_by_speed[90.0],
                                                 kind="MPTrim")
    assert de_mp == de and p_mp == pytest.approx(p, rel=1e-9)


def test_records_recomputable(cfg, strim_sweep):
    recs = strategy.run_strategy("HTrim", [60.0, 90.0], cfg,
                                 reference=[s for s in strim_sweep if s.airspeed in (60.0, 90.0)])
    ref = {s.airspeed: s for s in strim_sweep}
    for r in recs:
        s = ref[r.U]
        assert r.til == pytest.approx((r.rotor_load * 1e3 / s.rotor_load - 1) * 100, abs=1e-9)
        assert r.reduction == pytest.approx((1 - r.power * 1e3 / s.power) * 100, abs=1e-9)
        assert r.til <= 5.0 + 1e-9
        assert r.solution.controls.delta_e == r.delta_e


def test_strim_records_are_reference(cfg, strim_sweep):
    recs = strategy.run_strategy("STrim", [s.airspeed for s in strim_sweep], cfg,
                                 reference=strim_sweep)
    assert all(r.til == 0.0 and r.reduction == 0.0 and r.delta_e == 0.0 for r in recs)


def test_unknown_kind(cfg):
    with pytest.raises(ValueError):
        strategy.run_strategy("XTrim", [50.0], cfg)


# engagement, ordering, properties ----------------------------------------------

def _rec(U, kind="STrim", de=0.0, power=1000.0, prop=0.0):
    return StrategyRecord(U, kind, de, power, 55.0, 0.0, 0.0, prop)


def test_engagement_bands(cfg):
    thr = 0.02 * cfg.weight / 1e3
    st_recs = [_rec(u, prop=(thr * 2 if u >= 20 else 0.0)) for u in range(0, 101, 5)]
    ht = [_rec(u, "HTrim", de=(-2.0 if u >= 50 else 0.0)) for u in range(0, 101, 5)]
    bands = engagement_speeds(st_recs, ht, cfg)
    assert bands.propeller == (15, 20) and bands.elevator == (45, 50)
    assert not bands.propeller_open and not bands.elevator_open


def test_never_engaged_elevator_is_open(cfg):
    ht = [_rec(u, "HTrim") for u in range(0, 101, 5)]
    bands = engagement_speeds([], ht, cfg)
    assert bands.elevator is None and bands.elevator_open
    assert bands.as_dict()["elevator_open"] is True


def test_tiny_deflection_is_not_engagement(cfg):
    ht = [_rec(u, "HTrim", de=-0.04) for u in range(0, 101, 5)]
    assert engagement_speeds([], ht, cfg).elevator_open


def test_power_ordering_checker():
    recs = {"STrim": [_rec(50, power=1000.0)], "HTrim": [_rec(50, "HTrim", power=990.0)],
            "MPTrim": [_rec(50, "MPTrim", power=980.0)], "BL": [_rec(50, "BL", power=984.0)]}
    ok, bad = power_ordering(recs)
    assert ok and not bad
    recs["BL"] = [_rec(50, "BL", power=990.0)]
    ok, bad = power_ordering(recs)
    assert not ok and "BL" in bad[0]


def test_check_properties_synthetic():
    de = np.linspace(-15, 0, 16)
    load = 55.0 - 0.5 * de
    til = (load / 55.0 - 1) * 100
    power = (de + 6.0) ** 2 + 900.0
    rep = check_properties(de, load, til, power, 100.0)
    assert rep.ok and rep.turning_point == -6.0
    rep = check_properties(de, load, til, -np.cos(de), 100.0)
    assert not rep.power_unimodal
    bumpy = load.copy()
    bumpy[5] += 2.0
    assert not check_properties(de, bumpy, til, power).load_monotone


def test_check_properties_constant_curves():
    de = [0.0, -2.0, -4.0]
    rep = check_properties(de, [50.0] * 3, [0.0] * 3, [800.0] * 3, 30.0)
    assert rep.ok and rep.turning_point is None


def test_verify_properties_elevator_ineffective(cfg, strim_by_speed):
    rep = strategy.verify_properties(30.0, [0.0, -5.0, -10.0], cfg, strim_by_speed[30.0])
    assert rep.ok
    assert max(rep.power) - min(rep.power) < 1e-6 * max(rep.power)


def test_records_csv(cfg, strim_sweep):
    recs = strategy.run_strategy("STrim", [0.0, 5.0], cfg, reference=strim_sweep[:2])
    lines = strategy.records_csv(recs).splitlines()
    assert lines[0].split(",") == list(strategy.RECORD_COLUMNS) and len(lines) == 3


def test_power_turning_point_at_100(cfg, strim_by_speed):
    # the elevator is expected to trade propeller power for rotor power with
    # an interior optimum; see README "Results with the default configuration"
    rep = strategy.verify_properties(100.0, np.arange(0.0, -15.5, -1.0), cfg,
                                     strim_by_speed[100.0])
    assert rep.turning_point is not None, (
        f"power rises monotonically with negative elevator: "
        f"{rep.power[-1]:.1f} kW at 0 deg, {rep.power[0]:.1f} kW at -15 deg")


def test_load_grows_with_negative_elevator_at_70(cfg, strim_by_speed):
    rep = strategy.verify_properties(70.0, [0.0, -2.0, -4.0, -6.0], cfg, strim_by_speed[70.0])
    assert rep.load_monotone and rep.load[0] > rep.load[-1]
