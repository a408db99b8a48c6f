"""Traffic generator tests: CBR timing, ramp integration, tamper mutations."""

import random

import pytest

from distbsim import traffic
from distbsim.flowtable import FlowRule, Match, RuleSet, Switch


def test_cbr_rate_zero_is_empty():
    assert traffic.cbr_source(0.0, (100, 512), 10.0, seed=1) == []


def test_cbr_10pps_for_2s_yields_20_on_grid():
    emissions = traffic.cbr_source(10.0, (100, 512), 2.0, seed=1)
    assert len(emissions) == 20
    for k, (t, size) in enumerate(emissions, start=1):
        assert t == pytest.approx(0.1 * k, abs=1e-12)
        assert 100 <= size <= 512


def test_cbr_mean_bytes_over_100_seeds():
    lo, hi = 100, 512
    grand_total = 0
    count = 0
    for seed in range(100):
        emissions = traffic.cbr_source(20.0, (lo, hi), 5.0, seed=seed)
        grand_total += sum(size for _, size in emissions)
        count += len(emissions)
    mean = grand_total / count
    center = (lo + hi) / 2
    sigma = (hi - lo) / (12 ** 0.5) / (count ** 0.5)
    assert abs(mean - center) <= 4 * sigma


def test_ramp_rate_interpolation():
    schedule = traffic.AttackSchedule(start=0.0,
                                      rate_curve=[(0.0, 190.0), (100.0, 1400.0)],
                                      targets=["cloud"])
    assert schedule.rate_at(-1.0) == 0.0
    assert schedule.rate_at(0.0) == 190.0
    assert schedule.rate_at(50.0) == pytest.approx(795.0)
    assert schedule.rate_at(100.0) == 1400.0
    assert schedule.rate_at(500.0) == 1400.0


def test_flat_ramp_packet_count_per_second():
    schedule = traffic.AttackSchedule(start=0.0,
                                      rate_curve=[(0.0, 190.0), (10.0, 190.0)],
                                      targets=["cloud"])
    emissions = traffic.ddos_ramp(schedule, horizon=10.0)
    assert len(emissions) == 1900
    # emissions sit on the k/rate grid, so count full seconds as (s, s+1]
    for second in range(10):
        in_window = [t for t, _ in emissions if second < t <= second + 1]
        assert len(in_window) == 190


def test_ramp_emission_count_matches_rate_integral():
    schedule = traffic.AttackSchedule(start=5.0,
                                      rate_curve=[(5.0, 100.0), (15.0, 500.0)],
                                      targets=["cloud"])
    emissions = traffic.ddos_ramp(schedule, horizon=15.0)
    integral = (100 + 500) / 2 * 10  # trapezoid over the ramp
    assert abs(len(emissions) - integral) <= 1
    assert all(5.0 <= t <= 15.0 for t, _ in emissions)
    assert emissions == sorted(emissions)


def test_negative_rates_rejected():
    with pytest.raises(ValueError):
        traffic.AttackSchedule(start=0.0, rate_curve=[(0.0, -5.0)], targets=["x"])


def _switch():
    rules = RuleSet([
        FlowRule(dpid=1, priority=10, match=Match(nw_dst="10.0.0.1"),
                 action="OUTPUT:1"),
        FlowRule(dpid=1, priority=20, match=Match(nw_dst="10.0.0.2"),
                 action="OUTPUT:2"),
    ])
    return Switch(id=1, table=rules)


def test_tamper_edit_priority_marks_compromised():
    switch = _switch()
    changed = traffic.tamper_switch(switch, traffic.EditPriority(
        dpid=1, priority=10, match=Match(nw_dst="10.0.0.1"), new_priority=99))
    assert changed and switch.compromised
    assert any(r.priority == 99 for r in switch.table)


def test_tamper_duplicate_add_is_rejected():
    switch = _switch()
    before = switch.table.canonical_bytes()
    duplicate = FlowRule(dpid=1, priority=10, match=Match(nw_dst="10.0.0.1"),
                         action="DROP")
    changed = traffic.tamper_switch(switch, traffic.AddRule(duplicate))
    assert not changed
    assert not switch.compromised
    assert switch.table.canonical_bytes() == before


def test_tamper_drop_rule_removes_it():
    switch = _switch()
    changed = traffic.tamper_switch(switch, traffic.DropRule(
        dpid=1, priority=20, match=Match(nw_dst="10.0.0.2")))
    assert changed and len(switch.table) == 1


def test_tamper_self_revert_before_round_is_invisible():
    switch = _switch()
    golden = switch.table.canonical_bytes()
    traffic.tamper_switch(switch, traffic.EditPriority(
        dpid=1, priority=10, match=Match(nw_dst="10.0.0.1"), new_priority=55))
    traffic.tamper_switch(switch, traffic.EditPriority(
        dpid=1, priority=55, match=Match(nw_dst="10.0.0.1"), new_priority=10))
    # the dump hash is clean again; only the local flag remembers
    assert switch.table.canonical_bytes() == golden
    assert switch.compromised
