import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satanchor.metrics import COMPARED_METRICS, MetricsSummary, compare, summarize
from satanchor.mobility import MessageKind, MmMessage
from satanchor.simulator import MechanismKind, SlotRecord, UserSample


def sample(user, up=True, down=True, rtt=None, changed=False, handover=False, warmup=False):
    if rtt is None and up and down:
        rtt = 50.0
    return UserSample(
        user=user, connected_up=up, connected_down=down, rtt_ms=rtt, ingress=0, anchor=0, address=None,
        address_changed=changed, handover=handover, warmup=warmup,
    )


def record(t, users, loc=0, route=0):
    msgs = []
    if loc:
        msgs.append(MmMessage(MessageKind.USER_LOCATION_UPDATE, "u", 0, 0, loc))
    if route:
        msgs.append(MmMessage(MessageKind.ROUTE_UPDATE, "g", 0, "*", route))
    return SlotRecord(t, tuple(users), tuple(msgs), loc + route, loc, route, 1 if route else 0)


def random_log(rng: random.Random, T=200, users=("a", "b", "c")):
    log = []
    for t in range(T):
        row = []
        for u in users:
            up, down = rng.random() < 0.9, rng.random() < 0.85
            row.append(
                sample(
                    u, up, down, rtt=rng.uniform(20, 300) if up and down else None,
                    changed=rng.random() < 0.02, handover=rng.random() < 0.1, warmup=t == 0,
                )
            )
        log.append(record(t, row, loc=rng.randint(0, 30), route=rng.choice([0, 0, 0, 1500])))
    return log


def streaming_oracle(log, slot_seconds, exclude_warmup=False):
    """Second implementation: one pass per user with running counters."""
    users = sorted({s.user for r in log for s in r.users})
    T = len(log)
    curs_up, curs_down = [], []
    changes = handovers = 0
    for u in users:
        n = up = down = 0
        for r in log:
            for s in r.users:
                if s.user != u:
                    continue
                changes += s.address_changed
                handovers += s.handover
                if exclude_warmup and s.warmup:
                    continue
                n += 1
                up += s.connected_up
                down += s.connected_down
        curs_up.append(up / n)
        curs_down.append(down / n)
    rtts = sorted(s.rtt_ms for r in log for s in r.users if s.rtt_ms is not None)
    seconds = T * slot_seconds
    return {
        "cur_up": sum(curs_up) / len(users),
        "cur_down": sum(curs_down) / len(users),
        "rtt_mean": sum(rtts) / len(rtts),
        "rtt_max": rtts[-1],
        "ip_changes_per_hour": changes / len(users) / (seconds / 3600),
        "handovers_per_hour": handovers / len(users) / (seconds / 3600),
        "location_mgmt_hops_per_sec": sum(r.location_hops for r in log) / seconds,
        "route_mgmt_hops_per_sec": sum(r.route_hops for r in log) / seconds,
    }


def test_all_connected_log():
    s = summarize([record(t, [sample("u")]) for t in range(10)], 1.0)
    assert s.cur_up == s.cur_down == 1.0
    assert s.rtt_mean == s.rtt_p50 == s.rtt_max == 50.0


def test_two_ip_changes_in_an_hour():
    log = [record(t, [sample("u", changed=t in (100, 2000))]) for t in range(3600)]
    assert summarize(log, 1.0).ip_changes_per_hour == pytest.approx(2.0)
    # the same changes over half an hour of 0.5 s slots
    assert summarize(log, 0.5).ip_changes_per_hour == pytest.approx(4.0)


def test_empty_log_rejected():
    with pytest.raises(ValueError, match="empty"):
        summarize([], 1.0)


def test_disconnected_log_has_no_rtt():
    s = summarize([record(t, [sample("u", up=False)]) for t in range(5)], 1.0)
    assert s.cur_up == 0.0 and s.cur_down == 1.0
    assert math.isnan(s.rtt_mean) and s.rtt_timeseries == ()


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("exclude_warmup", [False, True])
def test_summary_matches_streaming_oracle(seed, exclude_warmup):
    log = random_log(random.Random(seed))
    got = summarize(log, 2.0, exclude_warmup=exclude_warmup)
    for k, v in streaming_oracle(log, 2.0, exclude_warmup).items():
        assert getattr(got, k) == pytest.approx(v, rel=1e-12), k


def test_user_and_slot_order_do_not_matter():
    rng = random.Random(3)
    log = random_log(rng)
    shuffled = []
    for r in log:
        users = list(r.users)
        rng.shuffle(users)
        shuffled.append(SlotRecord(r.t, tuple(users), r.messages, r.control_message_hops, r.location_hops, r.route_hops, r.gs_handovers))
    rng.shuffle(shuffled)
    a, b = summarize(log, 1.0), summarize(shuffled, 1.0)
    for k in COMPARED_METRICS + ("rtt_p50",):
        assert getattr(a, k) == pytest.approx(getattr(b, k), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 1000), min_size=1, max_size=100))
def test_rtt_percentiles_are_ordered(rtts):
    log = [record(t, [sample("u", rtt=r)]) for t, r in enumerate(rtts)]
    s = summarize(log, 1.0)
    assert s.rtt_p50 <= s.rtt_p95 <= s.rtt_max
    assert s.rtt_max == max(rtts)
    assert s.rtt_p50 == pytest.approx(float(np.median(rtts)))


def test_overhead_decomposition():
    log = random_log(random.Random(1))
    s = summarize(log, 1.0)
    total = sum(r.control_message_hops for r in log) / len(log)
    assert s.control_overhead_hops_per_sec == pytest.approx(total)


def test_warmup_exclusion():
    log = [record(0, [sample("u", up=False, down=False, warmup=True)])]
    log += [record(t, [sample("u")]) for t in range(1, 10)]
    assert summarize(log, 1.0).cur_down == pytest.approx(0.9)
    assert summarize(log, 1.0, exclude_warmup=True).cur_down == 1.0


def test_rtt_timeseries_averages_users_per_slot():
    log = [record(0, [sample("a", rtt=10.0), sample("b", rtt=30.0)]), record(1, [sample("a", up=False), sample("b", rtt=40.0)])]
    assert summarize(log, 1.0).rtt_timeseries == ((0, 20.0), (1, 40.0))


# ---------------------------------------------------------------- comparison

def summary(**kw) -> MetricsSummary:
    base = dict(
        cur_up=0.99, cur_down=0.99, rtt_mean=100.0, rtt_p50=100.0, rtt_p95=150.0, rtt_max=200.0,
        ip_changes_per_hour=0.1, handovers_per_hour=10.0, location_mgmt_hops_per_sec=5.0,
        route_mgmt_hops_per_sec=0.0, slots=10, users=1, scenario_key="k",
    )
    base.update(kw)
    return MetricsSummary(**base)


def test_identical_summaries_have_zero_deltas():
    cmp = compare({"skycastle": summary(), "other": summary()})
    assert all(r.delta == 0 and r.ratio == 1 for r in cmp.rows)
    assert {r.metric for r in cmp.rows} == set(COMPARED_METRICS)


def test_mismatched_scenarios_rejected():
    with pytest.raises(ValueError, match="different scenarios"):
        compare({"skycastle": summary(), "ground_anchor": summary(scenario_key="other")})
    with pytest.raises(ValueError, match="reference"):
        compare({"ground_anchor": summary()})


def test_expected_orderings():
    good = {
        "skycastle": summary(),
        "ground_anchor": summary(cur_up=0.9, cur_down=0.9, ip_changes_per_hour=0.4, handovers_per_hour=20, route_mgmt_hops_per_sec=9.0),
        "fixed_sat_anchor": summary(cur_up=0.9, cur_down=0.95, ip_changes_per_hour=0.0, route_mgmt_hops_per_sec=9.0),
    }
    assert compare(good).violations == []
    bad = dict(good, skycastle=summary(cur_down=0.9, route_mgmt_hops_per_sec=1.0))
    v = compare(bad).violations
    assert any(x.startswith("cur_down: skycastle") for x in v)
    assert any(x.startswith("route_mgmt_hops_per_sec") for x in v)


def test_delta_is_reference_minus_mechanism():
    cmp = compare({"skycastle": summary(rtt_max=150.0), "fixed_sat_anchor": summary(rtt_max=200.0)})
    row = next(r for r in cmp.rows if r.metric == "rtt_max" and r.mechanism == "fixed_sat_anchor")
    assert row.delta == -50.0 and row.ratio == pytest.approx(0.75)


# ---------------------------------------------------------------- flight comparisons

@pytest.mark.parametrize("flight", ["pacific", "atlantic"])
def test_skycastle_gains_cur_over_ground_anchor_in_flight(flight_runs, flight):
    summaries = {m.value: flight_runs[flight, m][1] for m in (MechanismKind.SKYCASTLE, MechanismKind.GROUND_ANCHOR)}
    rows = {r.metric: r for r in compare(summaries).rows if r.mechanism == "ground_anchor"}
    assert rows["cur_down"].delta > 0 and rows["cur_up"].delta > 0


@pytest.mark.xfail(
    strict=True,
    reason="the one-orbit discovery window yields ~300-satellite clusters, so SkyCastle's passing-anchor "
    "detour (up to H=47 hops) exceeds the fixed anchor's drift within a single flight",
)
@pytest.mark.parametrize("flight", ["pacific", "atlantic"])
def test_skycastle_has_lower_max_rtt_than_fixed_anchor_in_flight(flight_runs, flight):
    summaries = {m.value: flight_runs[flight, m][1] for m in (MechanismKind.SKYCASTLE, MechanismKind.FIXED_SAT_ANCHOR)}
    row = next(r for r in compare(summaries).rows if r.metric == "rtt_max" and r.mechanism == "fixed_sat_anchor")
    assert row.delta < 0
