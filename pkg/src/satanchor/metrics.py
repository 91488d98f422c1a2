"""Evaluation metrics computed from run logs, and cross-mechanism comparison."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .simulator.engine import SlotRecord


@dataclass(frozen=True)
class MetricsSummary:
    cur_up: float
    cur_down: float
    rtt_mean: float
    rtt_p50: float
    rtt_p95: float
    rtt_max: float
    ip_changes_per_hour: float
    handovers_per_hour: float
    location_mgmt_hops_per_sec: float
    route_mgmt_hops_per_sec: float
    slots: int
    users: int
    rtt_timeseries: tuple[tuple[int, float], ...] = field(default=(), repr=False)
    mechanism: str = ""
    scenario_key: str = ""

    @property
    def control_overhead_hops_per_sec(self) -> float:
        return self.location_mgmt_hops_per_sec + self.route_mgmt_hops_per_sec

    def row(self) -> dict[str, object]:
        d = asdict(self)
        d.pop("rtt_timeseries")
        return d


def summarize(
    log: Sequence[SlotRecord],
    slot_seconds: float,
    *,
    exclude_warmup: bool = False,
    mechanism: str = "",
    scenario_key: str = "",
) -> MetricsSummary:
    """Aggregate a run log.

    CUR is computed per user and averaged over users; IP-change and
    handover rates are per user per hour.  With ``exclude_warmup`` the
    slots up to each user's initial registration are dropped from the CUR
    denominator instead of counting as disconnected.
    """
    if not log:
        raise ValueError("empty run log")
    T = len(log)
    hours = T * slot_seconds / 3600.0
    up: dict[str, int] = {}
    down: dict[str, int] = {}
    counted: dict[str, int] = {}
    changes = handovers = 0
    rtts: list[float] = []
    series = []
    loc = route = 0
    for rec in log:
        loc += rec.location_hops
        route += rec.route_hops
        slot_rtts = []
        for s in rec.users:
            counted.setdefault(s.user, 0)
            up.setdefault(s.user, 0)
            down.setdefault(s.user, 0)
            changes += s.address_changed
            handovers += s.handover
            if s.rtt_ms is not None:
                slot_rtts.append(s.rtt_ms)
            if exclude_warmup and s.warmup:
                continue
            counted[s.user] += 1
            up[s.user] += s.connected_up
            down[s.user] += s.connected_down
        rtts += slot_rtts
        if slot_rtts:
            series.append((rec.t, sum(slot_rtts) / len(slot_rtts)))
    n_users = len(counted)
    if n_users == 0:
        raise ValueError("run log has no user samples")

    def cur(hits: dict[str, int]) -> float:
        return sum(hits[u] / counted[u] if counted[u] else 0.0 for u in counted) / n_users

    if rtts:
        arr = np.asarray(rtts)
        rtt = (float(arr.mean()), float(np.percentile(arr, 50)), float(np.percentile(arr, 95)), float(arr.max()))
    else:
        rtt = (math.nan,) * 4
    return MetricsSummary(
        cur_up=cur(up),
        cur_down=cur(down),
        rtt_mean=rtt[0],
        rtt_p50=rtt[1],
        rtt_p95=rtt[2],
        rtt_max=rtt[3],
        ip_changes_per_hour=changes / n_users / hours,
        handovers_per_hour=handovers / n_users / hours,
        location_mgmt_hops_per_sec=loc / (T * slot_seconds),
        route_mgmt_hops_per_sec=route / (T * slot_seconds),
        slots=T,
        users=n_users,
        rtt_timeseries=tuple(series),
        mechanism=mechanism,
        scenario_key=scenario_key,
    )


COMPARED_METRICS = (
    "cur_up",
    "cur_down",
    "rtt_mean",
    "rtt_p95",
    "rtt_max",
    "ip_changes_per_hour",
    "handovers_per_hour",
    "location_mgmt_hops_per_sec",
    "route_mgmt_hops_per_sec",
)


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    mechanism: str
    value: float
    reference: float
    delta: float
    ratio: float


@dataclass
class Comparison:
    reference: str
    rows: list[ComparisonRow]
    violations: list[str]


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def expected_ordering_violations(s: Mapping[str, MetricsSummary]) -> list[str]:
    """Check the qualitative trends expected of the three mechanisms."""
    out = []
    sky, ground, fixed = s.get("skycastle"), s.get("ground_anchor"), s.get("fixed_sat_anchor")
    if sky and fixed and not sky.cur_down > fixed.cur_down:
        out.append(f"cur_down: skycastle {sky.cur_down:.6f} not > fixed_sat_anchor {fixed.cur_down:.6f}")
    if fixed and ground and not fixed.cur_down >= ground.cur_down:
        out.append(f"cur_down: fixed_sat_anchor {fixed.cur_down:.6f} not ≥ ground_anchor {ground.cur_down:.6f}")
    if sky and ground and not sky.cur_up > ground.cur_up:
        out.append(f"cur_up: skycastle {sky.cur_up:.6f} not > ground_anchor {ground.cur_up:.6f}")
    if sky and ground and not sky.ip_changes_per_hour <= 0.5 * ground.ip_changes_per_hour:
        out.append(
            f"ip_changes_per_hour: skycastle {sky.ip_changes_per_hour:.6f} not ≤ half of "
            f"ground_anchor {ground.ip_changes_per_hour:.6f}"
        )
    if sky and ground and not sky.handovers_per_hour < ground.handovers_per_hour:
        out.append(
            f"handovers_per_hour: skycastle {sky.handovers_per_hour:.6f} not < "
            f"ground_anchor {ground.handovers_per_hour:.6f}"
        )
    if fixed and fixed.ip_changes_per_hour != 0:
        out.append(f"ip_changes_per_hour: fixed_sat_anchor {fixed.ip_changes_per_hour:.6f} != 0")
    if sky and sky.route_mgmt_hops_per_sec != 0:
        out.append(f"route_mgmt_hops_per_sec: skycastle {sky.route_mgmt_hops_per_sec:.6f} != 0")
    return out


def compare(summaries: Mapping[str, MetricsSummary], reference: str = "skycastle") -> Comparison:
    """Deltas (reference minus mechanism) and ratios for every metric and mechanism."""
    if reference not in summaries:
        raise ValueError(f"reference mechanism {reference!r} missing from summaries")
    keys = {s.scenario_key for s in summaries.values()}
    if len(keys) > 1:
        raise ValueError(f"summaries come from different scenarios: {sorted(keys)}")
    ref = summaries[reference]
    rows = []
    for metric in COMPARED_METRICS:
        r = getattr(ref, metric)
        for name in sorted(summaries):
            v = getattr(summaries[name], metric)
            rows.append(ComparisonRow(metric, name, v, r, r - v, _ratio(r, v)))
    return Comparison(reference=reference, rows=rows, violations=expected_ordering_violations(summaries))
