"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run directly with ``python tests/test_acceptance.py`` or through pytest; the
lines are collected again in the terminal summary.
"""
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from satanchor import cli
from satanchor.ada import (
    assign_bruteforce,
    assign_greedy,
    check_delay_constraint,
    objective_value,
)
from satanchor.config import PRESET_DIR, validate_and_load
from satanchor.constellation import ShellConfig, VisibilityTimeline, distance_row
from satanchor.mobility import MessageKind
from satanchor.simulator import LatencyMode, MechanismKind, build_world, run
from satanchor.simulator import world as world_mod
from satanchor.simulator.world import discover_pattern, plan_division

from conftest import FLIGHTS, bfs_distances

SKY, GROUND, FIXED = MechanismKind.SKYCASTLE, MechanismKind.GROUND_ANCHOR, MechanismKind.FIXED_SAT_ANCHOR


def samples(log):
    """The single user's sample per slot."""
    return [r.users[0] for r in log]


# --------------------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def forced_runs():
    """Starlink hour with the user's home GS pushed to another satellite every 150 slots."""
    sf = validate_and_load(PRESET_DIR / "starlink.yaml")
    base = sf.scenario
    home = int(build_world(base).home_gs[base.users[0].id][0])
    gs_id = base.ground_stations[home].id
    slots = tuple(range(100, base.horizon, 150))
    sc = replace(base, forced_gs_handovers=tuple((gs_id, t) for t in slots))
    world = build_world(sc)
    logs = {mech: run(sc.with_mechanism(mech), world) for mech in (SKY, GROUND, FIXED)}
    return sc, world, home, slots, logs


# --------------------------------------------------------------------------- 1, 2

def test_criterion_1_detour_bound(acceptance_report):
    t0 = time.perf_counter()
    shells = violations = missing_equality = 0
    for X in range(3, 13):
        for Y in range(3, 13):
            shell = ShellConfig(X, Y, 550.0, 53.0)
            D = np.array([distance_row(s, shell) for s in range(shell.num_sats)])
            for a in range(shell.num_sats):
                # extra[j, i] = D(j,A) + D(A,i) - D(j,i)
                extra = D[:, a][:, None] + D[a][None, :] - D
                bound = 2 * D[a]
                violations += int((extra > bound[None, :]).sum())
                missing_equality += int((extra.max(axis=0) != bound).sum())
            shells += 1
    dt = time.perf_counter() - t0
    ok = violations == 0 and missing_equality == 0 and dt < 60
    acceptance_report(
        1, ok, f"{shells} shells, violations={violations}, (A,i) pairs without equality={missing_equality}, {dt:.1f}s"
    )


def test_criterion_2_grid_distance_equals_bfs(acceptance_report):
    t0 = time.perf_counter()
    pairs = mismatches = 0
    for X in range(3, 13):
        for Y in range(3, 13):
            shell = ShellConfig(X, Y, 550.0, 53.0)
            for s in range(shell.num_sats):
                bfs = np.array(bfs_distances(s, shell))
                mismatches += int((distance_row(s, shell) != bfs).sum())
                pairs += shell.num_sats
    dt = time.perf_counter() - t0
    acceptance_report(2, mismatches == 0 and dt < 60, f"{pairs} ordered pairs, mismatches={mismatches}, {dt:.1f}s")


# --------------------------------------------------------------------------- 3

def test_criterion_3_greedy_is_optimal(acceptance_report):
    from satanchor.ada import ClusterDivision

    t0 = time.perf_counter()
    rng = random.Random(20240601)
    n = 600
    mismatches = []
    contested = changed = 0
    for k in range(n):
        shell = ShellConfig(rng.randint(3, 8), rng.randint(3, 8), 550.0, 53.0)
        anchors = rng.sample(range(shell.num_sats), rng.randint(1, min(10, shell.num_sats)))
        anchor_of = {a: a for a in anchors}
        for s in range(shell.num_sats):
            anchor_of.setdefault(s, rng.choice(anchors))
        div = ClusterDivision(anchor_of=dict(sorted(anchor_of.items())))
        T = rng.randint(1, 12)
        pool = rng.sample(range(shell.num_sats), min(shell.num_sats, rng.randint(2, 12)))
        slots = tuple(frozenset(rng.sample(pool, rng.randint(0, min(4, len(pool))))) for _ in range(T))
        tl = VisibilityTimeline("u", slots)
        greedy = assign_greedy(tl, div)
        g = objective_value([greedy], div)
        b = objective_value([assign_bruteforce(tl, div)], div)
        contested += any(len({div.anchor_of[x] for x in vis}) > 1 for vis in slots)
        changed += greedy.anchor_changes() > 0
        if g != b:
            mismatches.append((k, g, b))
    dt = time.perf_counter() - t0
    acceptance_report(
        3, not mismatches and dt < 300,
        f"{n} random instances ({contested} with a choice of clusters, {changed} with anchor changes), "
        f"mismatches={len(mismatches)}, {dt:.1f}s",
    )


# --------------------------------------------------------------------------- 4

GRID_SHELLS = [(8, 8, 550.0, 53.0), (12, 12, 550.0, 53.0), (20, 18, 550.0, 53.0), (36, 36, 610.0, 51.9), (72, 22, 540.0, 53.0)]
GRID_H = [4, 10, 20, None]  # None: default (X + Y) / 2


def test_criterion_4_partition_and_delay_audit(acceptance_report, tmp_path, capsys):
    t0 = time.perf_counter()
    failures = []
    cells = 0
    for X, Y, alt, inc in GRID_SHELLS:
        for H in GRID_H:
            cells += 1
            doc = {
                "name": f"grid{X}x{Y}",
                "shell": {"num_orbits": X, "sats_per_orbit": Y, "altitude_km": alt, "inclination_deg": inc},
                "ada": {"discovery_window": 1200, **({"H": H} if H is not None else {})},
                "sim": {"horizon_slots": 2},
                "gs": [{"id": "g", "lat": 0.0, "lon": 0.0}],
                "users": [{"id": "u", "lat": 0.0, "lon": 0.0}],
            }
            path = tmp_path / f"cell{cells}.yaml"
            path.write_text(yaml.safe_dump(doc))
            s = validate_and_load(path).scenario
            key = (s.shell, s.reference_point, s.ada.H, s.ada.discovery_window, s.slot_seconds)
            pattern, division = discover_pattern(*key), plan_division(*key)
            if division.partition_errors(s.shell):
                failures.append(f"{X}x{Y} H={s.ada.H}: not a partition")
            audit = check_delay_constraint(division, s.ada.H, s.shell)
            if not audit.passed:
                failures.append(f"{X}x{Y} H={s.ada.H}: worst detour {audit.worst_detour}")
            for a, members in division.clusters.items():
                if not members <= pattern.instance(a, s.shell):
                    failures.append(f"{X}x{Y} H={s.ada.H}: cluster {a} leaves its pattern instance")
            code = cli.main(["ada", "plan", str(path)])
            if code != 0:
                failures.append(f"{X}x{Y} H={s.ada.H}: ada plan exit {code}")
    capsys.readouterr()
    dt = time.perf_counter() - t0
    detail = f"{cells} (shell, H) cells, failures={failures or 0}, {dt:.1f}s"
    acceptance_report(4, cells == 20 and not failures and dt < 60, detail)


# --------------------------------------------------------------------------- 5

def test_criterion_5_convergence_free(acceptance_report, forced_runs):
    sc, world, home, slots, logs = forced_runs
    c = sc.convergence.convergence_slots
    windows = [range(t, min(t + c, sc.horizon)) for t in slots]
    assert all(world.unconverged[w, home].all() for w in windows)
    sky = samples(logs[SKY])
    ground = samples(logs[GROUND])
    unconverged = np.flatnonzero(world.unconverged[:, home])
    sky_drops = [
        t for t in unconverged
        if not (sky[t].connected_down and sky[t].connected_up) and not sky[t].warmup and not sky[t].address_changed
    ]
    sky_raw = [t for t in unconverged if not (sky[t].connected_down and sky[t].connected_up)]
    ground_hit = sum(1 for w in windows if any(not (ground[t].connected_down and ground[t].connected_up) for t in w))
    ok = len(slots) >= 20 and not sky_drops and ground_hit == len(windows)
    acceptance_report(
        5, ok,
        f"{len(slots)} forced handovers of the home GS, {len(unconverged)} unconverged slots; "
        f"SkyCastle drops in them={len(sky_drops)} (raw incl. warmup/address reset={len(sky_raw)}); "
        f"GroundAnchor windows with a drop={ground_hit}/{len(windows)}",
    )


# --------------------------------------------------------------------------- 6

def test_criterion_6_cur_ordering(acceptance_report, flight_runs):
    parts, ok = [], True
    for name in FLIGHTS:
        sky, ground, fixed = (flight_runs[name, m][1] for m in (SKY, GROUND, FIXED))
        checks = {
            "down sky>fixed": sky.cur_down > fixed.cur_down,
            "down fixed>=ground": fixed.cur_down >= ground.cur_down,
            "up sky>ground": sky.cur_up > ground.cur_up,
            "sky>=0.95": min(sky.cur_up, sky.cur_down) >= 0.95,
        }
        ok &= all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        parts.append(
            f"{name}: down sky/fixed/ground={sky.cur_down:.4f}/{fixed.cur_down:.4f}/{ground.cur_down:.4f}, "
            f"up sky/ground={sky.cur_up:.4f}/{ground.cur_up:.4f}" + (f" [failed: {', '.join(failed)}]" if failed else "")
        )
    acceptance_report(6, ok, "; ".join(parts))


# --------------------------------------------------------------------------- 7

def test_criterion_7_latency_trend(acceptance_report):
    base = validate_and_load(PRESET_DIR / FLIGHTS["pacific"]).scenario
    sc = replace(base, horizon=1500, latency_mode=LatencyMode.GEOMETRIC)
    world = build_world(sc)
    window = int(300 / sc.slot_seconds)

    def rtts(mech):
        return [(s.rtt_ms if s.rtt_ms is not None else np.nan) for s in samples(run(sc.with_mechanism(mech), world))]

    fixed = np.array(rtts(FIXED))
    first, last = np.nanmean(fixed[:window]), np.nanmean(fixed[-window:])
    sky = np.array(rtts(SKY))
    spread = np.nanmax(sky) - np.nanmin(sky)
    bound = 2 * sc.ada.H * sc.per_hop_ms + 20
    ok = last - first >= 50 and spread <= bound
    acceptance_report(
        7, ok,
        f"trans-Pacific first 25 min, geometric: FixedSat RTT first/last 5 min {first:.1f}/{last:.1f} ms "
        f"(+{last - first:.1f}, need >= 50); SkyCastle max-min {spread:.1f} ms (bound {bound:.0f})",
    )


# --------------------------------------------------------------------------- 8

def test_criterion_8_ip_changes(acceptance_report, flight_runs):
    sky, ground, fixed = (flight_runs["pacific", m][1] for m in (SKY, GROUND, FIXED))
    ok = (
        sky.ip_changes_per_hour <= 0.5 * ground.ip_changes_per_hour
        and fixed.ip_changes_per_hour == 0
        and sky.handovers_per_hour < ground.handovers_per_hour
    )
    acceptance_report(
        8, ok,
        f"trans-Pacific IP changes/h sky={sky.ip_changes_per_hour:.3f} ground={ground.ip_changes_per_hour:.3f} "
        f"fixed={fixed.ip_changes_per_hour:.3f}; handovers/h sky={sky.handovers_per_hour:.2f} "
        f"ground={ground.handovers_per_hour:.2f}",
    )


# --------------------------------------------------------------------------- 9

def test_criterion_9_overhead_decomposition(acceptance_report, flight_runs, forced_runs):
    logs = {(n, m): v[0] for (n, m), v in flight_runs.items()}
    logs.update({("forced", m): log for m, log in forced_runs[4].items()})
    sky_route = sum(r.route_hops for (_, m), log in logs.items() if m == SKY for r in log)
    sky_route_msgs = sum(
        1 for (_, m), log in logs.items() if m == SKY for r in log for msg in r.messages if msg.kind is MessageKind.ROUTE_UPDATE
    )
    ho_slots = ground_silent = 0
    for (_, m), log in logs.items():
        if m != GROUND:
            continue
        for r in log:
            if r.gs_handovers:
                ho_slots += 1
                ground_silent += r.route_hops <= 0
    slots = broken = 0
    for log in logs.values():
        for r in log:
            slots += 1
            broken += r.control_message_hops != sum(msg.hop_cost for msg in r.messages)
            broken += r.location_hops + r.route_hops != r.control_message_hops
    ok = sky_route == 0 and sky_route_msgs == 0 and ho_slots > 0 and ground_silent == 0 and broken == 0
    acceptance_report(
        9, ok,
        f"SkyCastle route hops={sky_route}; GroundAnchor GS-handover slots={ho_slots}, without route overhead={ground_silent}; "
        f"conservation breaks={broken} over {slots} slots",
    )


# --------------------------------------------------------------------------- 10

def test_criterion_10_determinism(acceptance_report, tmp_path, capsys):
    doc = yaml.safe_load((PRESET_DIR / "starlink.yaml").read_text())
    doc["gs_file"] = str(PRESET_DIR / doc["gs_file"])
    doc["sim"]["horizon_slots"] = 600
    doc["sim"]["random_gs_handovers"] = 5
    path = tmp_path / "det.yaml"
    path.write_text(yaml.safe_dump(doc))
    outs = []
    for k in range(2):
        # nothing may leak between runs through the in-process caches
        world_mod._WORLDS.clear()
        discover_pattern.cache_clear()
        plan_division.cache_clear()
        out = tmp_path / f"run{k}"
        assert cli.main(["run", str(path), "--seed", "3", "--seed", "4", "--out", str(out)]) == 0
        outs.append(out)
    capsys.readouterr()
    compared = differ = 0
    for cell in sorted(p.name for p in outs[0].iterdir() if p.is_dir()):
        for f in ("slots.csv", "summary.csv"):
            compared += 1
            differ += (outs[0] / cell / f).read_bytes() != (outs[1] / cell / f).read_bytes()
    acceptance_report(10, compared == 12 and differ == 0, f"{compared} files compared across two CLI runs, differing={differ}")


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-p", "no:cacheprovider"]))
