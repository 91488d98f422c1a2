"""Mechanism-independent precomputation shared by every run of a scenario.

A single pass over the horizon evaluates satellite geometry for all ground
stations and users, attaches ground stations to satellites, and records
which ground stations are inside a routing-convergence window.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..ada import ClusterDivision, ClusterPattern, deploy_anchors, pattern_discovery
from ..constellation import (
    SPEED_OF_LIGHT_KM_S,
    GroundPoint,
    ShellConfig,
    VisibilityScanner,
    VisibilityTimeline,
    ground_positions,
    interpolate_track,
    satellite_positions,
    visible_union,
)
from .scenario import Scenario


@dataclass
class World:
    shell: ShellConfig
    horizon: int
    slot_seconds: float
    gs_ids: list[str]
    user_ids: list[str]
    # visible satellites per user per slot, highest elevation first
    user_ranked: dict[str, list[tuple[int, ...]]]
    user_track: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    gs_ingress: np.ndarray  # (T, G), -1 when the GS sees nothing
    gs_events: list[list[int]]  # GS indices whose ingress changed at slot t
    unconverged: np.ndarray  # (T, G)
    nearest_gs: dict[str, np.ndarray]
    home_gs: dict[str, np.ndarray]

    def timeline(self, user: str) -> VisibilityTimeline:
        return VisibilityTimeline(node=user, slots=tuple(frozenset(r) for r in self.user_ranked[user]))

    def gs_handover_count(self) -> int:
        return sum(len(e) for e in self.gs_events)


def _world_key(s: Scenario) -> tuple:
    return (
        s.shell,
        s.ground_stations,
        s.users,
        s.horizon,
        s.slot_seconds,
        s.convergence,
        s.forced_gs_handovers,
        s.random_gs_handovers,
        s.rng_seed if s.random_gs_handovers else None,
        s.anchor_hysteresis_slots,
    )


_WORLDS: dict[tuple, World] = {}


def build_world(scenario: Scenario) -> World:
    """Build (or reuse) the world for a scenario; mechanism and latency settings do not matter."""
    key = _world_key(scenario)
    if key not in _WORLDS:
        _WORLDS.clear()  # keep only the most recent world; they can be large
        _WORLDS[key] = _build_world(scenario)
    return _WORLDS[key]


def forced_schedule(scenario: Scenario) -> dict[int, set[int]]:
    """Slot -> GS indices to push onto a different satellite, explicit plus seeded random."""
    index = {g.id: i for i, g in enumerate(scenario.ground_stations)}
    schedule: dict[int, set[int]] = {}
    for gs, slot in scenario.forced_gs_handovers:
        schedule.setdefault(slot, set()).add(index[gs])
    if scenario.random_gs_handovers:
        rng = np.random.default_rng(scenario.rng_seed)
        gs_pick = rng.integers(0, len(scenario.ground_stations), scenario.random_gs_handovers)
        slot_pick = rng.integers(1, scenario.horizon, scenario.random_gs_handovers)
        for g, t in zip(gs_pick.tolist(), slot_pick.tolist()):
            schedule.setdefault(t, set()).add(g)
    return schedule


def _build_world(scenario: Scenario) -> World:
    shell, T, dt = scenario.shell, scenario.horizon, scenario.slot_seconds
    stations = scenario.ground_stations
    G = len(stations)
    gs_lat = np.array([g.point.latitude_deg for g in stations])
    gs_lon = np.array([g.point.longitude_deg for g in stations])
    gs_alt = np.array([g.point.altitude_m for g in stations])
    tracks = {}
    for u in scenario.users:
        wps = [(sec / dt, p) for sec, p in u.waypoints]
        tracks[u.id] = interpolate_track(wps, range(T))
    scan = VisibilityScanner(shell, dt)
    schedule = forced_schedule(scenario)

    gs_ingress = np.full((T, G), -1, dtype=np.int64)
    events = np.zeros((T, G), dtype=bool)
    ranked: dict[str, list[tuple[int, ...]]] = {u.id: [] for u in scenario.users}
    current = np.full(G, -1, dtype=np.int64)
    rows = np.arange(G)
    for t in range(T):
        sats = satellite_positions(shell, t, dt)
        lat = np.concatenate([gs_lat] + [tracks[u.id][0][t : t + 1] for u in scenario.users])
        lon = np.concatenate([gs_lon] + [tracks[u.id][1][t : t + 1] for u in scenario.users])
        alt = np.concatenate([gs_alt] + [tracks[u.id][2][t : t + 1] for u in scenario.users])
        sin_el = scan(t, ground_positions(lat, lon, alt, t * dt), sats)
        vis = np.isfinite(sin_el)

        best = np.argmax(sin_el[:G], axis=1)
        has_any = vis[:G].any(axis=1)
        keep = (current >= 0) & vis[rows, np.maximum(current, 0)]
        new = np.where(keep, current, np.where(has_any, best, -1))
        for g in sorted(schedule.get(t, ())):
            if new[g] < 0:
                continue
            alt_el = sin_el[g].copy()
            alt_el[new[g]] = -np.inf
            cand = int(np.argmax(alt_el))
            if np.isfinite(alt_el[cand]):
                new[g] = cand
        if t > 0:
            events[t] = (new != current) & (new >= 0)
        gs_ingress[t] = new
        current = new

        for i, u in enumerate(scenario.users):
            row = G + i
            idx = np.flatnonzero(vis[row])
            order = idx[np.argsort(-sin_el[row, idx], kind="stable")]
            ranked[u.id].append(tuple(order.tolist()))

    c = scenario.convergence.convergence_slots
    if c > 0:
        csum = np.cumsum(np.vstack([np.zeros((1, G), dtype=np.int64), events.astype(np.int64)]), axis=0)
        lo = np.maximum(np.arange(T) + 1 - c, 0)
        unconverged = (csum[1:] - csum[lo]) > 0
    else:
        unconverged = np.zeros((T, G), dtype=bool)

    nearest, home = {}, {}
    for u in scenario.users:
        lat, lon, _ = tracks[u.id]
        nearest[u.id] = _nearest_station(lat, lon, gs_lat, gs_lon)
        home[u.id] = _hysteretic(nearest[u.id], scenario.anchor_hysteresis_slots)

    return World(
        shell=shell,
        horizon=T,
        slot_seconds=dt,
        gs_ids=[g.id for g in stations],
        user_ids=[u.id for u in scenario.users],
        user_ranked=ranked,
        user_track=tracks,
        gs_ingress=gs_ingress,
        gs_events=[np.flatnonzero(e).tolist() for e in events],
        unconverged=unconverged,
        nearest_gs=nearest,
        home_gs=home,
    )


def _nearest_station(lat: np.ndarray, lon: np.ndarray, gs_lat: np.ndarray, gs_lon: np.ndarray) -> np.ndarray:
    la1, lo1 = np.radians(lat)[:, None], np.radians(lon)[:, None]
    la2, lo2 = np.radians(gs_lat)[None, :], np.radians(gs_lon)[None, :]
    h = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    return np.argmin(h, axis=1)


def _hysteretic(nearest: np.ndarray, hold: int) -> np.ndarray:
    """Follow ``nearest`` only after a different station has been nearest for ``hold`` slots."""
    out = np.empty_like(nearest)
    cur = int(nearest[0])
    streak = 0
    for t, n in enumerate(nearest.tolist()):
        if n != cur:
            streak += 1
            if streak >= hold:
                cur, streak = n, 0
        else:
            streak = 0
        out[t] = cur
    return out


@lru_cache(maxsize=8)
def discover_pattern(
    shell: ShellConfig, reference: GroundPoint, H: int, window: int, slot_seconds: float
) -> ClusterPattern:
    return pattern_discovery(visible_union(reference, shell, window, slot_seconds), H, shell)


@lru_cache(maxsize=8)
def plan_division(
    shell: ShellConfig, reference: GroundPoint, H: int, window: int, slot_seconds: float
) -> ClusterDivision:
    return deploy_anchors(shell, discover_pattern(shell, reference, H, window, slot_seconds))


def nadir_gsl_ms(shell: ShellConfig) -> float:
    return shell.altitude_km / SPEED_OF_LIGHT_KM_S * 1000.0

