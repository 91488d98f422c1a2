from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from satanchor.constellation import GroundPoint, ShellConfig
from satanchor.simulator import GroundStation, Scenario, UserTrace
from satanchor.simulator.world import World

STARLINK = ShellConfig(72, 22, 540.0, 53.0)
FLIGHTS = {"pacific": "starlink_flight_pacific.yaml", "atlantic": "starlink_flight_atlantic.yaml"}
ACCEPTANCE_LINES: list[str] = []


def small_shell(x: int = 6, y: int = 6) -> ShellConfig:
    return ShellConfig(x, y, 550.0, 53.0)


def bfs_distances(src: int, shell: ShellConfig) -> list[int]:
    """Hop counts from ``src`` over the +Grid adjacency graph (independent of the closed form)."""
    X, Y = shell.num_orbits, shell.sats_per_orbit
    dist = [-1] * (X * Y)
    dist[src] = 0
    q = deque([src])
    while q:
        s = q.popleft()
        x, y = divmod(s, Y)
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            n = (nx % X) * Y + (ny % Y)
            if dist[n] < 0:
                dist[n] = dist[s] + 1
                q.append(n)
    return dist


def synthetic_world(
    shell: ShellConfig,
    user_slots: dict[str, list[tuple[int, ...]]],
    gs_ingress: list[list[int]],
    convergence_slots: int = 10,
    home: dict[str, list[int]] | None = None,
) -> World:
    """Hand-built world: per-slot ranked user visibility and GS ingress satellites.

    The convergence mask is recomputed here from the ingress changes, so
    tests do not depend on the builder's implementation.
    """
    ing = np.array(gs_ingress, dtype=np.int64)
    T, G = ing.shape
    events = [[] for _ in range(T)]
    for t in range(1, T):
        for g in range(G):
            if ing[t, g] != ing[t - 1, g] and ing[t, g] >= 0:
                events[t].append(g)
    unconverged = np.zeros((T, G), dtype=bool)
    for t, gs in enumerate(events):
        for g in gs:
            unconverged[t : t + convergence_slots, g] = True
    users = sorted(user_slots)
    home = home or {u: [0] * T for u in users}
    return World(
        shell=shell,
        horizon=T,
        slot_seconds=1.0,
        gs_ids=[f"g{i}" for i in range(G)],
        user_ids=users,
        user_ranked={u: list(user_slots[u]) for u in users},
        user_track={u: (np.zeros(T), np.zeros(T), np.zeros(T)) for u in users},
        gs_ingress=ing,
        gs_events=events,
        unconverged=unconverged,
        nearest_gs={u: np.array(home[u]) for u in users},
        home_gs={u: np.array(home[u]) for u in users},
    )


def synthetic_scenario(shell: ShellConfig, world: World, convergence_slots: int = 10, **kw) -> Scenario:
    from satanchor.simulator import ConvergenceModel

    return Scenario(
        shell=shell,
        ground_stations=tuple(GroundStation(g, GroundPoint(0.0, 0.0), server_ms=kw.pop("server_ms", 5.0)) for g in world.gs_ids),
        users=tuple(UserTrace(u, ((0.0, GroundPoint(0.0, 0.0)),)) for u in world.user_ids),
        horizon=world.horizon,
        convergence=ConvergenceModel(convergence_slots),
        **kw,
    )


@pytest.fixture(scope="session")
def flight_runs():
    """Run logs and summaries of both flight presets under all three mechanisms (shared, ~1.5 min)."""
    from satanchor.config import PRESET_DIR, validate_and_load
    from satanchor.metrics import summarize
    from satanchor.simulator import MechanismKind, build_world, run

    out = {}
    for name, preset in FLIGHTS.items():
        sc = validate_and_load(PRESET_DIR / preset).scenario
        world = build_world(sc)
        for mech in MechanismKind:
            s = sc.with_mechanism(mech)
            log = run(s, world)
            out[name, mech] = (log, summarize(log.records, s.slot_seconds, mechanism=mech.value))
    return out


@pytest.fixture
def acceptance_report():
    def report(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
