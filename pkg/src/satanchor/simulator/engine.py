"""Time-slotted engine driving one mobility mechanism over a scenario."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from ..ada import AssignmentTimeline, ClusterDivision, assign_greedy
from ..constellation import (
    SPEED_OF_LIGHT_KM_S,
    distance_sum,
    ground_positions,
    sat_distance,
    satellite_positions,
    shortest_path,
)
from ..mobility import (
    AnchorState,
    MessageKind,
    MmMessage,
    NodeAddress,
    anchor_states,
    gs_address,
    inter_cluster_handover,
    register_user,
    route_gs_to_user,
    route_user_to_gs,
    update_gs_location,
    update_user_location,
)
from .scenario import LatencyMode, MechanismKind, Scenario
from .world import World, build_world, nadir_gsl_ms, plan_division


@dataclass(frozen=True)
class UserSample:
    user: str
    connected_up: bool
    connected_down: bool
    rtt_ms: float | None
    ingress: int | None
    anchor: int | str | None
    address: str | None
    address_changed: bool
    handover: bool
    warmup: bool
    server_gs: str | None = None
    server_ingress: int | None = None
    hops_down: int | None = None
    hops_up: int | None = None


@dataclass(frozen=True)
class SlotRecord:
    t: int
    users: tuple[UserSample, ...]
    messages: tuple[MmMessage, ...]
    control_message_hops: int
    location_hops: int
    route_hops: int
    gs_handovers: int


@dataclass
class RunLog:
    scenario: Scenario
    records: list[SlotRecord]
    latency_mode: LatencyMode
    division: ClusterDivision | None = None

    def __iter__(self) -> Iterator[SlotRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> SlotRecord:
        return self.records[i]


def probe_rtt(
    path_down: Sequence[int] | None,
    path_up: Sequence[int] | None,
    *,
    per_hop_ms: float,
    gsl_oneway_ms: Sequence[float],
    server_ms: float = 0.0,
    mode: LatencyMode = LatencyMode.PER_HOP,
    positions: np.ndarray | None = None,
) -> float:
    """Round-trip time of a down/up path pair.

    ``gsl_oneway_ms`` holds the one-way delay of each ground link on the
    route (user link, GS link); each is crossed once per direction.  In
    geometric mode ISL delay is the summed segment length over ``c`` and
    ``positions`` (ECI km, indexed by satellite id) is required.
    """
    if path_down is None or path_up is None:
        raise ValueError("probe_rtt called on a disconnected direction")
    ground = 2.0 * float(sum(gsl_oneway_ms))
    if mode == LatencyMode.PER_HOP:
        hops = (len(path_down) - 1) + (len(path_up) - 1)
        return hops * per_hop_ms + ground + server_ms
    if positions is None:
        raise ValueError("geometric mode needs satellite positions")
    isl_km = 0.0
    for path in (path_down, path_up):
        if len(path) > 1:
            pts = positions[np.asarray(path)]
            isl_km += float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    return isl_km / SPEED_OF_LIGHT_KM_S * 1000.0 + ground + server_ms


# --------------------------------------------------------------------------- #
# Shared per-slot context
# --------------------------------------------------------------------------- #

@dataclass
class _Slot:
    t: int
    gs_ingress: np.ndarray
    unconverged: np.ndarray
    events: list[int]
    sats: np.ndarray | None
    user_ground: dict[str, np.ndarray]
    gs_ground: np.ndarray | None


@dataclass
class _UserOutcome:
    ingress: int | None
    anchor: int | str | None
    address: NodeAddress | None
    address_changed: bool
    handover: bool
    warmup: bool
    server_gs: int | None
    path_down: list[int] | None
    path_up: list[int] | None


class _Mechanism:
    def __init__(self, scenario: Scenario, world: World):
        self.scenario = scenario
        self.world = world
        self.shell = scenario.shell
        self.last_ingress: dict[str, int | None] = {u: None for u in world.user_ids}
        self.registered_once: dict[str, bool] = {u: False for u in world.user_ids}

    def infra_messages(self, slot: _Slot) -> list[MmMessage]:
        raise NotImplementedError

    def user_step(self, user: str, slot: _Slot, out: list[MmMessage]) -> _UserOutcome:
        raise NotImplementedError

    def _ingress_for(self, user: str, t: int) -> int | None:
        """Baseline attachment: keep the current satellite while visible, else highest elevation."""
        ranked = self.world.user_ranked[user][t]
        if not ranked:
            return None
        cur = self.last_ingress[user]
        if cur is not None and cur in ranked:
            return cur
        return ranked[0]

    def _flood(self, slot: _Slot) -> list[MmMessage]:
        cost = distance_sum(self.shell)
        return [
            MmMessage(MessageKind.ROUTE_UPDATE, self.world.gs_ids[g], int(slot.gs_ingress[g]), "*", cost)
            for g in sorted(slot.events, key=lambda g: self.world.gs_ids[g])
        ]


class SkyCastleMechanism(_Mechanism):
    """Satellite anchors tracking users and GSs; passing-anchor routes in both directions."""

    def __init__(self, scenario: Scenario, world: World):
        super().__init__(scenario, world)
        ada = scenario.ada
        self.division = plan_division(
            self.shell, scenario.reference_point, ada.H, ada.discovery_window, scenario.slot_seconds
        )
        self.anchors = anchor_states(self.division)
        self.plans: dict[str, AssignmentTimeline] = {u: assign_greedy(world.timeline(u), self.division) for u in world.user_ids}
        self.address: dict[str, NodeAddress | None] = {u: None for u in world.user_ids}
        self.user_anchor: dict[str, int | None] = {u: None for u in world.user_ids}
        self.gs_addresses = [gs_address(i) for i in range(len(world.gs_ids))]
        for g, ing in enumerate(world.gs_ingress[0].tolist()):
            if ing >= 0:
                update_gs_location(self.anchors.values(), self.gs_addresses[g], ing, 0, self.shell)

    def infra_messages(self, slot: _Slot) -> list[MmMessage]:
        msgs = []
        for g in sorted(slot.events, key=lambda g: self.world.gs_ids[g]):
            msgs += update_gs_location(
                self.anchors.values(), self.gs_addresses[g], int(slot.gs_ingress[g]), slot.t, self.shell,
                subject=self.world.gs_ids[g],
            )
        return msgs

    def user_step(self, user: str, slot: _Slot, out: list[MmMessage]) -> _UserOutcome:
        t = slot.t
        plan = self.plans[user]
        ing, anc = plan.ingress[t], plan.anchor[t]
        changed = warmup = False
        if ing is not None:
            address = self.address[user]
            if address is None:
                address, msg = register_user(self.anchors[anc], user, ing, t, self.shell)
                out.append(msg)
                warmup = not self.registered_once[user]
                self.registered_once[user] = True
            elif anc != self.user_anchor[user]:
                address, msgs = inter_cluster_handover(
                    user, address, self.anchors[self.user_anchor[user]], self.anchors[anc], ing, t, self.shell
                )
                out += msgs
                changed = True
            else:
                msg = update_user_location(self.anchors[anc], address, ing, t, self.shell, user)
                if msg is not None:
                    out.append(msg)
            self.address[user] = address
            self.user_anchor[user] = anc
        g = int(self.world.home_gs[user][t])
        down = up = None
        gs_ing = int(slot.gs_ingress[g])
        if ing is not None and not warmup and gs_ing >= 0:
            address = self.address[user]
            down = route_gs_to_user(gs_ing, address, self.anchors, self.shell)
            if down is not None and down[-1] != ing:
                down = None
            up = route_user_to_gs(ing, self.gs_addresses[g], self.division, self.anchors, self.shell)
            if up is not None and up[-1] != gs_ing:
                up = None
        return _UserOutcome(
            ing, self.user_anchor[user] if ing is not None else None, self.address[user], changed,
            self._handover(user, ing), warmup, g, down, up,
        )

    def _handover(self, user: str, ing: int | None) -> bool:
        prev = self.last_ingress[user]
        if ing is None:
            return False
        self.last_ingress[user] = ing
        return prev is not None and prev != ing


class GroundAnchorMechanism(_Mechanism):
    """Anchor at a nearby GS; updates and data ride terrestrial-style routing through the GS."""

    def __init__(self, scenario: Scenario, world: World):
        super().__init__(scenario, world)
        self.anchor_gs: dict[str, int | None] = {u: None for u in world.user_ids}
        self.address: dict[str, NodeAddress | None] = {u: None for u in world.user_ids}
        self.binding: dict[str, int | None] = {u: None for u in world.user_ids}
        self.next_suffix = [0] * len(world.gs_ids)

    def infra_messages(self, slot: _Slot) -> list[MmMessage]:
        return self._flood(slot)

    def _send(self, kind: MessageKind, user: str, ing: int, g: int, slot: _Slot, out: list[MmMessage]) -> bool:
        gs_ing = int(slot.gs_ingress[g])
        if gs_ing < 0:
            return False
        out.append(MmMessage(kind, user, ing, self.world.gs_ids[g], sat_distance(ing, gs_ing, self.shell)))
        return not slot.unconverged[g]

    def user_step(self, user: str, slot: _Slot, out: list[MmMessage]) -> _UserOutcome:
        t = slot.t
        ing = self._ingress_for(user, t)
        desired = int(self.world.home_gs[user][t])
        changed = warmup = False
        if ing is not None:
            cur = self.anchor_gs[user]
            registered_now = False
            if cur is None or desired != cur:
                if self._send(MessageKind.USER_REGISTER, user, ing, desired, slot, out):
                    changed = cur is not None
                    self.anchor_gs[user] = desired
                    self.address[user] = NodeAddress(self.world.gs_ids[desired], self.next_suffix[desired])
                    self.next_suffix[desired] += 1
                    self.binding[user] = ing
                    registered_now = True
            if self.anchor_gs[user] is not None and not registered_now and self.binding[user] != ing:
                if self._send(MessageKind.USER_LOCATION_UPDATE, user, ing, self.anchor_gs[user], slot, out):
                    self.binding[user] = ing
        if not self.registered_once[user]:
            warmup = True
            self.registered_once[user] = self.anchor_gs[user] is not None
        anchor = self.anchor_gs[user]
        down = up = None
        if ing is not None and anchor is not None and not warmup:
            a_ing = int(slot.gs_ingress[anchor])
            if a_ing >= 0 and not slot.unconverged[anchor] and self.binding[user] == ing:
                down = shortest_path(a_ing, ing, self.shell)
            dest = anchor if self.scenario.uplink_via == "anchor" else int(self.world.nearest_gs[user][t])
            d_ing = int(slot.gs_ingress[dest])
            if d_ing >= 0 and not slot.unconverged[dest]:
                up = shortest_path(ing, d_ing, self.shell)
        handover = ing is not None and self.last_ingress[user] is not None and ing != self.last_ingress[user]
        if ing is not None:
            self.last_ingress[user] = ing
        return _UserOutcome(
            ing, self.world.gs_ids[anchor] if anchor is not None else None, self.address[user], changed,
            handover, warmup, anchor, down, up,
        )


class FixedSatAnchorMechanism(_Mechanism):
    """The user's first ingress satellite anchors it for the whole run."""

    def __init__(self, scenario: Scenario, world: World):
        super().__init__(scenario, world)
        self.all_sats = frozenset(range(self.shell.num_sats))
        self.anchors: dict[int, AnchorState] = {}
        self.anchor: dict[str, int | None] = {u: None for u in world.user_ids}
        self.address: dict[str, NodeAddress | None] = {u: None for u in world.user_ids}

    def infra_messages(self, slot: _Slot) -> list[MmMessage]:
        return self._flood(slot)

    def user_step(self, user: str, slot: _Slot, out: list[MmMessage]) -> _UserOutcome:
        t = slot.t
        ing = self._ingress_for(user, t)
        warmup = False
        if ing is not None:
            if self.anchor[user] is None:
                state = self.anchors.setdefault(ing, AnchorState(anchor=ing, members=self.all_sats))
                self.address[user], msg = register_user(state, user, ing, t, self.shell)
                out.append(msg)
                self.anchor[user] = ing
                warmup = True
            else:
                msg = update_user_location(self.anchors[self.anchor[user]], self.address[user], ing, t, self.shell, user)
                if msg is not None:
                    out.append(msg)
        anchor = self.anchor[user]
        g = int(self.world.home_gs[user][t])
        gs_ing = int(slot.gs_ingress[g])
        down = up = None
        if ing is not None and anchor is not None and not warmup and gs_ing >= 0:
            down = shortest_path(gs_ing, anchor, self.shell) + shortest_path(anchor, ing, self.shell)[1:]
            if not slot.unconverged[g]:
                up = shortest_path(ing, gs_ing, self.shell)
        handover = ing is not None and self.last_ingress[user] is not None and ing != self.last_ingress[user]
        if ing is not None:
            self.last_ingress[user] = ing
        return _UserOutcome(ing, anchor, self.address[user], False, handover, warmup, g, down, up)


_MECHANISMS = {
    MechanismKind.SKYCASTLE: SkyCastleMechanism,
    MechanismKind.GROUND_ANCHOR: GroundAnchorMechanism,
    MechanismKind.FIXED_SAT_ANCHOR: FixedSatAnchorMechanism,
}


# --------------------------------------------------------------------------- #
# Slot loop
# --------------------------------------------------------------------------- #

def run(scenario: Scenario, world: World | None = None) -> RunLog:
    """Simulate ``scenario`` slot by slot and return the per-slot log."""
    world = world or build_world(scenario)
    mech = _MECHANISMS[scenario.mechanism](scenario, world)
    geometric = scenario.latency_mode == LatencyMode.GEOMETRIC
    shell, dt = scenario.shell, scenario.slot_seconds
    nadir = nadir_gsl_ms(shell)
    stations = scenario.ground_stations
    gs_lat = np.array([g.point.latitude_deg for g in stations])
    gs_lon = np.array([g.point.longitude_deg for g in stations])
    gs_alt = np.array([g.point.altitude_m for g in stations])
    users = sorted(world.user_ids)
    records = []
    for t in range(scenario.horizon):
        sats = user_ground = gs_ground = None
        if geometric:
            sats = satellite_positions(shell, t, dt)
            gs_ground = ground_positions(gs_lat, gs_lon, gs_alt, t * dt)
            user_ground = {}
            for u in users:
                lat, lon, alt = world.user_track[u]
                user_ground[u] = ground_positions(lat[t : t + 1], lon[t : t + 1], alt[t : t + 1], t * dt)[0]
        slot = _Slot(t, world.gs_ingress[t], world.unconverged[t], world.gs_events[t], sats, user_ground, gs_ground)
        messages = mech.infra_messages(slot)
        samples = []
        for u in users:
            o = mech.user_step(u, slot, messages)
            if o.address_changed:
                # connections bound to the old address are reset; both directions lose this slot
                o = replace(o, path_down=None, path_up=None)
            rtt = None
            if o.path_down is not None and o.path_up is not None:
                server = stations[o.server_gs]
                if geometric:
                    gsl = (
                        float(np.linalg.norm(sats[o.ingress] - user_ground[u])),
                        float(np.linalg.norm(sats[o.path_down[0]] - gs_ground[o.server_gs])),
                    )
                    gsl = tuple(d / SPEED_OF_LIGHT_KM_S * 1000.0 for d in gsl)
                else:
                    gsl = (nadir, nadir)
                rtt = probe_rtt(
                    o.path_down, o.path_up, per_hop_ms=scenario.per_hop_ms, gsl_oneway_ms=gsl,
                    server_ms=server.server_ms, mode=scenario.latency_mode, positions=sats,
                )
            server_ingress = int(world.gs_ingress[t][o.server_gs]) if o.server_gs is not None else None
            samples.append(
                UserSample(
                    user=u,
                    connected_up=o.path_up is not None,
                    connected_down=o.path_down is not None,
                    rtt_ms=rtt,
                    ingress=o.ingress,
                    anchor=o.anchor,
                    address=str(o.address) if o.address is not None else None,
                    address_changed=o.address_changed,
                    handover=o.handover,
                    warmup=o.warmup,
                    server_gs=world.gs_ids[o.server_gs] if o.server_gs is not None else None,
                    server_ingress=server_ingress if server_ingress is not None and server_ingress >= 0 else None,
                    hops_down=len(o.path_down) - 1 if o.path_down is not None else None,
                    hops_up=len(o.path_up) - 1 if o.path_up is not None else None,
                )
            )
        route = sum(m.hop_cost for m in messages if m.kind == MessageKind.ROUTE_UPDATE)
        total = sum(m.hop_cost for m in messages)
        records.append(
            SlotRecord(
                t=t,
                users=tuple(samples),
                messages=tuple(messages),
                control_message_hops=total,
                location_hops=total - route,
                route_hops=route,
                gs_handovers=len(world.gs_events[t]),
            )
        )
    return RunLog(
        scenario=scenario,
        records=records,
        latency_mode=scenario.latency_mode,
        division=getattr(mech, "division", None),
    )
