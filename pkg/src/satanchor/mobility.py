"""Satellite-anchor location management, handover and passing-anchor routing.

Each anchor keeps two tables: bindings for the users it allocated
addresses to, and bindings for every ground station in the network.  User
addresses carry the allocating anchor as prefix, so any satellite can find
a user's anchor from the destination address alone.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .ada import ClusterDivision
from .constellation import ShellConfig, sat_distance, shortest_path

GS_PREFIX = "gs"


class MobilityError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class NodeAddress:
    prefix: int | str
    suffix: int

    @property
    def is_gs(self) -> bool:
        return self.prefix == GS_PREFIX

    def __str__(self) -> str:
        return f"{self.prefix}:{self.suffix}"


def gs_address(index: int) -> NodeAddress:
    """Operator-assigned, run-constant address of the ``index``-th ground station."""
    return NodeAddress(GS_PREFIX, index)


class MessageKind(str, enum.Enum):
    USER_REGISTER = "UserRegister"
    USER_LOCATION_UPDATE = "UserLocationUpdate"
    GS_LOCATION_UPDATE = "GsLocationUpdate"
    ADDRESS_GRANT = "AddressGrant"
    # flooded link-state update; only emitted by the routing-based baselines
    ROUTE_UPDATE = "RouteUpdate"


@dataclass(frozen=True)
class MmMessage:
    kind: MessageKind
    subject: str
    ingress: int
    destination_anchor: int | str
    hop_cost: int


@dataclass(frozen=True)
class LocationBinding:
    node_address: NodeAddress
    ingress: int
    updated_at: int


@dataclass
class AnchorState:
    anchor: int
    members: frozenset[int]
    user_bindings: dict[NodeAddress, LocationBinding] = field(default_factory=dict)
    gs_bindings: dict[NodeAddress, LocationBinding] = field(default_factory=dict)
    next_suffix: int = 0


def anchor_states(division: ClusterDivision) -> dict[int, AnchorState]:
    return {a: AnchorState(anchor=a, members=m) for a, m in division.clusters.items()}


def register_user(state: AnchorState, user: str, ingress: int, t: int, shell: ShellConfig) -> tuple[NodeAddress, MmMessage]:
    """Allocate a fresh address under ``state.anchor`` and bind it to ``ingress``."""
    if ingress not in state.members:
        raise MobilityError(f"wrong anchor: satellite {ingress} is not in the cluster of anchor {state.anchor}")
    address = NodeAddress(state.anchor, state.next_suffix)
    state.next_suffix += 1
    state.user_bindings[address] = LocationBinding(address, ingress, t)
    msg = MmMessage(MessageKind.USER_REGISTER, user, ingress, state.anchor, sat_distance(ingress, state.anchor, shell))
    return address, msg


def deregister_user(state: AnchorState, address: NodeAddress) -> None:
    """Drop a user binding; free of charge and silent if already gone."""
    state.user_bindings.pop(address, None)


def update_user_location(
    state: AnchorState, address: NodeAddress, new_ingress: int, t: int, shell: ShellConfig, user: str = ""
) -> MmMessage | None:
    """Intra-cluster move.  Returns the update message, or ``None`` for a no-op."""
    binding = state.user_bindings.get(address)
    if binding is None:
        raise MobilityError(f"address {address} is not registered at anchor {state.anchor}")
    if new_ingress not in state.members:
        raise MobilityError(
            f"satellite {new_ingress} is outside the cluster of anchor {state.anchor}; inter-cluster handover required"
        )
    if binding.ingress == new_ingress:
        return None
    state.user_bindings[address] = LocationBinding(address, new_ingress, t)
    return MmMessage(
        MessageKind.USER_LOCATION_UPDATE, user, new_ingress, state.anchor, sat_distance(new_ingress, state.anchor, shell)
    )


def update_gs_location(
    anchors: Iterable[AnchorState],
    gs: NodeAddress,
    new_ingress: int,
    t: int,
    shell: ShellConfig,
    known_gs: Iterable[NodeAddress] | None = None,
    subject: str = "",
) -> list[MmMessage]:
    """Broadcast a ground station's new ingress satellite to every anchor."""
    if not gs.is_gs or (known_gs is not None and gs not in set(known_gs)):
        raise MobilityError(f"unknown ground station {gs}")
    messages = []
    for state in anchors:
        state.gs_bindings[gs] = LocationBinding(gs, new_ingress, t)
        messages.append(
            MmMessage(
                MessageKind.GS_LOCATION_UPDATE,
                subject or str(gs),
                new_ingress,
                state.anchor,
                sat_distance(new_ingress, state.anchor, shell),
            )
        )
    return messages


def inter_cluster_handover(
    user: str,
    old_address: NodeAddress,
    old_anchor: AnchorState,
    new_anchor: AnchorState,
    new_ingress: int,
    t: int,
    shell: ShellConfig,
) -> tuple[NodeAddress, list[MmMessage]]:
    """Move a user to a new cluster: deregister at the old anchor, register at the new one."""
    if old_anchor.anchor == new_anchor.anchor:
        raise MobilityError("old and new anchor coincide; this is an intra-cluster handover")
    if old_address not in old_anchor.user_bindings:
        raise MobilityError(f"address {old_address} is not registered at anchor {old_anchor.anchor}")
    if new_ingress not in new_anchor.members:
        raise MobilityError(f"wrong anchor: satellite {new_ingress} is not in the cluster of anchor {new_anchor.anchor}")
    deregister_user(old_anchor, old_address)
    address, msg = register_user(new_anchor, user, new_ingress, t, shell)
    return address, [msg]


def _join(first: list[int], second: list[int]) -> list[int]:
    return first + second[1:]


def route_gs_to_user(
    gs_ingress: int, user_address: NodeAddress, anchors: Mapping[int, AnchorState], shell: ShellConfig
) -> list[int] | None:
    """GS ingress -> user's anchor (from the prefix) -> user's ingress (from the binding)."""
    state = anchors.get(user_address.prefix) if not user_address.is_gs else None
    if state is None:
        return None
    binding = state.user_bindings.get(user_address)
    if binding is None:
        return None
    return _join(shortest_path(gs_ingress, state.anchor, shell), shortest_path(state.anchor, binding.ingress, shell))


def route_user_to_gs(
    user_ingress: int,
    dest: NodeAddress,
    division: ClusterDivision,
    anchors: Mapping[int, AnchorState],
    shell: ShellConfig,
) -> list[int] | None:
    """User ingress -> its cluster anchor (default route) -> the GS's ingress from the anchor's table."""
    if not dest.is_gs:
        return None
    state = anchors[division.anchor_of[user_ingress]]
    binding = state.gs_bindings.get(dest)
    if binding is None:
        return None
    return _join(shortest_path(user_ingress, state.anchor, shell), shortest_path(state.anchor, binding.ingress, shell))
