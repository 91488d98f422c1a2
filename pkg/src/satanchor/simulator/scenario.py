"""Scenario description consumed by the slot engine."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from ..ada import AdaParams, default_H
from ..constellation import GroundPoint, ShellConfig, default_discovery_window


class MechanismKind(str, enum.Enum):
    SKYCASTLE = "skycastle"
    GROUND_ANCHOR = "ground_anchor"
    FIXED_SAT_ANCHOR = "fixed_sat_anchor"


class LatencyMode(str, enum.Enum):
    PER_HOP = "per_hop"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class ConvergenceModel:
    convergence_slots: int = 10

    def __post_init__(self) -> None:
        if self.convergence_slots < 0:
            raise ValueError("convergence_slots must be ≥ 0")


@dataclass(frozen=True)
class GroundStation:
    id: str
    point: GroundPoint
    server_ms: float = 5.0


@dataclass(frozen=True)
class UserTrace:
    """Waypoints as ``(seconds since run start, position)``."""

    id: str
    waypoints: tuple[tuple[float, GroundPoint], ...]


@dataclass(frozen=True)
class Scenario:
    shell: ShellConfig
    ground_stations: tuple[GroundStation, ...]
    users: tuple[UserTrace, ...]
    horizon: int
    mechanism: MechanismKind = MechanismKind.SKYCASTLE
    ada: AdaParams | None = None
    reference_point: GroundPoint = GroundPoint(40.0, 0.0)
    convergence: ConvergenceModel = ConvergenceModel()
    slot_seconds: float = 1.0
    per_hop_ms: float = 4.0
    latency_mode: LatencyMode = LatencyMode.PER_HOP
    rng_seed: int = 0
    anchor_hysteresis_slots: int = 60
    # "anchor": ground-anchor uplink ends at the anchor GS; "nearest": at the nearest GS
    uplink_via: str = "anchor"
    forced_gs_handovers: tuple[tuple[str, int], ...] = ()
    random_gs_handovers: int = 0
    name: str = "scenario"

    def __post_init__(self) -> None:
        errors = self.errors()
        if errors:
            raise ValueError("; ".join(errors))
        if self.ada is None:
            object.__setattr__(
                self,
                "ada",
                AdaParams(H=default_H(self.shell), discovery_window=default_discovery_window(self.shell, self.slot_seconds)),
            )

    def errors(self) -> list[str]:
        errs = []
        if self.horizon < 2:
            errs.append("sim.horizon_slots must be ≥ 2")
        if self.slot_seconds <= 0:
            errs.append("sim.slot_seconds must be > 0")
        if self.per_hop_ms < 0:
            errs.append("sim.per_hop_ms must be ≥ 0")
        if not self.ground_stations:
            errs.append("gs: at least one ground station is required")
        ids = [g.id for g in self.ground_stations]
        if len(set(ids)) != len(ids):
            errs.append("gs: duplicate ids")
        uids = [u.id for u in self.users]
        if len(set(uids)) != len(uids):
            errs.append("users: duplicate ids")
        for u in self.users:
            if not u.waypoints:
                errs.append(f"users.{u.id}: no waypoints")
        known = set(ids)
        for gs, slot in self.forced_gs_handovers:
            if gs not in known:
                errs.append(f"sim.forced_gs_handovers: unknown ground station {gs!r}")
            if not 0 <= slot < self.horizon:
                errs.append(f"sim.forced_gs_handovers: slot {slot} outside horizon")
        if self.uplink_via not in ("anchor", "nearest"):
            errs.append("sim.uplink_via must be 'anchor' or 'nearest'")
        if self.anchor_hysteresis_slots < 1:
            errs.append("sim.anchor_hysteresis_slots must be ≥ 1")
        if self.random_gs_handovers < 0:
            errs.append("sim.random_gs_handovers must be ≥ 0")
        return errs

    def with_mechanism(self, mechanism: MechanismKind | str, seed: int | None = None) -> Scenario:
        return replace(
            self, mechanism=MechanismKind(mechanism), rng_seed=self.rng_seed if seed is None else seed
        )
