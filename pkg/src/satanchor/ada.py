"""Anchor deployment and assignment.

Clusters are built by sliding one fixed offset pattern over the torus:

* ``pattern_discovery`` picks the densest set of visible satellites that
  can share an anchor without exceeding the detour budget ``H``;
* ``deploy_anchors`` greedily covers the constellation with instances of
  that pattern;
* ``assign_greedy`` walks one user's visibility timeline choosing ingress
  satellites so that anchor changes are as rare as possible.

``assign_bruteforce`` and the ``*_oracle`` helpers are exhaustive
reference implementations used by the test-suite.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constellation import GridCoord, ShellConfig, VisibilityTimeline, distance_row, grid_distance, sat_distance

Offset = tuple[int, int]


@dataclass(frozen=True)
class AdaParams:
    H: int
    discovery_window: int

    def __post_init__(self) -> None:
        if self.H < 0:
            raise ValueError("H must be ≥ 0")
        if self.discovery_window < 1:
            raise ValueError("discovery_window must be ≥ 1")


def default_H(shell: ShellConfig) -> int:
    return (shell.num_orbits + shell.sats_per_orbit) // 2


@dataclass(frozen=True)
class ClusterPattern:
    """Relative torus offsets ``(dx, dy)`` of a cluster around its anchor."""

    offsets: frozenset[Offset]
    built_with_H: int

    def __post_init__(self) -> None:
        if (0, 0) not in self.offsets:
            raise ValueError("pattern must contain the anchor offset (0, 0)")

    def instance(self, anchor: int, shell: ShellConfig) -> frozenset[int]:
        """Satellite ids covered by the pattern placed at ``anchor``."""
        x, y = divmod(anchor, shell.sats_per_orbit)
        return frozenset(shell.sat_id((x + dx, y + dy)) for dx, dy in self.offsets)

    def radius(self) -> int:
        return max(abs(dx) + abs(dy) for dx, dy in self.offsets)


def _signed(d: int, n: int) -> int:
    d %= n
    return d - n if d > n // 2 else d


def relative_offset(anchor: int, sat: int, shell: ShellConfig) -> Offset:
    ax, ay = divmod(anchor, shell.sats_per_orbit)
    sx, sy = divmod(sat, shell.sats_per_orbit)
    return _signed(sx - ax, shell.num_orbits), _signed(sy - ay, shell.sats_per_orbit)


@dataclass
class ClusterDivision:
    """Total satellite -> anchor map together with its inverse."""

    anchor_of: dict[int, int]
    clusters: dict[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.clusters:
            members: dict[int, set[int]] = {}
            for sat, anc in self.anchor_of.items():
                members.setdefault(anc, set()).add(sat)
            self.clusters = {a: frozenset(m) for a, m in sorted(members.items())}

    @classmethod
    def from_clusters(cls, clusters: Mapping[int, Iterable[int]]) -> ClusterDivision:
        anchor_of = {s: a for a, ms in clusters.items() for s in ms}
        return cls(anchor_of=dict(sorted(anchor_of.items())))

    @property
    def anchors(self) -> list[int]:
        return sorted(self.clusters)

    def partition_errors(self, shell: ShellConfig) -> list[str]:
        errors = []
        if sorted(self.anchor_of) != list(range(shell.num_sats)):
            errors.append("anchor_of does not cover every satellite exactly once")
        seen: set[int] = set()
        for anchor, members in self.clusters.items():
            if anchor not in members:
                errors.append(f"anchor {anchor} is not a member of its own cluster")
            if seen & members:
                errors.append(f"cluster {anchor} overlaps another cluster")
            seen |= members
            for s in members:
                if self.anchor_of.get(s) != anchor:
                    errors.append(f"satellite {s} listed under {anchor} but mapped to {self.anchor_of.get(s)}")
        if seen != set(range(shell.num_sats)):
            errors.append("clusters do not cover the satellite set")
        return errors

    def to_dict(self) -> dict:
        return {
            "anchors": self.anchors,
            "clusters": {str(a): sorted(m) for a, m in self.clusters.items()},
        }


@dataclass(frozen=True)
class AssignmentTimeline:
    ingress: tuple[int | None, ...]
    anchor: tuple[int | None, ...]

    def __len__(self) -> int:
        return len(self.ingress)

    def anchor_changes(self) -> int:
        """Anchor switches between connected slots (initial attachment not counted)."""
        changes = 0
        last = None
        for a in self.anchor:
            if a is None:
                continue
            if last is not None and a != last:
                changes += 1
            last = a
        return changes

    def ingress_changes(self) -> int:
        changes = 0
        last = None
        for s in self.ingress:
            if s is None:
                continue
            if last is not None and s != last:
                changes += 1
            last = s
        return changes


# --------------------------------------------------------------------------- #
# Objective, detour bound and the delay constraint
# --------------------------------------------------------------------------- #

def objective_value(assignments: Sequence[AssignmentTimeline], division: ClusterDivision) -> int:
    """Number of (user, k) with the same anchor at slots ``k-1`` and ``k``."""
    horizons = {len(a) for a in assignments}
    if len(horizons) > 1:
        raise ValueError(f"assignment timelines have mismatched horizons {sorted(horizons)}")
    total = 0
    for timeline in assignments:
        for prev, cur in zip(timeline.ingress, timeline.ingress[1:]):
            if prev is not None and cur is not None and division.anchor_of[prev] == division.anchor_of[cur]:
                total += 1
    return total


def detour_bound(member: GridCoord, anchor: GridCoord, shell: ShellConfig) -> int:
    """Worst-case extra hops when traffic to ``member`` is relayed through ``anchor``."""
    return 2 * grid_distance(anchor, member, shell)


@dataclass(frozen=True)
class DelayAudit:
    passed: bool
    H: int
    worst_member: int | None
    worst_anchor: int | None
    worst_detour: int

    @property
    def slack(self) -> int:
        return self.H - self.worst_detour


def check_delay_constraint(division: ClusterDivision, H: int, shell: ShellConfig) -> DelayAudit:
    """Check every member's detour bound against ``H``; report the tightest pair."""
    worst = (-1, None, None)
    for anchor, members in division.clusters.items():
        row = distance_row(anchor, shell)
        for m in members:
            detour = 2 * int(row[m])
            if detour > worst[0]:
                worst = (detour, m, anchor)
    detour, member, anchor = worst
    detour = max(detour, 0)
    return DelayAudit(passed=detour <= H, H=H, worst_member=member, worst_anchor=anchor, worst_detour=detour)


def delay_constraint_oracle(division: ClusterDivision, H: int, shell: ShellConfig) -> bool:
    """All-triples evaluation of the delay constraint (tests only, O(n^2))."""
    n = shell.num_sats
    dist = np.array([distance_row(i, shell) for i in range(n)])
    for i in range(n):
        a = division.anchor_of[i]
        if np.any(dist[:, a] + dist[a, i] - dist[:, i] > H):
            return False
    return True


# --------------------------------------------------------------------------- #
# Pattern discovery and anchor deployment
# --------------------------------------------------------------------------- #

def pattern_discovery(visible: Iterable[int], H: int, shell: ShellConfig) -> ClusterPattern:
    """Largest cluster of visible satellites within the detour budget, as offsets.

    Ties between equally large candidate clusters go to the lowest anchor id.
    """
    sats = sorted(set(visible))
    if not sats:
        raise ValueError("visible satellite set is empty")
    idx = np.array(sats)
    best_anchor, best_members = -1, np.empty(0, dtype=int)
    for s in sats:
        members = idx[2 * distance_row(s, shell)[idx] <= H]
        if len(members) > len(best_members):
            best_anchor, best_members = s, members
    offsets = frozenset(relative_offset(best_anchor, int(m), shell) for m in best_members)
    return ClusterPattern(offsets=offsets, built_with_H=H)


def _instance_table(shell: ShellConfig, pattern: ClusterPattern) -> np.ndarray:
    """Row ``a`` lists the satellite ids of ``pattern`` placed at anchor ``a``."""
    y_n = shell.sats_per_orbit
    anchors = np.arange(shell.num_sats)
    ax, ay = anchors // y_n, anchors % y_n
    offs = np.array(sorted(pattern.offsets))
    xs = (ax[:, None] + offs[None, :, 0]) % shell.num_orbits
    ys = (ay[:, None] + offs[None, :, 1]) % y_n
    return xs * y_n + ys


def deploy_anchors(shell: ShellConfig, pattern: ClusterPattern) -> ClusterDivision:
    """Greedy cover of the torus by pattern instances.

    Each round picks the still-uncovered satellite whose instance contains
    the most uncovered satellites (lowest id on ties) and hands it exactly
    those satellites, so the result is always a partition.
    """
    table = _instance_table(shell, pattern)
    remaining = np.ones(shell.num_sats, dtype=bool)
    anchor_of = np.full(shell.num_sats, -1)
    while remaining.any():
        cover = remaining[table].sum(axis=1)
        cover[~remaining] = -1
        anc = int(np.argmax(cover))
        members = np.unique(table[anc][remaining[table[anc]]])
        anchor_of[members] = anc
        remaining[members] = False
    return ClusterDivision(anchor_of={i: int(a) for i, a in enumerate(anchor_of)})


# --------------------------------------------------------------------------- #
# Anchor assignment
# --------------------------------------------------------------------------- #

def _runs_by_sat(slots: Sequence[frozenset[int]]) -> list[dict[int, int]]:
    """``runs[k][s]``: consecutive slots from ``k`` in which ``s`` stays visible."""
    runs: list[dict[int, int]] = [dict() for _ in slots]
    nxt: dict[int, int] = {}
    for k in range(len(slots) - 1, -1, -1):
        runs[k] = {s: 1 + nxt.get(s, 0) for s in slots[k]}
        nxt = runs[k]
    return runs


def _runs_by_anchor(slots: Sequence[frozenset[int]], division: ClusterDivision) -> list[dict[int, int]]:
    """``runs[k][a]``: consecutive slots from ``k`` in which cluster ``a`` has a visible member."""
    runs: list[dict[int, int]] = [dict() for _ in slots]
    nxt: dict[int, int] = {}
    for k in range(len(slots) - 1, -1, -1):
        anchors = {division.anchor_of[s] for s in slots[k]}
        runs[k] = {a: 1 + nxt.get(a, 0) for a in anchors}
        nxt = runs[k]
    return runs


def _pick(candidates: Iterable[int], run: Mapping[int, int]) -> int:
    return min(candidates, key=lambda s: (-run[s], s))


def assign_greedy(timeline: VisibilityTimeline, division: ClusterDivision) -> AssignmentTimeline:
    """Stick with the current satellite, then the current cluster, then the longest-lived cluster.

    Within a cluster the ingress is the member that stays visible longest
    (lowest id on ties); a new cluster is the one with the longest unbroken
    run of visibility from the current slot (lowest anchor id on ties).
    """
    slots = timeline.slots
    sat_runs = _runs_by_sat(slots)
    anchor_runs = _runs_by_anchor(slots, division)
    ingress: list[int | None] = []
    anchors: list[int | None] = []
    cur_sat: int | None = None
    cur_anchor: int | None = None
    for k, visible in enumerate(slots):
        if not visible:
            cur_sat = cur_anchor = None
        elif cur_sat is not None and cur_sat in visible:
            pass
        else:
            same = [s for s in visible if division.anchor_of[s] == cur_anchor] if cur_anchor is not None else []
            if not same:
                cur_anchor = _pick(anchor_runs[k], anchor_runs[k])
                same = [s for s in visible if division.anchor_of[s] == cur_anchor]
            cur_sat = _pick(same, sat_runs[k])
        ingress.append(cur_sat)
        anchors.append(cur_anchor)
    return AssignmentTimeline(ingress=tuple(ingress), anchor=tuple(anchors))


ORACLE_MAX_VISIBLE = 6
ORACLE_MAX_SLOTS = 12


def assign_bruteforce(timeline: VisibilityTimeline, division: ClusterDivision) -> AssignmentTimeline:
    """Exhaustive maximisation of the objective for one user (tests only).

    Enumerates every anchor sequence (including staying disconnected while
    satellites are visible); the objective only depends on anchors, so each
    slot's options are its visible clusters plus ``None``.  Memoised on
    (slot, previous anchor).
    """
    slots = timeline.slots
    if len(slots) > ORACLE_MAX_SLOTS or any(len(s) > ORACLE_MAX_VISIBLE for s in slots):
        raise ValueError("instance too large for oracle")
    options = [sorted({division.anchor_of[s] for s in vis}) + [None] for vis in slots]

    @lru_cache(maxsize=None)
    def best(k: int, prev: int | None) -> tuple[int, tuple[int | None, ...]]:
        if k == len(slots):
            return 0, ()
        result = (-1, ())
        for a in options[k]:
            gain = 1 if (a is not None and a == prev) else 0
            score, rest = best(k + 1, a)
            if score + gain > result[0]:
                result = (score + gain, (a,) + rest)
        return result

    _, chosen = best(0, None)
    ingress = tuple(
        None if a is None else min(s for s in vis if division.anchor_of[s] == a) for a, vis in zip(chosen, slots)
    )
    return AssignmentTimeline(ingress=ingress, anchor=chosen)


def objective_oracle(
    assignments: Sequence[AssignmentTimeline], division: ClusterDivision, num_sats: int
) -> int:
    """Literal tuple count over ``<i, p, q, k, A>`` (tests only)."""
    total = 0
    for tl in assignments:
        for k in range(1, len(tl)):
            for p, q, a in itertools.product(range(num_sats), repeat=3):
                connected = tl.ingress[k] == p and tl.ingress[k - 1] == q
                if connected and division.anchor_of[p] == a and division.anchor_of[q] == a:
                    total += 1
    return total


def candidate_cluster_weight(candidate: Iterable[int], timelines: Sequence[VisibilityTimeline]) -> int:
    """Visibility weight of a candidate cluster: total (user, member, slot) sightings minus one."""
    members = set(candidate)
    return sum(len(members & vis) for tl in timelines for vis in tl.slots) - 1
