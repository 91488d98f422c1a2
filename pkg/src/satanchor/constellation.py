"""Walker shell geometry on a +Grid torus.

Satellites are identified either by an integer id or by a ``GridCoord``
(orbit index, in-orbit slot).  Orbits are ideal circles around a spherical
Earth; positions are Earth-centred inertial (ECI) kilometres and ground
points are rotated into the same frame with a constant sidereal rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0
MU_EARTH_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5
SPEED_OF_LIGHT_KM_S = 299792.458


@dataclass(frozen=True)
class ShellConfig:
    """One Walker-delta shell with a +Grid inter-satellite topology."""

    num_orbits: int
    sats_per_orbit: int
    altitude_km: float
    inclination_deg: float
    phase_offset: float = 0.5
    min_elevation_deg: float = 25.0

    def __post_init__(self) -> None:
        errors = shell_errors(self)
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def num_sats(self) -> int:
        return self.num_orbits * self.sats_per_orbit

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.radius_km**3 / MU_EARTH_KM3_S2)

    def coord(self, sat: int) -> GridCoord:
        if not 0 <= sat < self.num_sats:
            raise ValueError(f"satellite id {sat} outside shell of {self.num_sats}")
        return GridCoord(sat // self.sats_per_orbit, sat % self.sats_per_orbit)

    def sat_id(self, coord: GridCoord | tuple[int, int]) -> int:
        x, y = coord
        return (x % self.num_orbits) * self.sats_per_orbit + (y % self.sats_per_orbit)


def shell_errors(shell: ShellConfig) -> list[str]:
    """Return every invariant violation of ``shell`` (empty when valid)."""
    errors = []
    if shell.num_orbits < 3:
        errors.append("num_orbits must be ≥ 3")
    if shell.sats_per_orbit < 3:
        errors.append("sats_per_orbit must be ≥ 3")
    if not shell.altitude_km > 0:
        errors.append("altitude_km must be > 0")
    if not 0 < shell.min_elevation_deg < 90:
        errors.append("min_elevation_deg must be in (0, 90)")
    if not 0 <= shell.phase_offset < 1:
        errors.append("phase_offset must be in [0, 1)")
    return errors


class GridCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class GroundPoint:
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        object.__setattr__(self, "longitude_deg", normalize_longitude(self.longitude_deg))


def normalize_longitude(lon: float) -> float:
    """Map a longitude into (-180, 180]."""
    lon = math.fmod(lon, 360.0)
    if lon <= -180.0:
        lon += 360.0
    elif lon > 180.0:
        lon -= 360.0
    return lon


# --------------------------------------------------------------------------- #
# Torus topology
# --------------------------------------------------------------------------- #

def _ring(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def grid_distance(a: GridCoord, b: GridCoord, shell: ShellConfig) -> int:
    """Minimum ISL hop count between two grid coordinates on the torus."""
    return _ring(a[0], b[0], shell.num_orbits) + _ring(a[1], b[1], shell.sats_per_orbit)


def sat_distance(i: int, j: int, shell: ShellConfig) -> int:
    """``grid_distance`` for satellite ids."""
    y = shell.sats_per_orbit
    return _ring(i // y, j // y, shell.num_orbits) + _ring(i % y, j % y, y)


def distance_row(sat: int, shell: ShellConfig) -> np.ndarray:
    """Hop distance from ``sat`` to every satellite, indexed by satellite id."""
    x0, y0 = divmod(sat, shell.sats_per_orbit)
    xs = np.arange(shell.num_orbits)
    ys = np.arange(shell.sats_per_orbit)
    dx = np.abs(xs - x0)
    dx = np.minimum(dx, shell.num_orbits - dx)
    dy = np.abs(ys - y0)
    dy = np.minimum(dy, shell.sats_per_orbit - dy)
    return (dx[:, None] + dy[None, :]).ravel()


def distance_sum(shell: ShellConfig) -> int:
    """Sum of hop distances from any satellite to all others (vertex-transitive)."""
    return int(distance_row(0, shell).sum())


def plus_grid_neighbors(sat: int, shell: ShellConfig) -> list[int]:
    """The four +Grid ISL neighbours: adjacent orbits (same slot) and adjacent slots."""
    x, y = divmod(sat, shell.sats_per_orbit)
    return [
        shell.sat_id((x - 1, y)),
        shell.sat_id((x + 1, y)),
        shell.sat_id((x, y - 1)),
        shell.sat_id((x, y + 1)),
    ]


def _ring_steps(a: int, b: int, n: int) -> list[int]:
    fwd = (b - a) % n
    back = (a - b) % n
    if fwd <= back:
        return [(a + k) % n for k in range(1, fwd + 1)]
    return [(a - k) % n for k in range(1, back + 1)]


def shortest_path(src: int, dst: int, shell: ShellConfig) -> list[int]:
    """Deterministic shortest ISL path, orbit (x) moves first then slot (y) moves.

    The returned list contains both endpoints; its length is ``distance + 1``.
    """
    y_n = shell.sats_per_orbit
    x0, y0 = divmod(src, y_n)
    x1, y1 = divmod(dst, y_n)
    path = [src]
    path += [x * y_n + y0 for x in _ring_steps(x0, x1, shell.num_orbits)]
    path += [x1 * y_n + y for y in _ring_steps(y0, y1, y_n)]
    return path


# --------------------------------------------------------------------------- #
# Orbits and ground geometry
# --------------------------------------------------------------------------- #

def satellite_positions(shell: ShellConfig, t: float, slot_seconds: float = 1.0) -> np.ndarray:
    """ECI positions (km) of every satellite at slot ``t``, shape ``(num_sats, 3)``."""
    x = np.repeat(np.arange(shell.num_orbits), shell.sats_per_orbit)
    y = np.tile(np.arange(shell.sats_per_orbit), shell.num_orbits)
    raan = 2.0 * np.pi * x / shell.num_orbits
    slot_angle = 2.0 * np.pi / shell.sats_per_orbit
    mean_motion = 2.0 * np.pi / shell.period_s
    u = slot_angle * (y + shell.phase_offset * x) + mean_motion * t * slot_seconds
    inc = math.radians(shell.inclination_deg)
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(raan), np.sin(raan)
    r = shell.radius_km
    return np.column_stack(
        (
            r * (co * cu - so * su * math.cos(inc)),
            r * (so * cu + co * su * math.cos(inc)),
            r * su * math.sin(inc),
        )
    )


def satellite_position(sat: int, t: float, shell: ShellConfig, slot_seconds: float = 1.0) -> np.ndarray:
    shell.coord(sat)
    return satellite_positions(shell, t, slot_seconds)[sat]


def ground_positions(
    lat_deg: np.ndarray, lon_deg: np.ndarray, alt_m: np.ndarray, t_seconds: float
) -> np.ndarray:
    """ECI positions (km) of ground points, rotating with the Earth."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float)) + EARTH_ROTATION_RAD_S * t_seconds
    r = EARTH_RADIUS_KM + np.asarray(alt_m, dtype=float) / 1000.0
    return np.column_stack((r * np.cos(lat) * np.cos(lon), r * np.cos(lat) * np.sin(lon), r * np.sin(lat)))


def sin_elevation(ground: np.ndarray, sats: np.ndarray) -> np.ndarray:
    """Sine of elevation of every satellite above every ground point, shape ``(N, S)``."""
    g_norm = np.linalg.norm(ground, axis=1)
    s_sq = np.einsum("sk,sk->s", sats, sats)
    dot = ground @ sats.T
    rng = np.sqrt(np.maximum(s_sq[None, :] + (g_norm**2)[:, None] - 2.0 * dot, 1e-12))
    return (dot / g_norm[:, None] - g_norm[:, None]) / rng


def _reach_rad(g_norm_min: float, s_norm: float, min_elevation_deg: float) -> float:
    # a satellite at elevation ε lies within arccos(r_g·cos ε / r_s) − ε of the ground point
    eps = math.radians(min_elevation_deg)
    return math.acos(min(1.0, g_norm_min * math.cos(eps) / s_norm)) - eps


class VisibilityScanner:
    """Per-slot sine of elevation for many ground points, ``-inf`` below the mask.

    Exact, but only evaluates ground/satellite pairs that were within the
    visibility reach plus ``margin_deg`` of central angle at the last refresh.
    A refresh happens as soon as satellite motion plus the largest observed
    ground-point displacement could have used up the margin.  Values are
    rounded to 1e-12 so that float-noise ties (common at t=0, where the
    layout is symmetric) resolve to the lowest satellite id under argmax.
    """

    def __init__(self, shell: ShellConfig, slot_seconds: float = 1.0, margin_deg: float = 3.0):
        self.shell = shell
        self.slot_seconds = slot_seconds
        self.margin = math.radians(margin_deg)
        self.sat_rate = 2.0 * math.pi / shell.period_s * slot_seconds  # rad per slot
        self._ref_t = None
        self._ref_unit = None
        self.refreshes = 0

    def _refresh(self, t: int, ground: np.ndarray, sats: np.ndarray, g_norm: np.ndarray) -> None:
        reach = _reach_rad(float(g_norm.min()), self.shell.radius_km, self.shell.min_elevation_deg)
        unit_g = ground / g_norm[:, None]
        unit_s = sats / self.shell.radius_km
        cos_lim = math.cos(min(math.pi, reach + self.margin))
        self.rows, self.cols = np.nonzero(unit_g @ unit_s.T >= cos_lim)
        self._ref_t, self._ref_unit = t, unit_g
        self.refreshes += 1

    def __call__(self, t: int, ground: np.ndarray, sats: np.ndarray) -> np.ndarray:
        g_norm = np.linalg.norm(ground, axis=1)
        if self._ref_t is None or len(ground) != len(self._ref_unit):
            self._refresh(t, ground, sats, g_norm)
        else:
            cosd = np.einsum("ij,ij->i", ground / g_norm[:, None], self._ref_unit)
            ground_move = float(np.arccos(np.clip(cosd.min(), -1.0, 1.0)))
            if abs(t - self._ref_t) * self.sat_rate + ground_move > self.margin:
                self._refresh(t, ground, sats, g_norm)
        r, c = self.rows, self.cols
        gp, sp = ground[r], sats[c]
        d = np.einsum("ij,ij->i", gp, sp)
        g = g_norm[r]
        rng = np.sqrt(np.maximum(self.shell.radius_km**2 + g**2 - 2.0 * d, 1e-12))
        val = (d / g - g) / rng
        out = np.full((len(ground), len(sats)), -np.inf)
        ok = val >= math.sin(math.radians(self.shell.min_elevation_deg))
        out[r[ok], c[ok]] = np.round(val[ok], 12)
        return out


def slant_range_km(ground: np.ndarray, sat: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(sat) - np.asarray(ground)))


def visible_satellites(p: GroundPoint, t: int, shell: ShellConfig, slot_seconds: float = 1.0) -> frozenset[int]:
    ground = ground_positions([p.latitude_deg], [p.longitude_deg], [p.altitude_m], t * slot_seconds)
    sin_el = sin_elevation(ground, satellite_positions(shell, t, slot_seconds))[0]
    return frozenset(np.flatnonzero(sin_el >= math.sin(math.radians(shell.min_elevation_deg))).tolist())


def subsatellite_point(sat: int, t: int, shell: ShellConfig, slot_seconds: float = 1.0) -> GroundPoint:
    x, y, z = satellite_position(sat, t, shell, slot_seconds)
    lat = math.degrees(math.asin(z / shell.radius_km))
    lon = math.degrees(math.atan2(y, x) - EARTH_ROTATION_RAD_S * t * slot_seconds)
    return GroundPoint(lat, lon)


def great_circle_km(a: GroundPoint, b: GroundPoint) -> float:
    la1, la2 = math.radians(a.latitude_deg), math.radians(b.latitude_deg)
    dlon = math.radians(b.longitude_deg - a.longitude_deg)
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


# --------------------------------------------------------------------------- #
# Trajectories and visibility timelines
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class VisibilityTimeline:
    node: str
    slots: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.slots)


def interpolate_track(
    trajectory: Sequence[tuple[float, GroundPoint]], slots: Iterable[float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear lat/lon/alt interpolation along waypoints, held constant outside them.

    Longitudes are unwrapped first so a track crossing the antimeridian
    interpolates the short way round.
    """
    if not trajectory:
        raise ValueError("no waypoints")
    ts = np.array([w[0] for w in trajectory], dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("waypoint times must be strictly increasing")
    lat = np.array([w[1].latitude_deg for w in trajectory])
    lon = np.degrees(np.unwrap(np.radians([w[1].longitude_deg for w in trajectory])))
    alt = np.array([w[1].altitude_m for w in trajectory])
    q = np.asarray(list(slots), dtype=float)
    if len(trajectory) == 1:
        return np.full(q.shape, lat[0]), np.full(q.shape, lon[0]), np.full(q.shape, alt[0])
    lon_q = np.interp(q, ts, lon)
    lon_q = (lon_q + 180.0) % 360.0 - 180.0
    return np.interp(q, ts, lat), lon_q, np.interp(q, ts, alt)


def build_visibility_timeline(
    trajectory: Sequence[tuple[int, GroundPoint]],
    shell: ShellConfig,
    horizon: int | None = None,
    slot_seconds: float = 1.0,
    node: str = "",
) -> VisibilityTimeline:
    """Per-slot visible satellite sets along a (piecewise-linear) trajectory.

    ``horizon`` defaults to one past the last waypoint's slot.
    """
    if not trajectory:
        raise ValueError("no waypoints")
    if horizon is None:
        horizon = int(trajectory[-1][0]) + 1
    lat, lon, alt = interpolate_track(trajectory, range(horizon))
    threshold = math.sin(math.radians(shell.min_elevation_deg))
    slots = []
    for t in range(horizon):
        ground = ground_positions(lat[t : t + 1], lon[t : t + 1], alt[t : t + 1], t * slot_seconds)
        sin_el = sin_elevation(ground, satellite_positions(shell, t, slot_seconds))[0]
        slots.append(frozenset(np.flatnonzero(sin_el >= threshold).tolist()))
    return VisibilityTimeline(node=node, slots=tuple(slots))


def visible_union(
    point: GroundPoint, shell: ShellConfig, window: int, slot_seconds: float = 1.0, start: int = 0
) -> frozenset[int]:
    """Every satellite visible from ``point`` at some slot in ``[start, start + window)``."""
    threshold = math.sin(math.radians(shell.min_elevation_deg))
    seen = np.zeros(shell.num_sats, dtype=bool)
    for t in range(start, start + window):
        ground = ground_positions([point.latitude_deg], [point.longitude_deg], [point.altitude_m], t * slot_seconds)
        seen |= sin_elevation(ground, satellite_positions(shell, t, slot_seconds))[0] >= threshold
    return frozenset(np.flatnonzero(seen).tolist())


def default_discovery_window(shell: ShellConfig, slot_seconds: float = 1.0) -> int:
    """Slots in one orbital period."""
    return max(1, int(math.ceil(shell.period_s / slot_seconds)))
