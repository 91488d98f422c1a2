"""Scenario files (YAML) and trace files (CSV).

A scenario file has the sections ``shell``, ``ada``, ``sim``, ``gs`` (or
``gs_file``), ``users`` and ``mechanisms``; see the README for the schema.
Relative paths are resolved against the scenario file's directory.
Validation collects every problem before failing.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .ada import AdaParams, default_H
from .constellation import GroundPoint, ShellConfig, default_discovery_window
from .simulator.scenario import ConvergenceModel, GroundStation, LatencyMode, MechanismKind, Scenario, UserTrace

PRESET_DIR = Path(str(resources.files("satanchor") / "presets"))


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    mechanisms: tuple[MechanismKind, ...]
    path: Path | None = None


def load_trace(path: Path) -> tuple[tuple[float, GroundPoint], ...]:
    """Read ``epoch_seconds, lat_deg, lon_deg, alt_m`` rows; times become relative to the first row."""
    errors = []
    rows: list[tuple[float, GroundPoint]] = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                t, lat, lon, alt = (float(v) for v in rec[:4])
            except ValueError:
                if lineno == 1:
                    continue  # header
                errors.append(f"{path}:{lineno}: expected 4 numeric fields, got {rec!r}")
                continue
            if rows and t <= rows[-1][0]:
                errors.append(f"{path}:{lineno}: timestamps must be strictly increasing")
                continue
            try:
                rows.append((t, GroundPoint(lat, lon, alt)))
            except ValueError as exc:
                errors.append(f"{path}:{lineno}: {exc}")
    if not rows and not errors:
        errors.append(f"{path}: no waypoints")
    if errors:
        raise ScenarioError(errors)
    t0 = rows[0][0]
    return tuple((t - t0, p) for t, p in rows)


def load_gs_csv(path: Path) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def _num(doc: dict, key: str, where: str, errors: list[str], kind=float, default=None, required=True):
    if key not in doc or doc[key] is None:
        if default is None and required:
            errors.append(f"{where}.{key}: required")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where}.{key}: expected a number, got {value!r}")
        return default
    if kind is int and value != int(value):
        errors.append(f"{where}.{key}: expected an integer, got {value!r}")
        return default
    return kind(value)


def _point(doc: Any, where: str, errors: list[str]) -> GroundPoint | None:
    if not isinstance(doc, dict):
        errors.append(f"{where}: expected a mapping with lat/lon")
        return None
    lat = _num(doc, "lat", where, errors)
    lon = _num(doc, "lon", where, errors)
    alt = _num(doc, "alt_m", where, errors, default=0.0, required=False)
    if lat is None or lon is None:
        return None
    try:
        return GroundPoint(lat, lon, alt)
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None


def parse_scenario(doc: Any, base: Path) -> ScenarioFile:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError(["document root must be a mapping"])

    sh = doc.get("shell") or {}
    shell_kw = dict(
        num_orbits=_num(sh, "num_orbits", "shell", errors, int),
        sats_per_orbit=_num(sh, "sats_per_orbit", "shell", errors, int),
        altitude_km=_num(sh, "altitude_km", "shell", errors),
        inclination_deg=_num(sh, "inclination_deg", "shell", errors),
        phase_offset=_num(sh, "phase_offset", "shell", errors, default=0.5),
        min_elevation_deg=_num(sh, "min_elevation_deg", "shell", errors, default=25.0),
    )
    shell = None
    if all(v is not None for v in shell_kw.values()):
        try:
            shell = ShellConfig(**shell_kw)
        except ValueError as exc:
            errors += [f"shell: {p}" for p in str(exc).split("; ")]

    sim = doc.get("sim") or {}
    slot_seconds = _num(sim, "slot_seconds", "sim", errors, default=1.0)
    per_hop = sim.get("per_hop_ms", 4.0)
    mode = LatencyMode.PER_HOP
    if per_hop == "geometric":
        mode, per_hop = LatencyMode.GEOMETRIC, 4.0
    elif isinstance(per_hop, bool) or not isinstance(per_hop, (int, float)):
        errors.append(f"sim.per_hop_ms: expected a number or 'geometric', got {per_hop!r}")
        per_hop = 4.0
    convergence = _num(sim, "convergence_slots", "sim", errors, int, default=10)
    seed = _num(sim, "rng_seed", "sim", errors, int, default=0)
    hysteresis = _num(sim, "anchor_hysteresis_slots", "sim", errors, int, default=60)
    random_ho = _num(sim, "random_gs_handovers", "sim", errors, int, default=0, required=False)
    uplink = sim.get("uplink_via", "anchor")
    forced = []
    for i, f in enumerate(sim.get("forced_gs_handovers") or []):
        if not isinstance(f, dict) or "gs" not in f or "slot" not in f:
            errors.append(f"sim.forced_gs_handovers[{i}]: expected {{gs, slot}}")
            continue
        forced.append((str(f["gs"]), int(f["slot"])))

    stations: list[GroundStation] = []
    gs_docs = list(doc.get("gs") or [])
    if doc.get("gs_file"):
        gs_path = (base / doc["gs_file"]) if not Path(doc["gs_file"]).is_absolute() else Path(doc["gs_file"])
        if not gs_path.exists():
            errors.append(f"gs_file: {gs_path} does not exist")
        else:
            rows = load_gs_csv(gs_path)
            limit = _num(doc, "gs_limit", "gs_limit", errors, int, required=False)
            gs_docs += [
                {k: (float(v) if k in ("lat", "lon", "server_ms", "alt_m") else v) for k, v in r.items()}
                for r in (rows if limit is None else rows[:limit])
            ]
    for i, g in enumerate(gs_docs):
        where = f"gs[{i}]"
        p = _point(g, where, errors)
        server = _num(g, "server_ms", where, errors, default=5.0, required=False)
        if "id" not in g:
            errors.append(f"{where}.id: required")
        elif p is not None:
            stations.append(GroundStation(str(g["id"]), p, server))

    users: list[UserTrace] = []
    for i, u in enumerate(doc.get("users") or []):
        where = f"users[{i}]"
        if not isinstance(u, dict) or "id" not in u:
            errors.append(f"{where}.id: required")
            continue
        if "trace_path" in u:
            tp = Path(u["trace_path"])
            tp = tp if tp.is_absolute() else base / tp
            if not tp.exists():
                errors.append(f"{where}.trace_path: {tp} does not exist")
                continue
            try:
                users.append(UserTrace(str(u["id"]), load_trace(tp)))
            except ScenarioError as exc:
                errors += exc.errors
        elif "waypoints" in u:
            try:
                wps = tuple((float(w[0]), GroundPoint(float(w[1]), float(w[2]), float(w[3]))) for w in u["waypoints"])
                users.append(UserTrace(str(u["id"]), wps))
            except (ValueError, TypeError, IndexError) as exc:
                errors.append(f"{where}.waypoints: {exc}")
        else:
            p = _point(u, where, errors)
            if p is not None:
                users.append(UserTrace(str(u["id"]), ((0.0, p),)))
    if not users:
        errors.append("users: at least one user is required")

    horizon = _num(sim, "horizon_slots", "sim", errors, int, required=False)
    if horizon is None and users and slot_seconds:
        longest = max(u.waypoints[-1][0] for u in users)
        if longest > 0:
            horizon = int(math.floor(longest / slot_seconds)) + 1
        else:
            errors.append("sim.horizon_slots: required when every user is stationary")

    ada = doc.get("ada") or {}
    ref = GroundPoint(40.0, 0.0)
    if ada.get("reference_point") is not None:
        ref = _point(ada["reference_point"], "ada.reference_point", errors) or ref
    H = _num(ada, "H", "ada", errors, int, required=False)
    window = _num(ada, "discovery_window", "ada", errors, int, required=False)
    if H is not None and H < 0:
        errors.append("ada.H must be ≥ 0")
    if window is not None and window < 1:
        errors.append("ada.discovery_window must be ≥ 1")

    mechanisms = []
    for m in doc.get("mechanisms") or [k.value for k in MechanismKind]:
        try:
            mechanisms.append(MechanismKind(m))
        except ValueError:
            errors.append(f"mechanisms: unknown mechanism {m!r} (choose from {[k.value for k in MechanismKind]})")
    if convergence is not None and convergence < 0:
        errors.append("sim.convergence_slots must be ≥ 0")

    scenario = None
    if not errors and shell is not None:
        params = AdaParams(
            H=default_H(shell) if H is None else H,
            discovery_window=default_discovery_window(shell, slot_seconds) if window is None else window,
        )
        candidate = dict(
            shell=shell,
            ground_stations=tuple(stations),
            users=tuple(users),
            horizon=horizon,
            mechanism=mechanisms[0] if mechanisms else MechanismKind.SKYCASTLE,
            ada=params,
            reference_point=ref,
            convergence=ConvergenceModel(convergence),
            slot_seconds=slot_seconds,
            per_hop_ms=float(per_hop),
            latency_mode=mode,
            rng_seed=seed,
            anchor_hysteresis_slots=hysteresis,
            uplink_via=uplink,
            forced_gs_handovers=tuple(forced),
            random_gs_handovers=random_ho or 0,
            name=str(doc.get("name", "scenario")),
        )
        try:
            scenario = Scenario(**candidate)
        except ValueError as exc:
            errors += str(exc).split("; ")
    if errors:
        raise ScenarioError(errors)
    return ScenarioFile(scenario=scenario, mechanisms=tuple(mechanisms))


def validate_and_load(path: str | Path) -> ScenarioFile:
    """Parse and validate a scenario file, raising ``ScenarioError`` with every problem found."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError([f"{path}: parse error at {where}: {exc.problem}"]) from exc
    sf = parse_scenario(doc, path.parent)
    return ScenarioFile(scenario=sf.scenario, mechanisms=sf.mechanisms, path=path)


def resolved_document(sf: ScenarioFile) -> dict[str, Any]:
    """Fully materialised scenario (every default filled in, traces inlined)."""
    s = sf.scenario
    return {
        "name": s.name,
        "shell": {
            "num_orbits": s.shell.num_orbits,
            "sats_per_orbit": s.shell.sats_per_orbit,
            "altitude_km": s.shell.altitude_km,
            "inclination_deg": s.shell.inclination_deg,
            "phase_offset": s.shell.phase_offset,
            "min_elevation_deg": s.shell.min_elevation_deg,
        },
        "ada": {
            "H": s.ada.H,
            "discovery_window": s.ada.discovery_window,
            "reference_point": {
                "lat": s.reference_point.latitude_deg,
                "lon": s.reference_point.longitude_deg,
                "alt_m": s.reference_point.altitude_m,
            },
        },
        "sim": {
            "horizon_slots": s.horizon,
            "slot_seconds": s.slot_seconds,
            "per_hop_ms": "geometric" if s.latency_mode == LatencyMode.GEOMETRIC else s.per_hop_ms,
            "convergence_slots": s.convergence.convergence_slots,
            "rng_seed": s.rng_seed,
            "anchor_hysteresis_slots": s.anchor_hysteresis_slots,
            "uplink_via": s.uplink_via,
            "forced_gs_handovers": [{"gs": g, "slot": t} for g, t in s.forced_gs_handovers],
            "random_gs_handovers": s.random_gs_handovers,
        },
        "gs": [
            {
                "id": g.id,
                "lat": g.point.latitude_deg,
                "lon": g.point.longitude_deg,
                "alt_m": g.point.altitude_m,
                "server_ms": g.server_ms,
            }
            for g in s.ground_stations
        ],
        "users": [
            {
                "id": u.id,
                "waypoints": [[t, p.latitude_deg, p.longitude_deg, p.altitude_m] for t, p in u.waypoints],
            }
            for u in s.users
        ],
        "mechanisms": [m.value for m in (sf.mechanisms or (s.mechanism,))],
    }
