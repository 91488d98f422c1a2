"""Regenerate the shipped preset data files.

Ground stations: world cities (geonamescache) are binned into 1°×1° cells,
cells are ranked by summed population, and the ranking is thinned greedily
so no two stations are closer than ``--spacing-km``.  Only cells inside the
latitude band served by the shells are kept.

Flights: great-circle tracks at constant cruise speed and altitude, one
waypoint every ``--step-s`` seconds.

    pip install geonamescache
    python tools/make_presets.py
"""
from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

PRESETS = Path(__file__).resolve().parents[1] / "src" / "satanchor" / "presets"
R_EARTH = 6371.0

FLIGHTS = {
    "flight_sfo_nrt": ((37.62, -122.38), (35.77, 140.39)),
    "flight_lhr_jfk": ((51.47, -0.45), (40.64, -73.78)),
}


def haversine(a, b):
    la1, lo1, la2, lo2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * R_EARTH * math.asin(math.sqrt(h))


def slerp(a, b, f):
    def vec(p):
        la, lo = map(math.radians, p)
        return (math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la))

    va, vb = vec(a), vec(b)
    omega = math.acos(max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb)))))
    s = math.sin(omega)
    w1, w2 = math.sin((1 - f) * omega) / s, math.sin(f * omega) / s
    x, y, z = (w1 * p + w2 * q for p, q in zip(va, vb))
    return math.degrees(math.atan2(z, math.hypot(x, y))), math.degrees(math.atan2(y, x))


def ground_stations(count: int, spacing_km: float, max_lat: float):
    import geonamescache

    cells: dict[tuple[int, int], list] = {}
    for c in geonamescache.GeonamesCache().get_cities().values():
        lat, lon, pop = float(c["latitude"]), float(c["longitude"]), int(c["population"])
        if abs(lat) > max_lat:
            continue
        key = (math.floor(lat), math.floor(lon))
        cell = cells.setdefault(key, [0, 0.0, 0.0])
        cell[0] += pop
        cell[1] += lat * pop
        cell[2] += lon * pop
    ranked = sorted(cells.items(), key=lambda kv: (-kv[1][0], kv[0]))
    chosen = []
    for _, (pop, slat, slon) in ranked:
        p = (round(slat / pop, 3), round(slon / pop, 3))
        if all(haversine(p, q) >= spacing_km for q in chosen):
            chosen.append(p)
        if len(chosen) == count:
            break
    return chosen


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--gs-count", type=int, default=200)
    ap.add_argument("--spacing-km", type=float, default=350.0)
    ap.add_argument("--max-lat", type=float, default=56.0)
    ap.add_argument("--speed-kmh", type=float, default=900.0)
    ap.add_argument("--altitude-m", type=float, default=10_668.0)
    ap.add_argument("--step-s", type=int, default=300)
    args = ap.parse_args()

    with open(PRESETS / "gs_starlink_like.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon"])
        for i, (lat, lon) in enumerate(ground_stations(args.gs_count, args.spacing_km, args.max_lat)):
            w.writerow([f"gs{i:03d}", lat, lon])

    for name, (a, b) in FLIGHTS.items():
        dist = haversine(a, b)
        duration = dist / args.speed_kmh * 3600.0
        steps = int(math.ceil(duration / args.step_s))
        with open(PRESETS / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch_seconds", "lat_deg", "lon_deg", "alt_m"])
            for k in range(steps + 1):
                t = min(k * args.step_s, duration)
                lat, lon = slerp(a, b, t / duration)
                w.writerow([f"{t:.1f}", f"{lat:.5f}", f"{lon:.5f}", f"{args.altitude_m:.1f}"])


if __name__ == "__main__":
    main()
