"""Command line entry point: ``satanchor validate|run|ada plan|oracle assign``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import yaml

from . import ada
from .config import ScenarioError, ScenarioFile, resolved_document, validate_and_load
from .constellation import ShellConfig, VisibilityTimeline
from .metrics import MetricsSummary, compare, summarize
from .simulator import MechanismKind, RunLog, build_world, run
from .simulator.world import discover_pattern, plan_division

log = logging.getLogger("satanchor")

SLOT_COLUMNS = [
    "t", "user", "connected_up", "connected_down", "rtt_ms", "ingress", "anchor",
    "address_changed", "handover", "msg_hops",
]


def _fmt(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_slots_csv(path: Path, runlog: RunLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SLOT_COLUMNS)
        for rec in runlog:
            for s in rec.users:
                w.writerow([
                    rec.t, s.user, _fmt(s.connected_up), _fmt(s.connected_down), _fmt(s.rtt_ms),
                    _fmt(s.ingress), _fmt(s.anchor), _fmt(s.address_changed), _fmt(s.handover),
                    rec.control_message_hops,
                ])


def write_summary_csv(path: Path, summary: MetricsSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in summary.row().items():
            w.writerow([k, _fmt(float(v)) if isinstance(v, (int, float)) and not isinstance(v, bool) else v])


def scenario_key(sf: ScenarioFile) -> str:
    doc = resolved_document(sf)
    doc.pop("mechanisms")
    doc["sim"].pop("rng_seed")
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def run_matrix(
    sf: ScenarioFile,
    mechanisms: Sequence[MechanismKind],
    seeds: Sequence[int],
    out: Path,
    *,
    exclude_warmup: bool = False,
) -> tuple[Path, list[str]]:
    """One run per (mechanism, seed) plus a comparison table; returns (out dir, ordering violations)."""
    out.mkdir(parents=True, exist_ok=True)
    key = scenario_key(sf)
    violations: list[str] = []
    table = []
    for seed in seeds:
        summaries: dict[str, MetricsSummary] = {}
        for mech in mechanisms:
            scenario = sf.scenario.with_mechanism(mech, seed)
            log.info("running %s seed=%d (%d slots)", mech.value, seed, scenario.horizon)
            runlog = run(scenario, build_world(scenario))
            summary = summarize(
                runlog.records, scenario.slot_seconds, exclude_warmup=exclude_warmup,
                mechanism=mech.value, scenario_key=key,
            )
            summaries[mech.value] = summary
            cell = out / f"{mech.value}_seed{seed}"
            cell.mkdir(exist_ok=True)
            resolved = resolved_document(ScenarioFile(scenario, (mech,)))
            (cell / "scenario.resolved.yaml").write_text(yaml.safe_dump(resolved, sort_keys=False))
            write_slots_csv(cell / "slots.csv", runlog)
            write_summary_csv(cell / "summary.csv", summary)
            if runlog.division is not None:
                (cell / "division.json").write_text(json.dumps(runlog.division.to_dict(), indent=1) + "\n")
        if "skycastle" in summaries:
            cmp = compare(summaries)
            table += [(seed, r) for r in cmp.rows]
            violations += [f"seed {seed}: {v}" for v in cmp.violations]
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "metric", "mechanism", "value", "reference", "delta", "ratio"])
        for seed, r in table:
            w.writerow([seed, r.metric, r.mechanism, _fmt(r.value), _fmt(r.reference), _fmt(r.delta), _fmt(r.ratio)])
    return out, violations


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def _load(path: str) -> ScenarioFile | None:
    try:
        return validate_and_load(path)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return None


def cmd_validate(args: argparse.Namespace) -> int:
    sf = _load(args.scenario)
    if sf is None:
        return 1
    s = sf.scenario
    print(
        f"ok: {s.name}: {s.shell.num_orbits}x{s.shell.sats_per_orbit} = {s.shell.num_sats} satellites, "
        f"{len(s.ground_stations)} GSs, {len(s.users)} users, {s.horizon} slots, "
        f"mechanisms={','.join(m.value for m in sf.mechanisms)}"
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    sf = _load(args.scenario)
    if sf is None:
        return 1
    mechanisms = [MechanismKind(m) for m in args.mechanism] if args.mechanism else list(sf.mechanisms)
    seeds = args.seed or [sf.scenario.rng_seed]
    out, violations = run_matrix(sf, mechanisms, seeds, Path(args.out), exclude_warmup=args.exclude_warmup)
    print(f"artifacts written to {out}")
    for v in violations:
        print(f"ordering: {v}", file=sys.stderr)
    if args.assert_orderings and violations:
        return 3
    return 0


def cmd_ada_plan(args: argparse.Namespace) -> int:
    sf = _load(args.scenario)
    if sf is None:
        return 1
    s = sf.scenario
    key = (s.shell, s.reference_point, s.ada.H, s.ada.discovery_window, s.slot_seconds)
    pattern = discover_pattern(*key)
    division = plan_division(*key)
    audit = ada.check_delay_constraint(division, s.ada.H, s.shell)
    partition = division.partition_errors(s.shell)
    report = {
        "H": s.ada.H,
        "discovery_window": s.ada.discovery_window,
        "pattern": {"size": len(pattern.offsets), "radius": pattern.radius(), "offsets": sorted(pattern.offsets)},
        "division": {
            "anchors": len(division.clusters),
            "cluster_sizes": [len(division.clusters[a]) for a in division.anchors],
        },
        "delay_audit": {
            "passed": audit.passed,
            "worst_member": audit.worst_member,
            "worst_anchor": audit.worst_anchor,
            "worst_detour": audit.worst_detour,
            "slack": audit.slack,
        },
        "partition_errors": partition,
    }
    if args.json:
        print(json.dumps(report, indent=1))
    else:
        print(f"pattern: {len(pattern.offsets)} offsets, radius {pattern.radius()} (H={s.ada.H})")
        print(f"division: {len(division.clusters)} anchors, cluster sizes {report['division']['cluster_sizes']}")
        verdict = "pass" if audit.passed else "FAIL"
        print(
            f"delay audit: {verdict}; worst detour {audit.worst_detour} hops "
            f"(member {audit.worst_member}, anchor {audit.worst_anchor}, slack {audit.slack})"
        )
        print("partition: ok" if not partition else "partition: " + "; ".join(partition))
    return 0 if audit.passed and not partition else 2


def load_oracle_instance(path: str | Path) -> tuple[ShellConfig, ada.ClusterDivision, VisibilityTimeline]:
    """JSON instance: ``{"shell": {num_orbits, sats_per_orbit}, "clusters": {anchor: [ids]}, "slots": [[ids], ...]}``."""
    doc = json.loads(Path(path).read_text())
    sh = doc["shell"]
    shell = ShellConfig(
        sh["num_orbits"], sh["sats_per_orbit"], sh.get("altitude_km", 550.0), sh.get("inclination_deg", 53.0)
    )
    if "clusters" in doc:
        division = ada.ClusterDivision.from_clusters({int(a): m for a, m in doc["clusters"].items()})
    else:
        division = ada.ClusterDivision(anchor_of={i: int(a) for i, a in enumerate(doc["anchor_of"])})
    timeline = VisibilityTimeline(node=doc.get("user", "user"), slots=tuple(frozenset(s) for s in doc["slots"]))
    return shell, division, timeline


def cmd_oracle_assign(args: argparse.Namespace) -> int:
    shell, division, timeline = load_oracle_instance(args.instance)
    errors = division.partition_errors(shell)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    greedy = ada.assign_greedy(timeline, division)
    try:
        brute = ada.assign_bruteforce(timeline, division)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    g = ada.objective_value([greedy], division)
    b = ada.objective_value([brute], division)
    print(f"greedy objective {g}, brute-force objective {b}: {'match' if g == b else 'MISMATCH'}")
    print(f"greedy anchors: {list(greedy.anchor)}")
    return 0 if g == b else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satanchor", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run mechanisms x seeds and write artifacts")
    p.add_argument("scenario")
    p.add_argument("--mechanism", action="append", choices=[m.value for m in MechanismKind])
    p.add_argument("--seed", action="append", type=int)
    p.add_argument("--out", default="runs")
    p.add_argument("--assert-orderings", action="store_true")
    p.add_argument("--exclude-warmup", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ada", help="anchor deployment tools")
    ada_sub = p.add_subparsers(dest="ada_command", required=True)
    q = ada_sub.add_parser("plan", help="print pattern, division and delay-constraint audit")
    q.add_argument("scenario")
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_ada_plan)

    p = sub.add_parser("oracle", help="small-instance oracles")
    o_sub = p.add_subparsers(dest="oracle_command", required=True)
    q = o_sub.add_parser("assign", help="greedy vs brute-force anchor assignment")
    q.add_argument("instance")
    q.set_defaults(func=cmd_oracle_assign)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
