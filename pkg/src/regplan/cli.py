"""Command-line interface.

Subcommands: ``validate-db`` checks a regulation CSV, ``run`` executes a
scenario and writes its artifacts, ``plot`` renders an event log to SVG,
``report`` re-audits an existing event log, and ``list`` shows the
built-in scenario library.  Exit codes: 0 success, 1 failed validation /
failed run / compliance violation, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from regplan import __version__
from regplan.regdb import RegulationError, parse_regulation_csv, validate_database
from regplan.sim.audit import check_compliance
from regplan.sim.config import ConfigError, dump_config, load_config
from regplan.sim.eventlog import EventLog
from regplan.sim.runner import activate_for, default_database, run_scenario
from regplan.sim.scenarios import get_scenario, scenario_library, scenario_variants


def _load_db(path: str | None):
    if path is None:
        return default_database()
    return parse_regulation_csv(Path(path).read_text(encoding="utf-8"))


def cmd_validate_db(args) -> int:
    try:
        db = _load_db(args.db)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegulationError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    violations = validate_database(db)
    label = args.db or "bundled regulations.csv"
    if violations:
        print(f"{label}: {len(violations)} violation(s)")
        for v in violations:
            print(f"  {v.code_id}: {v.field_name}: {v.message}")
        return 1
    print(f"{label}: OK ({len(db)} records)")
    return 0


def _resolve_scenario(name: str, variant: str):
    if name.endswith((".yaml", ".yml")):
        return load_config(Path(name))
    return get_scenario(name, variant)


def cmd_run(args) -> int:
    try:
        cfg = _resolve_scenario(args.scenario, args.variant)
        db = _load_db(args.db)
    except (KeyError, FileNotFoundError, ConfigError, RegulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_root = Path(args.out or os.environ.get("REGPLAN_OUT_ROOT", "runs"))
    out_dir = out_root / f"{cfg.name}_{cfg.variant}"
    out_dir.mkdir(parents=True, exist_ok=True)
    config_yaml = dump_config(cfg)
    manifest = {
        "tool": "regplan",
        "version": __version__,
        "scenario": cfg.name,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "config_sha256": hashlib.sha256(config_yaml.encode()).hexdigest(),
        "outputs": ["config.yaml", "events.csv", "events.jsonl", "report.txt"],
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "config.yaml").write_text(config_yaml, encoding="utf-8")

    result = run_scenario(cfg, db)
    report = check_compliance(result.log, result.db)
    (out_dir / "events.csv").write_text(result.log.to_csv(), encoding="utf-8")
    (out_dir / "events.jsonl").write_text(result.log.to_jsonl(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.format_text() + "\n", encoding="utf-8")

    status = "completed" if result.completed else "DID NOT FINISH"
    when = (f" at t={result.reached_goal_at:.1f}s"
            if result.reached_goal_at is not None else "")
    print(f"{cfg.name} [{cfg.variant}]: {status}{when}; "
          f"{len(result.log.samples)} samples -> {out_dir}")
    print(report.format_text())
    return 0 if result.completed and report.ok else 1


def cmd_plot(args) -> int:
    try:
        log = EventLog.from_csv(Path(args.log).read_text(encoding="utf-8"))
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not log.samples:
        print("error: log contains no samples", file=sys.stderr)
        return 2

    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = log.meta.get("scenario", "regplan")
    import matplotlib.pyplot as plt

    t = [s.t for s in log.samples]
    fig, axes = plt.subplots(3, 1, figsize=(9.0, 10.0))
    ax = axes[0]
    ax.plot([s.x for s in log.samples], [s.y for s in log.samples], lw=1.5,
            label="ego path")
    for i, actor in enumerate(log.meta.get("actors", [])):
        stations = [s.actor_stations[i] for s in log.samples
                    if i < len(s.actor_stations)]
        if stations:
            ax.scatter([], [])  # keep color cycle aligned with labels
            ax.plot([], [], label=f"{actor['kind']} (station "
                                  f"{stations[0]:.0f}->{stations[-1]:.0f} m)")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{log.meta.get('scenario')} [{log.meta.get('variant')}]")
    ax.axis("equal")
    ax.legend(loc="best", fontsize=8)

    ax = axes[1]
    ax.plot(t, [s.station for s in log.samples], lw=1.2, label="station [m]")
    onset = _decel_onset_time(log)
    if onset is not None:
        ax.axvline(onset, color="red", ls="--", lw=1.0, label="deceleration onset")
    for zone in log.meta.get("zones", []):
        for edge, station in (("entry", zone["start"]), ("exit", zone["end"])):
            ts = _station_time(log, station)
            if ts is not None:
                ax.axvline(ts, color="gold", ls="--", lw=1.0,
                           label=f"{zone['zone_type']} zone {edge}")
    for junction in log.meta.get("junctions", []):
        ts = _station_time(log, junction["stop_line"])
        if ts is not None:
            ax.axvline(ts, color="gray", ls="--", lw=1.0, label="stop line")
    for label, ts in _overtake_span(log):
        ax.axvline(ts, color="green", ls="--", lw=1.0, label=label)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("station [m]")
    ax.legend(loc="best", fontsize=8)

    ax = axes[2]
    ax.plot([s.station for s in log.samples], [s.lateral for s in log.samples],
            lw=1.2)
    ax.set_xlabel("route station [m]")
    ax.set_ylabel("lateral offset [m]")
    fig.tight_layout()

    out = Path(args.out or Path(args.log).with_suffix(".svg"))
    fig.savefig(out, format="svg")
    plt.close(fig)
    print(f"wrote {out}")
    return 0


def _station_time(log: EventLog, station: float) -> float | None:
    for s in log.samples:
        if s.station >= station:
            return s.t
    return None


def _decel_onset_time(log: EventLog) -> float | None:
    """First sustained braking instant (three consecutive braking samples)."""
    run = 0
    for s in log.samples:
        run = run + 1 if s.accel < -0.5 else 0
        if run == 3:
            return s.t - 2 * log.meta.get("physics_dt", 0.1)
    return None


def _overtake_span(log: EventLog) -> list[tuple[str, float]]:
    times = [s.t for s in log.samples if s.superstate == "Overtaking"]
    if not times:
        return []
    return [("overtake start", times[0]), ("overtake end", times[-1])]


def cmd_report(args) -> int:
    try:
        log = EventLog.from_csv(Path(args.log).read_text(encoding="utf-8"))
        db = _load_db(args.db)
    except (FileNotFoundError, ValueError, RegulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = check_compliance(log, db)
    print(report.format_text())
    return 0 if report.ok else 1


def cmd_list(args) -> int:
    for name, cfg in scenario_library().items():
        variants = ", ".join(scenario_variants(name))
        print(f"{name}: {cfg.description}")
        print(f"  variants: {variants}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regplan",
        description="Regulation-aware path planning scenario toolkit.")
    parser.add_argument("--version", action="version", version=f"regplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-db", help="check a regulation CSV for consistency")
    p.add_argument("--db", help="path to a regulation CSV (default: bundled)")
    p.set_defaults(func=cmd_validate_db)

    p = sub.add_parser("run", help="execute a scenario and write its artifacts")
    p.add_argument("scenario", help="built-in scenario name or a YAML config path")
    p.add_argument("--variant", default="base", help="scenario variant name")
    p.add_argument("--db", help="path to a regulation CSV (default: bundled)")
    p.add_argument("--out", help="output root (default: $REGPLAN_OUT_ROOT or ./runs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render an event log CSV to SVG")
    p.add_argument("--log", required=True, help="path to events.csv")
    p.add_argument("--out", help="output SVG path (default: alongside the log)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("report", help="re-audit an event log against the regulations")
    p.add_argument("--log", required=True, help="path to events.csv")
    p.add_argument("--db", help="path to a regulation CSV (default: bundled)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("list", help="list built-in scenarios and variants")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
