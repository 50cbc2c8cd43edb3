"""Run event log: per-step samples plus planner/describer event streams.

The log is the simulator's complete output contract.  The CSV form holds
the fixed-rate samples (one row per physics step) preceded by two comment
lines: a schema version tag and a JSON metadata blob describing the static
scene (actors, signals, zones, segment attributes, stop lines).  That is
enough for the compliance auditor and the plotting command to work from
the file alone.  Planner decisions, state transitions, describer exchanges
and free-form notes go to a JSON-lines sidecar.

All float formatting is fixed-width so that identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

SCHEMA_TAG = "regplan-eventlog v1"
_FLOAT_FMT = "{:.6f}"


def _fmt(value: float) -> str:
    return _FLOAT_FMT.format(float(value))


@dataclass(frozen=True)
class Sample:
    """World and planner state captured at one physics step."""

    t: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float
    curvature: float
    station: float
    lateral: float
    superstate: str
    substate: str
    plan_id: int
    total_cost: float
    describer_consulted: bool
    signal_phases: tuple = ()
    actor_stations: tuple = ()


@dataclass(frozen=True)
class DecisionEvent:
    t: float
    state_label: str
    selected_plan: int
    emergency: bool
    describer_consulted: bool
    candidates: tuple = ()  # dicts: plan_id, label, legal, matched, costs


@dataclass(frozen=True)
class TransitionEvent:
    t: float
    from_label: str
    to_label: str
    reason: str


@dataclass(frozen=True)
class DescriberEvent:
    t: float
    prompt: str
    text: str
    unparsed: tuple = ()


@dataclass
class EventLog:
    meta: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    describer_events: list = field(default_factory=list)
    notes: list = field(default_factory=list)  # (t, text)

    # -- recording ----------------------------------------------------------

    def add_sample(self, sample: Sample) -> None:
        self.samples.append(sample)

    def add_decision(self, event: DecisionEvent) -> None:
        self.decisions.append(event)

    def add_transition(self, event: TransitionEvent) -> None:
        self.transitions.append(event)

    def add_describer(self, event: DescriberEvent) -> None:
        self.describer_events.append(event)

    def add_note(self, t: float, text: str) -> None:
        self.notes.append((t, text))

    # -- convenience --------------------------------------------------------

    @property
    def duration(self) -> float:
        return self.samples[-1].t if self.samples else 0.0

    def max_speed(self) -> float:
        return max((s.speed for s in self.samples), default=0.0)

    def samples_between(self, t0: float, t1: float) -> list:
        return [s for s in self.samples if t0 <= s.t <= t1]

    # -- CSV ------------------------------------------------------------------

    def _columns(self) -> list[str]:
        n_signals = len(self.meta.get("signals", ()))
        n_actors = len(self.meta.get("actors", ()))
        cols = [
            "t", "x", "y", "heading", "speed", "accel", "curvature",
            "station", "lateral", "superstate", "substate", "plan_id",
            "total_cost", "describer_consulted",
        ]
        cols += [f"signal{i}_phase" for i in range(n_signals)]
        cols += [f"actor{i}_station" for i in range(n_actors)]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {SCHEMA_TAG}\n")
        buf.write("# meta ")
        buf.write(json.dumps(self.meta, sort_keys=True, separators=(",", ":")))
        buf.write("\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self._columns())
        for s in self.samples:
            row = [
                _fmt(s.t), _fmt(s.x), _fmt(s.y), _fmt(s.heading), _fmt(s.speed),
                _fmt(s.accel), _fmt(s.curvature), _fmt(s.station), _fmt(s.lateral),
                s.superstate, s.substate, str(s.plan_id), _fmt(s.total_cost),
                "1" if s.describer_consulted else "0",
            ]
            row += list(s.signal_phases)
            row += [_fmt(st) for st in s.actor_stations]
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EventLog":
        lines = text.splitlines()
        if not lines or lines[0].strip() != f"# {SCHEMA_TAG}":
            raise ValueError(f"not a {SCHEMA_TAG} file")
        if len(lines) < 2 or not lines[1].startswith("# meta "):
            raise ValueError("missing meta line")
        meta = json.loads(lines[1][len("# meta "):])
        log = cls(meta=meta)
        reader = csv.reader(lines[2:])
        header = next(reader)
        n_signals = sum(1 for c in header if c.endswith("_phase"))
        n_actors = sum(1 for c in header if c.startswith("actor"))
        base = 14
        for row in reader:
            if not row:
                continue
            log.add_sample(Sample(
                t=float(row[0]), x=float(row[1]), y=float(row[2]),
                heading=float(row[3]), speed=float(row[4]), accel=float(row[5]),
                curvature=float(row[6]), station=float(row[7]), lateral=float(row[8]),
                superstate=row[9], substate=row[10], plan_id=int(row[11]),
                total_cost=float(row[12]), describer_consulted=row[13] == "1",
                signal_phases=tuple(row[base:base + n_signals]),
                actor_stations=tuple(float(v) for v in row[base + n_signals:
                                                           base + n_signals + n_actors]),
            ))
        return log

    # -- JSON lines -----------------------------------------------------------

    def to_jsonl(self) -> str:
        records: list[dict] = [{"type": "meta", "schema": SCHEMA_TAG, **self.meta}]
        for d in self.decisions:
            records.append({
                "type": "decision", "t": round(d.t, 6), "state": d.state_label,
                "selected_plan": d.selected_plan, "emergency": d.emergency,
                "describer_consulted": d.describer_consulted,
                "candidates": list(d.candidates),
            })
        for tr in self.transitions:
            records.append({
                "type": "transition", "t": round(tr.t, 6), "from": tr.from_label,
                "to": tr.to_label, "reason": tr.reason,
            })
        for de in self.describer_events:
            records.append({
                "type": "describer", "t": round(de.t, 6), "prompt": de.prompt,
                "text": de.text, "unparsed": list(de.unparsed),
            })
        for t, text in self.notes:
            records.append({"type": "note", "t": round(t, 6), "text": text})
        records[1:] = sorted(records[1:], key=lambda r: (r["t"], r["type"]))
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in records)
