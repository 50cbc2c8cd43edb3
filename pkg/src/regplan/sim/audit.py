"""Post-hoc compliance auditing of a completed run.

The auditor never looks at planner internals: it replays the event log
(samples plus static scene metadata) against the active regulation
records and produces one finding per auditable record — applicable or
not, satisfied or violated, and the worst-case margin with its timestamp.
Working purely from the log file keeps the audit honest: anything the
planner got away with shows up here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from regplan.regdb import RegulationDatabase, RegulationRecord
from regplan.units import m_to_ft, mps_to_mph
from regplan.sim.eventlog import EventLog

SPEED_TOLERANCE = 1.02       # fraction of a limit treated as compliant
STOP_SPEED = 0.1             # m/s counting as a full stop
STOP_WINDOW = 1.5            # m before the line where the stop must happen
MIN_STOP_DURATION = 0.5      # s of standstill counting as "stopped"


@dataclass(frozen=True)
class Finding:
    code_id: str
    title: str
    applicable: bool
    satisfied: bool
    margin: float | None
    unit: str
    worst_time: float | None
    notes: tuple = ()

    def format_line(self) -> str:
        if not self.applicable:
            return f"[  --  ] {self.code_id}: not applicable ({'; '.join(self.notes)})"
        status = "[ PASS ]" if self.satisfied else "[ FAIL ]"
        margin = ""
        if self.margin is not None:
            margin = f" margin={self.margin:+.3f} {self.unit}"
        when = f" at t={self.worst_time:.1f}s" if self.worst_time is not None else ""
        notes = f"  ({'; '.join(self.notes)})" if self.notes else ""
        return f"{status} {self.code_id}:{margin}{when}{notes}"


@dataclass
class ComplianceReport:
    scenario: str
    variant: str
    findings: tuple

    @property
    def ok(self) -> bool:
        return all(f.satisfied for f in self.findings if f.applicable)

    def finding(self, code_id: str) -> Finding:
        for f in self.findings:
            if f.code_id == code_id:
                return f
        raise KeyError(code_id)

    def format_text(self) -> str:
        lines = [f"compliance report: {self.scenario} [{self.variant}] — "
                 f"{'OK' if self.ok else 'VIOLATIONS'}"]
        lines += [f.format_line() for f in self.findings]
        return "\n".join(lines)


def _phase_onset(phases: list, wanted: str) -> float | None:
    """Time the schedule first enters the wanted phase."""
    t = 0.0
    for name, duration in phases:
        if name == wanted:
            return t
        t += duration
    return None


class _LogView:
    """Precomputed lookups over one event log."""

    def __init__(self, log: EventLog):
        self.log = log
        self.meta = log.meta
        self.samples = log.samples
        self.dt = self.meta.get("physics_dt", 0.1)
        self.ego_width = self.meta["ego"]["width"]
        self.ego_length = self.meta["ego"]["length"]
        self.actors = self.meta.get("actors", [])
        self.zones = self.meta.get("zones", [])
        self.segments = self.meta.get("segments", [])
        self.signals = self.meta.get("signals", [])
        self.junctions = self.meta.get("junctions", [])

    def max_speed_mph(self, samples=None) -> tuple[float, float | None]:
        worst, when = 0.0, None
        for s in samples if samples is not None else self.samples:
            if s.speed > worst:
                worst, when = s.speed, s.t
        return mps_to_mph(worst), when

    def segment_spans(self, predicate) -> list[tuple[float, float]]:
        return [(seg["start"], seg["end"]) for seg in self.segments if predicate(seg)]

    def samples_on(self, spans) -> list:
        return [s for s in self.samples
                if any(a - 1e-9 <= s.station <= b + 1e-9 for a, b in spans)]

    def signalized_junction(self) -> dict | None:
        for junction in self.junctions:
            if junction.get("signal_index") is not None:
                return junction
        return None

    def crossing_sample(self, stop_line: float):
        for s in self.samples:
            if s.station > stop_line + 0.2:
                return s
        return None

    def stop_duration_before(self, stop_line: float, before_t: float) -> float:
        """Longest standstill inside the stop window before the crossing."""
        best = run = 0.0
        for s in self.samples:
            if s.t >= before_t:
                break
            in_window = stop_line - STOP_WINDOW <= s.station <= stop_line + 0.1
            if in_window and s.speed < STOP_SPEED:
                run += self.dt
                best = max(best, run)
            else:
                run = 0.0
        return best


# -- per-record audit procedures ---------------------------------------------


def _audit_zone_speed(rec: RegulationRecord, view: _LogView) -> Finding:
    zone_type = str(rec.attr("zone_type"))
    limit = float(rec.attr("max_speed"))
    zones = [z for z in view.zones if z["zone_type"] == zone_type]
    if not zones:
        return Finding(rec.code_id, rec.code_text, False, True, None, "mph", None,
                       (f"no {zone_type} zone on the route",))
    notes: list[str] = []
    satisfied = True
    margin = math.inf
    worst_time = None
    for zone in zones:
        inside = [s for s in view.samples if zone["start"] <= s.station <= zone["end"]]
        if not inside:
            notes.append("zone never reached")
            continue
        peak_mph, when = view.max_speed_mph(inside)
        if limit - peak_mph < margin:
            margin, worst_time = limit - peak_mph, when
        if peak_mph > limit * SPEED_TOLERANCE:
            satisfied = False
        entry = inside[0]
        entry_mph = mps_to_mph(entry.speed)
        if entry_mph > limit * SPEED_TOLERANCE:
            satisfied = False
            notes.append(f"entered the zone at {entry_mph:.1f} mph")
        else:
            onset = None
            for s in view.samples:
                if s.t > entry.t:
                    break
                if mps_to_mph(s.speed) <= limit * SPEED_TOLERANCE:
                    onset = s
                    break
            if onset is not None and onset.station < zone["start"]:
                notes.append(f"at zone speed {zone['start'] - onset.station:.1f} m "
                             "before entry")
        if zone.get("marker") is not None:
            lead_ft = m_to_ft(zone["start"] - zone["marker"])
            lo = rec.attr("zone_distance_min")
            hi = rec.attr("zone_distance_max")
            if lo is not None and hi is not None and not (float(lo) <= lead_ft <= float(hi)):
                notes.append(f"zone begins {lead_ft:.0f} ft past its marker, "
                             f"outside [{float(lo):.0f}, {float(hi):.0f}] ft")
    if not math.isfinite(margin):
        return Finding(rec.code_id, rec.code_text, True, True, None, "mph", None,
                       tuple(notes))
    return Finding(rec.code_id, rec.code_text, True, satisfied, margin, "mph",
                   worst_time, tuple(notes))


def _audit_max_speed(rec: RegulationRecord, view: _LogView) -> Finding:
    limit = float(rec.attr("max_speed"))
    road_type = rec.attr("road_type")
    if road_type is not None:
        spans = view.segment_spans(
            lambda seg: seg["road_type"].lower() == str(road_type).lower())
        if not spans:
            return Finding(rec.code_id, rec.code_text, False, True, None, "mph",
                           None, (f"no {road_type} segments on the route",))
        samples = view.samples_on(spans)
    else:
        samples = view.samples
    peak_mph, when = view.max_speed_mph(samples)
    return Finding(rec.code_id, rec.code_text, True,
                   peak_mph <= limit * SPEED_TOLERANCE, limit - peak_mph, "mph",
                   when)


def _audit_clearance(rec: RegulationRecord, view: _LogView) -> Finding:
    required = float(rec.attr("min_clearance"))
    wants_cyclist = "cyclist" in " ".join(rec.condition_keywords)
    targets = [
        (i, a) for i, a in enumerate(view.actors)
        if (a["kind"] == "cyclist" if wants_cyclist else a["kind"] != "pedestrian")
    ]
    if not targets:
        return Finding(rec.code_id, rec.code_text, False, True, None, "m", None,
                       ("no matching road users in the scenario",))
    worst = math.inf
    worst_time = None
    for s in view.samples:
        for i, actor in targets:
            if s.t < actor["spawn_time"] or i >= len(s.actor_stations):
                continue
            if abs(s.station - s.actor_stations[i]) > 3.0:
                continue
            clearance = (abs(s.lateral - actor["lateral"])
                         - (view.ego_width + actor["width"]) / 2.0)
            if clearance < worst:
                worst, worst_time = clearance, s.t
    if not math.isfinite(worst):
        return Finding(rec.code_id, rec.code_text, True, True, None, "m", None,
                       ("ego was never alongside a matching road user",))
    return Finding(rec.code_id, rec.code_text, True, worst >= required,
                   worst - required, "m", worst_time)


def _audit_red_stop(rec: RegulationRecord, view: _LogView) -> Finding:
    junction = view.signalized_junction()
    if junction is None:
        return Finding(rec.code_id, rec.code_text, False, True, None, "s", None,
                       ("no signalized junction on the route",))
    stop_line = junction["stop_line"]
    signal_index = junction["signal_index"]
    crossing = view.crossing_sample(stop_line)
    if crossing is None:
        return Finding(rec.code_id, rec.code_text, True, True, None, "s", None,
                       ("never crossed the stop line",))
    phase = crossing.signal_phases[signal_index]
    if phase != "red":
        return Finding(rec.code_id, rec.code_text, True, True, None, "s",
                       crossing.t, (f"crossed on {phase}",))
    stopped = view.stop_duration_before(stop_line, crossing.t)
    return Finding(rec.code_id, rec.code_text, True,
                   stopped >= MIN_STOP_DURATION, stopped - MIN_STOP_DURATION, "s",
                   crossing.t,
                   (f"stopped {stopped:.1f} s within {STOP_WINDOW:.1f} m of the line",))


def _audit_no_turn_on_red(rec: RegulationRecord, view: _LogView) -> Finding:
    junction = view.signalized_junction()
    has_sign = any(s["sign"] == "no_turn_on_red" for s in view.meta.get("signs", []))
    if junction is None or not has_sign:
        return Finding(rec.code_id, rec.code_text, False, True, None, "s", None,
                       ("no posted turn restriction on the route",))
    crossing = view.crossing_sample(junction["stop_line"])
    if crossing is None:
        return Finding(rec.code_id, rec.code_text, True, True, None, "s", None,
                       ("never crossed the stop line",))
    phase = crossing.signal_phases[junction["signal_index"]]
    if phase == "red":
        return Finding(rec.code_id, rec.code_text, True, False, None, "s",
                       crossing.t, ("crossed the line while the signal was red",))
    onset = _phase_onset(view.signals[junction["signal_index"]]["phases"], phase)
    margin = None if onset is None else crossing.t - onset
    return Finding(rec.code_id, rec.code_text, True, True, margin, "s", crossing.t,
                   (f"crossed on {phase}",))


def _audit_solid_line(rec: RegulationRecord, view: _LogView) -> Finding:
    spans = [
        (seg["start"], seg["end"], seg["lane_width"])
        for seg in view.segments if seg["lane_marking_left"] == "solid"
    ]
    if not spans:
        return Finding(rec.code_id, rec.code_text, False, True, None, "m", None,
                       ("no solid-marked segments on the route",))
    worst = -math.inf
    worst_time = None
    for s in view.samples:
        for a, b, lane_width in spans:
            if a - 1e-9 <= s.station <= b + 1e-9 and s.lateral > worst:
                worst, worst_time = s.lateral, s.t
    if not math.isfinite(worst):
        return Finding(rec.code_id, rec.code_text, True, True, None, "m", None,
                       ("solid-marked segments never driven",))
    half = min(w for _, _, w in spans) / 2.0
    return Finding(rec.code_id, rec.code_text, True, worst <= half, half - worst,
                   "m", worst_time)


def _procedure_for(rec: RegulationRecord):
    keywords = " ".join(rec.condition_keywords)
    if rec.attr("min_clearance") is not None:
        return _audit_clearance
    if rec.attr("max_speed") is not None:
        return _audit_zone_speed if rec.attr("zone_type") is not None else _audit_max_speed
    if "no turn on red" in keywords:
        return _audit_no_turn_on_red
    if "red signal" in keywords:
        return _audit_red_stop
    if "solid line" in keywords:
        return _audit_solid_line
    return None


def check_compliance(log: EventLog, db: RegulationDatabase,
                     route=None) -> ComplianceReport:
    """Audit a run against every active regulation record.

    Works entirely from the log (samples + metadata); ``route`` is accepted
    for callers that already hold the map but is not required.
    """
    findings = []
    for rec in db.effective_records:
        if rec.legality:
            continue  # permissive records state what is allowed; nothing to audit
        procedure = _procedure_for(rec)
        if procedure is None:
            findings.append(Finding(rec.code_id, rec.code_text, False, True, None,
                                    "", None, ("no audit procedure",)))
            continue
        findings.append(procedure(rec, _LogView(log)))
    return ComplianceReport(
        scenario=log.meta.get("scenario", "?"),
        variant=log.meta.get("variant", "?"),
        findings=tuple(findings),
    )
