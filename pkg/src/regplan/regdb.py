"""Machine-readable regulation database.

Records are stored as CSV rows with semicolon-separated multi-value cells.
Each record names the FSM states it can apply to, keyword phrases that must
all be present in the scene conditions, and optional numeric attributes
with explicit units.  Querying is indexed by (current state, next state);
legality evaluation checks a candidate plan's numeric attributes against
every applicable record and reports the tightest binding limits for
trajectory shaping.

Jurisdiction layering: records live in city / county / state / model-code
layers.  A more local record with the same code id shadows the less local
one; distinct code ids simply stack, so adding records can only tighten
the binding limits.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from datetime import date
from enum import IntEnum

from regplan.fsm import STATE_NAME_REGISTRY
from regplan.scene import SceneConditions, phrase_in_view

CSV_HEADER = [
    "code_id", "jurisdiction_level", "jurisdiction_name", "effective_date",
    "code_text", "condition", "result", "legality", "attributes",
    "possible_current_states", "possible_next_states",
]


class RegulationError(ValueError):
    pass


class ParseError(RegulationError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ConflictError(RegulationError):
    pass


class QueryError(RegulationError):
    pass


class JurisdictionLevel(IntEnum):
    """Ordered by precedence: the most local layer wins a shadowing conflict."""

    MODEL_CODE = 0
    STATE = 1
    COUNTY = 2
    CITY = 3


@dataclass(frozen=True)
class Jurisdiction:
    level: JurisdictionLevel
    name: str


@dataclass(frozen=True)
class AttributeValue:
    value: float | str
    unit: str | None = None

    def render(self) -> str:
        if isinstance(self.value, str):
            return self.value
        text = f"{self.value:g}"
        return f"{text} {self.unit}" if self.unit else text


# name -> (kind, required unit).  "threshold-over" attributes are violated
# when the plan exceeds them, "threshold-under" when the plan dips below.
ATTRIBUTE_SCHEMA: dict[str, tuple[str, str | None]] = {
    "road_type": ("match", None),           # extra matching condition
    "zone_type": ("scope", None),           # restricts speed checks to a zone kind
    "max_speed": ("threshold-over", "mph"),
    "min_clearance": ("threshold-under", "m"),
    "zone_distance_min": ("descriptive", "ft"),
    "zone_distance_max": ("descriptive", "ft"),
}


@dataclass(frozen=True)
class RegulationRecord:
    code_id: str
    jurisdiction: Jurisdiction
    effective_date: date
    code_text: str
    condition_keywords: tuple
    result_text: str
    legality: bool                      # True = conduct is legal, False = violation
    attributes: dict = field(default_factory=dict)
    possible_current_states: frozenset = frozenset()
    possible_next_states: frozenset = frozenset()

    def attr(self, name: str):
        a = self.attributes.get(name)
        return None if a is None else a.value


@dataclass(frozen=True)
class Violation:
    code_id: str
    field_name: str
    message: str


@dataclass(frozen=True)
class LegalityVerdict:
    legal: bool
    matched_records: tuple       # code ids of violated records
    binding_limits: dict         # e.g. {"max_speed": mph, "min_clearance": m}


class RegulationDatabase:
    def __init__(self, records, active_chain=(), active_date: date | None = None):
        self.records = list(records)
        self.active_chain = tuple(active_chain)
        self.active_date = active_date
        self._effective = self._resolve_effective()
        self._index = self._build_index()

    def _resolve_effective(self):
        chain_levels = {j.level: j.name for j in self.active_chain}
        candidates = []
        for rec in self.records:
            if self.active_chain:
                name = chain_levels.get(rec.jurisdiction.level)
                if name is None or name != rec.jurisdiction.name:
                    continue
            if self.active_date is not None and rec.effective_date > self.active_date:
                continue
            candidates.append(rec)
        # Same code id across layers: the most local one shadows the rest.
        best: dict[str, RegulationRecord] = {}
        order: list[str] = []
        for rec in candidates:
            prev = best.get(rec.code_id)
            if prev is None:
                best[rec.code_id] = rec
                order.append(rec.code_id)
            elif rec.jurisdiction.level > prev.jurisdiction.level:
                best[rec.code_id] = rec
        return [best[cid] for cid in order]

    def _build_index(self):
        index: dict[tuple[str, str], list[int]] = {}
        for i, rec in enumerate(self._effective):
            for cur in rec.possible_current_states:
                for nxt in rec.possible_next_states:
                    index.setdefault((cur, nxt), []).append(i)
        return index

    @property
    def effective_records(self):
        return list(self._effective)

    def __len__(self) -> int:
        return len(self.records)


def activate(db: RegulationDatabase, chain, on_date: date | None = None) -> RegulationDatabase:
    """Filtered copy of the database for a jurisdiction chain and date."""
    return RegulationDatabase(db.records, active_chain=chain, active_date=on_date)


def _split_multi(cell: str):
    return [part.strip() for part in cell.split(";") if part.strip()]


def _parse_attributes(cell: str, row: int) -> dict:
    attrs: dict[str, AttributeValue] = {}
    for item in _split_multi(cell):
        if "=" not in item:
            raise ParseError(row, f"attribute {item!r} is not key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        m = re.fullmatch(r"(-?\d+(?:\.\d+)?)(?:\s+(\S+))?", raw)
        if m:
            attrs[key] = AttributeValue(float(m.group(1)), m.group(2))
        else:
            attrs[key] = AttributeValue(raw)
    return attrs


def parse_regulation_csv(source, registry: frozenset = STATE_NAME_REGISTRY,
                         strict_states: bool = True) -> RegulationDatabase:
    """Parse CSV text (or a file object) into a database.

    Raises ParseError for structural problems (wrong column count, bad
    values), ConflictError for duplicate code ids within one jurisdiction,
    and ParseError for unregistered state names unless ``strict_states``
    is disabled (validation can then report them instead).
    """
    text = source.read() if hasattr(source, "read") else source
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader]
    if not rows:
        raise ParseError(0, "empty file")
    if rows[0] != CSV_HEADER:
        raise ParseError(1, f"header must be {','.join(CSV_HEADER)}")

    records: list[RegulationRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(n, f"expected {len(CSV_HEADER)} columns, got {len(row)}")
        (code_id, level_s, name, date_s, code_text, condition, result,
         legality_s, attrs_s, cur_s, next_s) = row
        try:
            level = JurisdictionLevel[level_s.strip().upper()]
        except KeyError:
            raise ParseError(n, f"unknown jurisdiction level {level_s!r}") from None
        try:
            eff = date.fromisoformat(date_s.strip())
        except ValueError:
            raise ParseError(n, f"bad effective date {date_s!r}") from None
        legality_norm = legality_s.strip().upper()
        if legality_norm not in ("TRUE", "FALSE"):
            raise ParseError(n, f"legality must be TRUE or FALSE, got {legality_s!r}")
        cur_states = frozenset(_split_multi(cur_s))
        next_states = frozenset(_split_multi(next_s))
        if strict_states:
            for state in sorted((cur_states | next_states) - registry):
                raise ParseError(n, f"unregistered state name {state!r}")
        key = (code_id.strip(), level_s.strip(), name.strip())
        if key in seen:
            raise ConflictError(
                f"duplicate code id {code_id!r} within jurisdiction {name!r}")
        seen.add(key)
        records.append(RegulationRecord(
            code_id=code_id.strip(),
            jurisdiction=Jurisdiction(level, name.strip()),
            effective_date=eff,
            code_text=code_text,
            condition_keywords=tuple(kw.lower() for kw in _split_multi(condition)),
            result_text=result,
            legality=(legality_norm == "TRUE"),
            attributes=_parse_attributes(attrs_s, n),
            possible_current_states=cur_states,
            possible_next_states=next_states,
        ))
    return RegulationDatabase(records)


def serialize_regulation_csv(db: RegulationDatabase) -> str:
    """Inverse of parsing: structurally identical records round-trip."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in db.records:
        writer.writerow([
            rec.code_id,
            rec.jurisdiction.level.name.lower(),
            rec.jurisdiction.name,
            rec.effective_date.isoformat(),
            rec.code_text,
            "; ".join(rec.condition_keywords),
            rec.result_text,
            "TRUE" if rec.legality else "FALSE",
            ";".join(f"{k}={rec.attributes[k].render()}" for k in sorted(rec.attributes)),
            "; ".join(sorted(rec.possible_current_states)),
            "; ".join(sorted(rec.possible_next_states)),
        ])
    return out.getvalue()


def validate_database(db: RegulationDatabase,
                      registry: frozenset = STATE_NAME_REGISTRY) -> list[Violation]:
    """Structural health check; one violation per defect found."""
    violations: list[Violation] = []
    seen: dict[tuple, int] = {}
    for rec in db.records:
        for state in sorted(rec.possible_current_states - registry):
            violations.append(Violation(rec.code_id, "possible_current_states",
                                        f"unregistered state name {state!r}"))
        for state in sorted(rec.possible_next_states - registry):
            violations.append(Violation(rec.code_id, "possible_next_states",
                                        f"unregistered state name {state!r}"))
        if not rec.legality and not rec.condition_keywords:
            violations.append(Violation(rec.code_id, "condition",
                                        "violation record has no condition keywords"))
        if not rec.possible_current_states:
            violations.append(Violation(rec.code_id, "possible_current_states",
                                        "record applies to no current state"))
        if not rec.possible_next_states:
            violations.append(Violation(rec.code_id, "possible_next_states",
                                        "record applies to no next state"))
        for name in sorted(rec.attributes):
            attr = rec.attributes[name]
            schema = ATTRIBUTE_SCHEMA.get(name)
            if schema is None:
                violations.append(Violation(rec.code_id, name,
                                            f"unknown attribute {name!r}"))
                continue
            kind, unit = schema
            if kind in ("threshold-over", "threshold-under", "descriptive"):
                if not isinstance(attr.value, float):
                    violations.append(Violation(rec.code_id, name,
                                                f"attribute {name!r} must be numeric"))
                elif attr.unit != unit:
                    violations.append(Violation(
                        rec.code_id, name,
                        f"attribute {name!r} must carry unit {unit!r}, got {attr.unit!r}"))
                elif attr.value <= 0:
                    violations.append(Violation(rec.code_id, name,
                                                f"attribute {name!r} must be positive"))
        zmin, zmax = rec.attr("zone_distance_min"), rec.attr("zone_distance_max")
        if isinstance(zmin, float) and isinstance(zmax, float) and zmin > zmax:
            violations.append(Violation(rec.code_id, "zone_distance_min",
                                        "zone distance band is inverted"))
        key = (rec.code_id, rec.jurisdiction.level, rec.jurisdiction.name)
        seen[key] = seen.get(key, 0) + 1
    for (code_id, level, name), count in seen.items():
        if count > 1:
            violations.append(Violation(
                code_id, "code_id",
                f"duplicate within jurisdiction {name!r} ({count} copies)"))
    return violations


def _names_of(state) -> frozenset:
    if hasattr(state, "name_set"):
        return state.name_set
    return frozenset({str(state)})


def query_applicable(db: RegulationDatabase, current_state, next_state,
                     conditions: SceneConditions):
    """Records whose state pairs and conditions all apply right now.

    States may be given as names or as FSM driving states; a record naming
    a superstate matches every maneuver inside it.
    """
    cur_names = _names_of(current_state)
    next_names = _names_of(next_state)
    for name in sorted((cur_names | next_names) - STATE_NAME_REGISTRY):
        raise QueryError(f"unregistered state name {name!r}")
    idxs: list[int] = []
    for cur in cur_names:
        for nxt in next_names:
            idxs.extend(db._index.get((cur, nxt), ()))
    view = conditions.keyword_view()
    results = []
    for i in sorted(set(idxs)):
        rec = db._effective[i]
        if not all(phrase_in_view(kw, view) for kw in rec.condition_keywords):
            continue
        road_type = rec.attr("road_type")
        if road_type is not None:
            if conditions.road_type is None:
                continue  # unknown road type never satisfies the condition
            if str(road_type).lower() != conditions.road_type.lower():
                continue
        results.append(rec)
    return results


def _plan_speed_for(record: RegulationRecord, plan_attributes: dict) -> float | None:
    zone = record.attr("zone_type")
    if zone is not None:
        return plan_attributes.get(f"max_speed_in_zone:{zone}")
    return plan_attributes.get("max_speed")


def _record_fires(record: RegulationRecord, plan_attributes: dict) -> bool:
    """All threshold attributes must be violated; unknown values never fire.

    A record without thresholds fires on its matched conditions alone.
    """
    max_speed = record.attr("max_speed")
    if max_speed is not None:
        plan_speed = _plan_speed_for(record, plan_attributes)
        if plan_speed is None or plan_speed <= max_speed:
            return False
    min_clear = record.attr("min_clearance")
    if min_clear is not None:
        plan_clear = plan_attributes.get("min_clearance")
        if plan_clear is None or plan_clear >= min_clear:
            return False
    return True


def evaluate_legality(db: RegulationDatabase, plan, conditions: SceneConditions,
                      ) -> LegalityVerdict:
    """Score one candidate plan against every applicable record.

    ``plan`` must expose current_state, next_state, and an ``attributes``
    dict (mph speeds, meters clearances) describing the trajectory.  The
    verdict is legal iff no violation record fully matches; binding limits
    collect the tightest global limits for trajectory shaping (zone-scoped
    limits are left to the planner, which knows the zone geometry).
    """
    plan_attrs = dict(getattr(plan, "attributes", {}) or {})
    if "max_speed" not in plan_attrs and getattr(plan, "trajectory", None) is not None:
        from regplan.units import mps_to_mph

        plan_attrs["max_speed"] = mps_to_mph(plan.trajectory.max_speed())
    applicable = query_applicable(db, plan.current_state, plan.next_state, conditions)
    matched = [rec.code_id for rec in applicable
               if not rec.legality and _record_fires(rec, plan_attrs)]
    binding: dict[str, float] = {}
    for rec in applicable:
        max_speed = rec.attr("max_speed")
        if max_speed is not None and rec.attr("zone_type") is None:
            binding["max_speed"] = min(binding.get("max_speed", float("inf")), max_speed)
        min_clear = rec.attr("min_clearance")
        if min_clear is not None:
            binding["min_clearance"] = max(binding.get("min_clearance", 0.0), min_clear)
    if conditions.posted_speed_limit is not None:
        binding["max_speed"] = min(binding.get("max_speed", float("inf")),
                                   conditions.posted_speed_limit)
    return LegalityVerdict(
        legal=not matched,
        matched_records=tuple(matched),
        binding_limits=binding,
    )
