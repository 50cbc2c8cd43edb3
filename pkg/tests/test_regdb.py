"""Regulation database: parsing, validation, querying, legality scoring."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np
import pytest

from regplan.fsm import DrivingState, Substate, Superstate
from regplan.regdb import (
    CSV_HEADER,
    AttributeValue,
    ConflictError,
    Jurisdiction,
    JurisdictionLevel,
    ParseError,
    QueryError,
    RegulationDatabase,
    RegulationRecord,
    Violation,
    activate,
    evaluate_legality,
    parse_regulation_csv,
    query_applicable,
    serialize_regulation_csv,
    validate_database,
)
from regplan.scene import SceneConditions, Sign, TrafficLight
from regplan.sim.runner import default_database

from oracles import (
    ACTIVE_CHAIN,
    oracle_effective,
    oracle_legality,
    oracle_query,
    random_conditions,
    random_plan_attrs,
    random_records,
    random_state_or_name,
)

HEADER = ",".join(CSV_HEADER)
GO_STRAIGHT = DrivingState(Superstate.LANE_FOLLOWING, Substate.GO_STRAIGHT)
STOPPED = DrivingState(Superstate.INTERSECTION_HANDLING, Substate.STOPPED_AT_LINE)
TURN_RIGHT = DrivingState(Superstate.INTERSECTION_HANDLING, Substate.TURN_RIGHT)
OVERTAKE_OUT = DrivingState(Superstate.OVERTAKING, Substate.OVERTAKE_OUT)


@dataclass
class PlanStub:
    current_state: object
    next_state: object
    attributes: dict = field(default_factory=dict)


def _record(**overrides) -> RegulationRecord:
    base = dict(
        code_id="TEST-1",
        jurisdiction=Jurisdiction(JurisdictionLevel.STATE, "California"),
        effective_date=date(2020, 1, 1),
        code_text="synthetic",
        condition_keywords=("cyclist",),
        result_text="synthetic",
        legality=True,
        attributes={},
        possible_current_states=frozenset({"Go Straight"}),
        possible_next_states=frozenset({"Go Straight"}),
    )
    base.update(overrides)
    return RegulationRecord(**base)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_single_row_parses_every_field():
    text = HEADER + "\n" + (
        "TEST-1,city,Oakland,2021-06-15,Example code text.,"
        "cyclist; bicycle lane,fine,FALSE,max_speed=45 mph;min_clearance=1.5 m,"
        "Go Straight; Car Following,Overtaking\n")
    db = parse_regulation_csv(text)
    assert len(db) == 1
    rec = db.records[0]
    assert rec.code_id == "TEST-1"
    assert rec.jurisdiction == Jurisdiction(JurisdictionLevel.CITY, "Oakland")
    assert rec.effective_date == date(2021, 6, 15)
    assert rec.code_text == "Example code text."
    assert rec.condition_keywords == ("cyclist", "bicycle lane")
    assert rec.result_text == "fine"
    assert rec.legality is False
    assert rec.attributes == {"max_speed": AttributeValue(45.0, "mph"),
                              "min_clearance": AttributeValue(1.5, "m")}
    assert rec.possible_current_states == frozenset({"Go Straight", "Car Following"})
    assert rec.possible_next_states == frozenset({"Overtaking"})
    assert rec.attr("max_speed") == 45.0
    assert rec.attr("zone_type") is None


def test_header_only_gives_empty_database():
    db = parse_regulation_csv(HEADER + "\n")
    assert len(db) == 0
    assert db.effective_records == []


def test_file_object_source():
    import io
    db = parse_regulation_csv(io.StringIO(HEADER + "\n"))
    assert len(db) == 0


@pytest.mark.parametrize("text,match", [
    ("", r"row 0: empty file"),
    ("not,the,header\n", r"row 1: header must be"),
    (HEADER + "\nA,state,CA,2020-01-01,t,c,r,FALSE,,Go Straight\n",
     r"row 2: expected 11 columns, got 10"),
    (HEADER + "\nA,galaxy,CA,2020-01-01,t,c,r,FALSE,,Go Straight,Go Straight\n",
     r"unknown jurisdiction level 'galaxy'"),
    (HEADER + "\nA,state,CA,June 2020,t,c,r,FALSE,,Go Straight,Go Straight\n",
     r"bad effective date 'June 2020'"),
    (HEADER + "\nA,state,CA,2020-01-01,t,c,r,MAYBE,,Go Straight,Go Straight\n",
     r"legality must be TRUE or FALSE"),
    (HEADER + "\nA,state,CA,2020-01-01,t,c,r,FALSE,max_speed 45,Go Straight,Go Straight\n",
     r"attribute 'max_speed 45' is not key=value"),
    (HEADER + "\nA,state,CA,2020-01-01,t,c,r,FALSE,,Warp Drive,Go Straight\n",
     r"unregistered state name 'Warp Drive'"),
])
def test_structural_parse_errors(text, match):
    with pytest.raises(ParseError, match=match):
        parse_regulation_csv(text)


def test_duplicate_code_id_within_jurisdiction_conflicts():
    row = "A,state,CA,2020-01-01,t,c,r,FALSE,,Go Straight,Go Straight\n"
    with pytest.raises(ConflictError, match="duplicate code id 'A'"):
        parse_regulation_csv(HEADER + "\n" + row + row)


def test_same_code_id_in_another_jurisdiction_is_allowed():
    text = (HEADER + "\n"
            "A,state,California,2020-01-01,t,c,r,FALSE,,Go Straight,Go Straight\n"
            "A,city,Oakland,2020-01-01,t,c,r,FALSE,,Go Straight,Go Straight\n")
    assert len(parse_regulation_csv(text)) == 2


def test_lenient_parse_defers_state_check_to_validation():
    text = HEADER + "\nA,state,CA,2020-01-01,t,c,r,TRUE,,Warp Drive,Go Straight\n"
    db = parse_regulation_csv(text, strict_states=False)
    assert len(db) == 1
    violations = validate_database(db)
    assert violations == [
        Violation("A", "possible_current_states", "unregistered state name 'Warp Drive'")]


def test_serialize_parse_round_trip_bundled():
    db = default_database()
    again = parse_regulation_csv(serialize_regulation_csv(db))
    assert again.records == db.records
    assert serialize_regulation_csv(again) == serialize_regulation_csv(db)


def test_serialize_parse_round_trip_random():
    rng = np.random.default_rng(31337)
    unique: dict[tuple, RegulationRecord] = {}
    for rec in random_records(rng, 60):
        unique.setdefault(
            (rec.code_id, rec.jurisdiction.level, rec.jurisdiction.name), rec)
    db = RegulationDatabase(list(unique.values()))
    again = parse_regulation_csv(serialize_regulation_csv(db))
    assert again.records == db.records


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("overrides,field_name,message_part", [
    (dict(possible_current_states=frozenset({"Warp Drive"})),
     "possible_current_states", "unregistered state name 'Warp Drive'"),
    (dict(possible_next_states=frozenset({"Hyperspace"})),
     "possible_next_states", "unregistered state name 'Hyperspace'"),
    (dict(legality=False, condition_keywords=()),
     "condition", "violation record has no condition keywords"),
    (dict(possible_current_states=frozenset()),
     "possible_current_states", "record applies to no current state"),
    (dict(possible_next_states=frozenset()),
     "possible_next_states", "record applies to no next state"),
    (dict(attributes={"frobnication": AttributeValue(1.0, None)}),
     "frobnication", "unknown attribute 'frobnication'"),
    (dict(attributes={"max_speed": AttributeValue("fast")}),
     "max_speed", "attribute 'max_speed' must be numeric"),
    (dict(attributes={"max_speed": AttributeValue(45.0, "kph")}),
     "max_speed", "attribute 'max_speed' must carry unit 'mph', got 'kph'"),
    (dict(attributes={"min_clearance": AttributeValue(-1.0, "m")}),
     "min_clearance", "attribute 'min_clearance' must be positive"),
    (dict(attributes={"zone_distance_min": AttributeValue(800.0, "ft"),
                      "zone_distance_max": AttributeValue(500.0, "ft")}),
     "zone_distance_min", "zone distance band is inverted"),
])
def test_validation_flags_each_defect(overrides, field_name, message_part):
    db = RegulationDatabase([_record(**overrides)])
    violations = validate_database(db)
    assert any(v.field_name == field_name and message_part in v.message
               for v in violations), violations


def test_validation_flags_duplicates():
    db = RegulationDatabase([_record(), _record()])
    violations = validate_database(db)
    assert any(v.field_name == "code_id"
               and "duplicate within jurisdiction 'California' (2 copies)" in v.message
               for v in violations)


def test_clean_record_validates_clean():
    assert validate_database(RegulationDatabase([_record()])) == []


def test_bundled_database_is_valid():
    db = default_database()
    assert len(db) == 6
    assert [r.code_id for r in db.records] == [
        "CVC-22348", "CVC-21760", "CVC-21453A", "CVC-21453B",
        "CVC-22358", "CVC-21460"]
    assert validate_database(db) == []


# ---------------------------------------------------------------------------
# jurisdiction layering
# ---------------------------------------------------------------------------

def _speed_record(level: JurisdictionLevel, name: str, mph: float,
                  effective: date = date(2020, 1, 1)) -> RegulationRecord:
    return _record(code_id="SPD-1", jurisdiction=Jurisdiction(level, name),
                   effective_date=effective, legality=False,
                   condition_keywords=("highway",),
                   attributes={"max_speed": AttributeValue(mph, "mph"),
                               "road_type": AttributeValue("Highway")})


def test_more_local_record_shadows_same_code_id():
    state = _speed_record(JurisdictionLevel.STATE, "California", 65.0)
    city = _speed_record(JurisdictionLevel.CITY, "San Francisco", 25.0)
    db = activate(RegulationDatabase([state, city]), ACTIVE_CHAIN, date(2024, 1, 1))
    assert len(db.records) == 2          # raw records preserved
    assert len(db.effective_records) == 1
    assert db.effective_records[0].attr("max_speed") == 25.0
    assert db.effective_records[0].jurisdiction.level is JurisdictionLevel.CITY


def test_activation_filters_by_chain_and_date():
    in_chain = _speed_record(JurisdictionLevel.STATE, "California", 65.0)
    other_state = _speed_record(JurisdictionLevel.STATE, "Nevada", 80.0)
    future = _speed_record(JurisdictionLevel.CITY, "San Francisco", 25.0,
                           effective=date(2027, 1, 1))
    db = activate(RegulationDatabase([in_chain, other_state, future]),
                  ACTIVE_CHAIN, date(2024, 1, 1))
    assert [r.jurisdiction.name for r in db.effective_records] == ["California"]
    # once the future record takes effect it shadows the state layer
    later = activate(db, ACTIVE_CHAIN, date(2027, 6, 1))
    assert [r.jurisdiction.name for r in later.effective_records] == ["San Francisco"]


def test_unactivated_database_keeps_distinct_code_ids():
    records = random_records(np.random.default_rng(7), 30)
    db = RegulationDatabase(records)
    expected = oracle_effective(records)
    assert [(r.code_id, r.jurisdiction) for r in db.effective_records] == \
        [(r.code_id, r.jurisdiction) for r in expected]


# ---------------------------------------------------------------------------
# applicability queries
# ---------------------------------------------------------------------------

def test_query_requires_every_keyword():
    rec = _record(condition_keywords=("cyclist", "red signal"))
    db = RegulationDatabase([rec])
    only_cyclist = SceneConditions(cyclist_ahead=20.0)
    both = SceneConditions(cyclist_ahead=20.0, traffic_light=TrafficLight.RED)
    assert query_applicable(db, GO_STRAIGHT, GO_STRAIGHT, only_cyclist) == []
    assert query_applicable(db, GO_STRAIGHT, GO_STRAIGHT, both) == [rec]


def test_query_road_type_is_conservative_on_unknown():
    rec = _record(condition_keywords=(),
                  attributes={"road_type": AttributeValue("Highway")})
    db = RegulationDatabase([rec])
    assert query_applicable(db, GO_STRAIGHT, GO_STRAIGHT, SceneConditions()) == []
    highway = SceneConditions(road_type="HIGHWAY")   # case-insensitive match
    assert query_applicable(db, GO_STRAIGHT, GO_STRAIGHT, highway) == [rec]
    city = SceneConditions(road_type="city street")
    assert query_applicable(db, GO_STRAIGHT, GO_STRAIGHT, city) == []


def test_superstate_name_matches_every_member_maneuver():
    rec = _record(condition_keywords=(),
                  possible_current_states=frozenset({"Lane Following"}),
                  possible_next_states=frozenset({"Overtaking"}))
    db = RegulationDatabase([rec])
    assert query_applicable(db, GO_STRAIGHT, OVERTAKE_OUT, SceneConditions()) == [rec]
    assert query_applicable(db, STOPPED, OVERTAKE_OUT, SceneConditions()) == []


def test_query_accepts_plain_state_names():
    db = default_database()
    cond = SceneConditions(traffic_light=TrafficLight.RED, intersection_ahead=10.0,
                           signs=frozenset({Sign.NO_TURN_ON_RED}))
    hits = query_applicable(db, "Stopped At Line", "Turn Right", cond)
    assert [r.code_id for r in hits] == ["CVC-21453B"]


def test_query_rejects_unregistered_state_name():
    with pytest.raises(QueryError, match="unregistered state name 'Warp Drive'"):
        query_applicable(default_database(), "Warp Drive", "Go Straight",
                         SceneConditions())


def test_no_turn_on_red_sign_gates_the_prohibition():
    db = default_database()
    red_only = SceneConditions(traffic_light=TrafficLight.RED, intersection_ahead=10.0)
    assert query_applicable(db, STOPPED, TURN_RIGHT, red_only) == []
    with_sign = replace(red_only, signs=frozenset({Sign.NO_TURN_ON_RED}))
    verdict = evaluate_legality(db, PlanStub(STOPPED, TURN_RIGHT, {"max_speed": 8.0}),
                                with_sign)
    assert not verdict.legal
    assert verdict.matched_records == ("CVC-21453B",)


def test_indexed_query_equals_naive_scan():
    rng = np.random.default_rng(31337)
    records = random_records(rng, 100)
    plain = RegulationDatabase(records)
    chained = activate(plain, ACTIVE_CHAIN, date(2024, 6, 1))
    for _ in range(300):
        current = random_state_or_name(rng)
        next_ = random_state_or_name(rng)
        cond = random_conditions(rng)
        got = {r.code_id for r in query_applicable(plain, current, next_, cond)}
        assert got == oracle_query(records, current, next_, cond)
        got = {r.code_id for r in query_applicable(chained, current, next_, cond)}
        assert got == oracle_query(records, current, next_, cond,
                                   ACTIVE_CHAIN, date(2024, 6, 1))


# ---------------------------------------------------------------------------
# legality evaluation
# ---------------------------------------------------------------------------

def test_highway_speed_fixture():
    db = default_database()
    cond = SceneConditions(road_type="highway")
    fast = evaluate_legality(db, PlanStub(GO_STRAIGHT, GO_STRAIGHT,
                                          {"max_speed": 105.0}), cond)
    slow = evaluate_legality(db, PlanStub(GO_STRAIGHT, GO_STRAIGHT,
                                          {"max_speed": 60.0}), cond)
    assert (fast.legal, fast.matched_records) == (False, ("CVC-22348",))
    assert (slow.legal, slow.matched_records) == (True, ())
    assert fast.binding_limits == slow.binding_limits == {"max_speed": 100.0}


def test_clearance_threshold_fires_strictly_below():
    db = default_database()
    cond = SceneConditions(cyclist_ahead=15.0)
    def verdict(clearance):
        return evaluate_legality(
            db, PlanStub(GO_STRAIGHT, OVERTAKE_OUT,
                         {"max_speed": 20.0, "min_clearance": clearance}), cond)
    assert verdict(0.9143).legal is False
    assert verdict(0.9144).legal is True      # exactly the limit is lawful
    assert verdict(None and 0 or 1.5).legal is True
    assert verdict(0.9143).matched_records == ("CVC-21760",)
    assert verdict(1.5).binding_limits["min_clearance"] == 0.9144


def test_record_without_thresholds_fires_on_conditions_alone():
    db = default_database()
    cond = SceneConditions(traffic_light=TrafficLight.RED, intersection_ahead=10.0)
    verdict = evaluate_legality(
        db, PlanStub(GO_STRAIGHT, TURN_RIGHT, {"max_speed": 5.0}), cond)
    assert not verdict.legal
    assert verdict.matched_records == ("CVC-21453A",)


def test_unknown_plan_attribute_never_fires_thresholds():
    db = default_database()
    cond = SceneConditions(road_type="highway")
    verdict = evaluate_legality(db, PlanStub(GO_STRAIGHT, GO_STRAIGHT, {}), cond)
    assert verdict.legal
    assert verdict.binding_limits == {"max_speed": 100.0}


def test_zone_scoped_speed_uses_zone_keyed_plan_attribute():
    rec = _record(code_id="SCHOOL-1", legality=False,
                  condition_keywords=("school zone",),
                  attributes={"max_speed": AttributeValue(25.0, "mph"),
                              "zone_type": AttributeValue("school")})
    db = RegulationDatabase([rec])
    cond = SceneConditions(school_zone_ahead=300.0)
    def verdict(attrs):
        return evaluate_legality(db, PlanStub(GO_STRAIGHT, GO_STRAIGHT, attrs), cond)
    assert verdict({"max_speed": 40.0}).legal is True       # no in-zone speed known
    in_zone_fast = verdict({"max_speed": 40.0, "max_speed_in_zone:school": 30.0})
    assert in_zone_fast.legal is False
    assert in_zone_fast.matched_records == ("SCHOOL-1",)
    assert verdict({"max_speed_in_zone:school": 20.0}).legal is True
    # zone-scoped limits stay out of the global binding set
    assert "max_speed" not in in_zone_fast.binding_limits


def test_posted_limit_tightens_binding_speed():
    db = default_database()
    cond = SceneConditions(road_type="highway",
                           signs=frozenset({Sign.SPEED_LIMIT}),
                           posted_speed_limit=55.0)
    verdict = evaluate_legality(db, PlanStub(GO_STRAIGHT, GO_STRAIGHT,
                                             {"max_speed": 60.0}), cond)
    assert verdict.binding_limits["max_speed"] == 55.0


def test_legality_matches_exhaustive_oracle():
    rng = np.random.default_rng(31338)
    records = random_records(rng, 100)
    plain = RegulationDatabase(records)
    chained = activate(plain, ACTIVE_CHAIN, date(2024, 6, 1))
    for _ in range(300):
        current = random_state_or_name(rng)
        next_ = random_state_or_name(rng)
        cond = random_conditions(rng)
        attrs = random_plan_attrs(rng)
        plan = PlanStub(current, next_, attrs)
        for db, chain, on in ((plain, (), None),
                              (chained, ACTIVE_CHAIN, date(2024, 6, 1))):
            verdict = evaluate_legality(db, plan, cond)
            legal, matched, binding = oracle_legality(
                records, current, next_, attrs, cond, chain, on)
            assert verdict.legal == legal
            assert set(verdict.matched_records) == matched
            assert verdict.binding_limits == binding


def test_trajectory_max_speed_fills_missing_plan_attribute():
    from regplan.geom import MotionLimits, generate_trajectory
    from regplan.units import mph_to_mps
    waypoints = [(float(x), 0.0) for x in range(0, 401, 2)]
    traj = generate_trajectory((0.0, 0.0, 0.0), mph_to_mps(105.0), waypoints,
                               MotionLimits(speed_limit_mph=110.0, accel=3.0,
                                            decel=3.0),
                               horizon=6.0)

    @dataclass
    class TrajPlan:
        current_state: object
        next_state: object
        trajectory: object
        attributes: dict = field(default_factory=dict)

    verdict = evaluate_legality(default_database(),
                                TrajPlan(GO_STRAIGHT, GO_STRAIGHT, traj),
                                SceneConditions(road_type="highway"))
    assert not verdict.legal
    assert verdict.matched_records == ("CVC-22348",)
