"""Scene describer and parser: sentences, round trips, merging, misdetection."""
from __future__ import annotations

import numpy as np
import pytest

from regplan.fsm import PROMPTS, Superstate
from regplan.scene import (
    EMPTY_SCENE_TEXT,
    MISDETECT_END_ROAD_WORK,
    MISDETECT_STOP_HERE_ON_RED,
    DescriberConfig,
    DescriberResponse,
    GroundTruthView,
    LaneMarking,
    PROMPT_GATES,
    SceneConditions,
    Sign,
    TrafficLight,
    conditions_to_view,
    describe_scripted,
    merge_conditions,
    parse_response,
    phrase_in_view,
)

from oracles import oracle_merge, oracle_phrases, random_conditions

LF_PROMPT = PROMPTS[Superstate.LANE_FOLLOWING]
OT_PROMPT = PROMPTS[Superstate.OVERTAKING]
IH_PROMPT = PROMPTS[Superstate.INTERSECTION_HANDLING]

PLAIN = DescriberConfig()
MIS_ROAD_WORK = DescriberConfig(misdetections=frozenset({MISDETECT_END_ROAD_WORK}))
MIS_STOP = DescriberConfig(misdetections=frozenset({MISDETECT_STOP_HERE_ON_RED}))


def _lf(view: GroundTruthView, config: DescriberConfig = PLAIN) -> DescriberResponse:
    return describe_scripted(view, LF_PROMPT, produced_at=0.0, config=config)


# ---------------------------------------------------------------------------
# the nine canonical sentences
# ---------------------------------------------------------------------------

CANONICAL_ROWS = [
    (GroundTruthView(intersection_ahead=40.0), PLAIN,
     "Ego vehicle is approaching an intersection, approximately 40 meters ahead.",
     lambda c: c.intersection_ahead == 40.0),
    (GroundTruthView(pedestrian_in_view=True), PLAIN,
     "The intersection appears to have pedestrian crossing, the ego vehicle "
     "should stay alert and yield to pedestrians.",
     lambda c: c.pedestrian_present is True),
    (GroundTruthView(signs_in_view=((Sign.ROAD_WORK, 10.0, None),)), PLAIN,
     "There is a visible warning sign: Road Work Ahead.",
     lambda c: c.signs == frozenset({Sign.ROAD_WORK})),
    (GroundTruthView(signs_in_view=((Sign.SPEED_LIMIT, 15.0, 20.0),)), PLAIN,
     "The speed limit sign indicates 20 mph maximum speed.",
     lambda c: c.posted_speed_limit == 20.0 and Sign.SPEED_LIMIT in c.signs),
    (GroundTruthView(traffic_light=TrafficLight.RED), PLAIN,
     "There is a visible red traffic light in sight.",
     lambda c: c.traffic_light is TrafficLight.RED),
    (GroundTruthView(traffic_light=TrafficLight.GREEN), PLAIN,
     "There is a visible green traffic light in sight.",
     lambda c: c.traffic_light is TrafficLight.GREEN),
    (GroundTruthView(bicycle_lane_in_view=True), PLAIN,
     "There is a visible bicycle lane.",
     lambda c: c.bicycle_lane_present is True),
    # misdetection: an end-of-road-work sign reported as road work
    (GroundTruthView(signs_in_view=((Sign.END_ROAD_WORK, 12.0, None),)), MIS_ROAD_WORK,
     "There is a visible warning sign: Road Work Ahead.",
     lambda c: c.signs == frozenset({Sign.ROAD_WORK})),
    # misdetection: a stop-here-on-red sign reported as a stop sign
    (GroundTruthView(signs_in_view=((Sign.STOP_HERE_ON_RED, 8.0, None),)), MIS_STOP,
     "There is a visible stop sign.",
     lambda c: c.signs == frozenset({Sign.STOP})),
]


@pytest.mark.parametrize("row", range(len(CANONICAL_ROWS)))
def test_canonical_sentence_parses_to_designated_field(row):
    view, config, sentence, check = CANONICAL_ROWS[row]
    response = _lf(view, config)
    assert sentence in response.text
    diagnostics: list[str] = []
    conditions = parse_response(response, diagnostics)
    assert not diagnostics
    assert check(conditions)


def test_sentences_without_misdetection_keep_original_signs():
    end_work = _lf(GroundTruthView(signs_in_view=((Sign.END_ROAD_WORK, 12.0, None),)))
    assert "There is a visible warning sign: End Road Work." in end_work.text
    assert parse_response(end_work).signs == frozenset({Sign.END_ROAD_WORK})
    stop_here = _lf(GroundTruthView(signs_in_view=((Sign.STOP_HERE_ON_RED, 8.0, None),)))
    assert "There is a visible sign: Stop Here on Red." in stop_here.text
    assert parse_response(stop_here).signs == frozenset({Sign.STOP_HERE_ON_RED})


def test_misdetection_changes_exactly_one_sentence():
    view = GroundTruthView(intersection_ahead=30.0, traffic_light=TrafficLight.RED,
                           signs_in_view=((Sign.END_ROAD_WORK, 12.0, None),),
                           cyclist_ahead=20.0)
    plain = _lf(view).text.split(". ")
    swapped = _lf(view, MIS_ROAD_WORK).text.split(". ")
    assert len(plain) == len(swapped)
    differing = [(a, b) for a, b in zip(plain, swapped) if a != b]
    assert differing == [("There is a visible warning sign: End Road Work",
                          "There is a visible warning sign: Road Work Ahead")]


# ---------------------------------------------------------------------------
# describer behavior
# ---------------------------------------------------------------------------

def test_empty_scene_text_and_parse():
    response = _lf(GroundTruthView(road_type=""))
    assert response.text == EMPTY_SCENE_TEXT
    assert parse_response(response) == SceneConditions(observed_at=response.produced_at)


def test_unknown_prompt_is_rejected():
    with pytest.raises(ValueError, match="prompt"):
        describe_scripted(GroundTruthView(), "Tell me a story.")


def test_prompt_gates_limit_reported_fields():
    view = GroundTruthView(adjacent_left_lane_occupied=True,
                           school_zone_ahead_ft=500.0,
                           lane_marking_left=LaneMarking.DASHED)
    lane_following = parse_response(_lf(view))
    assert lane_following.adjacent_left_lane_occupied is None  # not asked
    assert lane_following.school_zone_ahead == 500.0
    overtaking = parse_response(describe_scripted(view, OT_PROMPT, config=PLAIN))
    assert overtaking.adjacent_left_lane_occupied is True
    assert overtaking.school_zone_ahead is None  # not asked
    intersection = parse_response(describe_scripted(view, IH_PROMPT, config=PLAIN))
    assert intersection.lane_marking_left is LaneMarking.UNKNOWN


def test_school_zone_sentence_variants():
    inside = _lf(GroundTruthView(school_zone_ahead_ft=0.0))
    assert "The ego vehicle is inside a school zone." in inside.text
    assert parse_response(inside).school_zone_ahead == 0.0
    ahead = _lf(GroundTruthView(school_zone_ahead_ft=650.0))
    assert "beginning in approximately 650 feet" in ahead.text
    assert parse_response(ahead).school_zone_ahead == 650.0


# ---------------------------------------------------------------------------
# parser totality
# ---------------------------------------------------------------------------

def test_parser_is_total_on_garbage():
    diagnostics: list[str] = []
    response = DescriberResponse("Fnord blips. The sky is tasty! What?", 1.0, LF_PROMPT)
    conditions = parse_response(response, diagnostics)
    assert conditions == SceneConditions(observed_at=1.0)
    assert diagnostics == ["Fnord blips.", "The sky is tasty!", "What?"]


def test_parser_accepts_empty_text():
    diagnostics: list[str] = []
    conditions = parse_response(DescriberResponse("", 2.0, LF_PROMPT), diagnostics)
    assert conditions == SceneConditions(observed_at=2.0)
    assert diagnostics == []


def test_partial_garbage_keeps_parseable_sentences():
    text = "There is a visible red traffic light in sight. Wibble wobble."
    diagnostics: list[str] = []
    conditions = parse_response(DescriberResponse(text, 0.0, LF_PROMPT), diagnostics)
    assert conditions.traffic_light is TrafficLight.RED
    assert diagnostics == ["Wibble wobble."]


# ---------------------------------------------------------------------------
# randomized describe/parse round trip
# ---------------------------------------------------------------------------

def _quantized_conditions(rng) -> SceneConditions:
    cond = random_conditions(rng)
    changes = {}
    for name in ("intersection_ahead", "cyclist_ahead", "school_zone_ahead"):
        value = getattr(cond, name)
        if value is not None:
            changes[name] = float(round(value))
    if cond.traffic_light is TrafficLight.NONE:
        changes["traffic_light"] = TrafficLight.UNKNOWN
    from dataclasses import replace
    return replace(cond, **changes)


def _assert_gated_round_trip(cond: SceneConditions, back: SceneConditions, gates):
    if "intersection" in gates:
        assert back.intersection_ahead == cond.intersection_ahead
    if "light" in gates:
        assert back.traffic_light == cond.traffic_light
    if "signs" in gates:
        assert set(back.signs or ()) == set(cond.signs or ())
        assert back.posted_speed_limit == cond.posted_speed_limit
    if "obstacles" in gates:
        assert back.cyclist_ahead == cond.cyclist_ahead
    if "pedestrian" in gates:
        assert bool(back.pedestrian_present) == bool(cond.pedestrian_present)
    if "occupancy" in gates:
        assert back.adjacent_left_lane_occupied == cond.adjacent_left_lane_occupied
    if "marking" in gates:
        assert back.lane_marking_left == cond.lane_marking_left
    if "school_zone" in gates:
        assert back.school_zone_ahead == cond.school_zone_ahead
    if "bicycle_lane" in gates:
        assert bool(back.bicycle_lane_present) == bool(cond.bicycle_lane_present)
    if "road_type" in gates:
        assert (back.road_type or None) == (cond.road_type or None)


def test_random_round_trip_under_every_prompt():
    rng = np.random.default_rng(303)
    for _ in range(200):
        cond = _quantized_conditions(rng)
        view = conditions_to_view(cond)
        for superstate, prompt in PROMPTS.items():
            diagnostics: list[str] = []
            back = parse_response(
                describe_scripted(view, prompt, produced_at=cond.observed_at),
                diagnostics)
            assert not diagnostics
            _assert_gated_round_trip(cond, back, PROMPT_GATES[superstate])


# ---------------------------------------------------------------------------
# keyword view used by the regulation matcher
# ---------------------------------------------------------------------------

def test_keyword_view_matches_reference_rendering():
    rng = np.random.default_rng(304)
    for _ in range(300):
        cond = random_conditions(rng)
        assert cond.keyword_view() == "; ".join(oracle_phrases(cond))


def test_phrase_matching_is_word_bounded():
    view = "infrared signal; school zones; bicycle lane"
    assert not phrase_in_view("red signal", view)
    assert phrase_in_view("bicycle lane", view)
    assert not phrase_in_view("school zone", view)  # plural is a different word
    assert phrase_in_view("RED SIGNAL", "red signal")  # case-insensitive
    assert not phrase_in_view("stop", "bus stops here")


# ---------------------------------------------------------------------------
# temporal merging
# ---------------------------------------------------------------------------

def test_merge_keeps_recent_prior_fields():
    prior = SceneConditions(traffic_light=TrafficLight.RED, cyclist_ahead=22.0,
                            observed_at=0.0)
    fresh = SceneConditions(intersection_ahead=30.0, observed_at=0.4)
    merged = merge_conditions(prior, fresh, now=0.4)
    assert merged.traffic_light is TrafficLight.RED
    assert merged.cyclist_ahead == 22.0
    assert merged.intersection_ahead == 30.0
    assert merged.observed_at == 0.4


def test_merge_expires_stale_prior_fields():
    prior = SceneConditions(traffic_light=TrafficLight.RED, cyclist_ahead=22.0,
                            observed_at=0.0)
    fresh = SceneConditions(intersection_ahead=30.0, observed_at=1.5)
    merged = merge_conditions(prior, fresh, now=1.5)
    assert merged.traffic_light is TrafficLight.UNKNOWN
    assert merged.cyclist_ahead is None
    assert merged.intersection_ahead == 30.0


def test_merge_fresh_observation_wins():
    prior = SceneConditions(traffic_light=TrafficLight.RED, observed_at=0.0)
    fresh = SceneConditions(traffic_light=TrafficLight.GREEN, observed_at=0.5)
    assert merge_conditions(prior, fresh, now=0.5).traffic_light is TrafficLight.GREEN


def test_merge_rejects_time_reversal():
    newer = SceneConditions(observed_at=1.0)
    older = SceneConditions(observed_at=0.0)
    with pytest.raises(ValueError, match="older"):
        merge_conditions(newer, older, now=1.0)


def test_merge_keeps_speed_limit_sign_and_value_coherent():
    prior = SceneConditions(signs=frozenset({Sign.SPEED_LIMIT}),
                            posted_speed_limit=25.0, observed_at=0.0)
    fresh = SceneConditions(signs=frozenset({Sign.SCHOOL_ZONE}), observed_at=2.0)
    merged = merge_conditions(prior, fresh, now=2.0)
    # the stale posted value may not outlive its sign
    assert merged.posted_speed_limit is None
    assert Sign.SPEED_LIMIT not in (merged.signs or ())


def test_merge_matches_field_oracle_on_random_pairs():
    rng = np.random.default_rng(555)
    for _ in range(500):
        t_prior = float(rng.uniform(0.0, 5.0))
        t_fresh = t_prior + float(rng.uniform(0.0, 2.0))
        now = t_fresh
        prior = random_conditions(rng, observed_at=t_prior)
        fresh = random_conditions(rng, observed_at=t_fresh)
        window = float(rng.choice([0.5, 1.0, 2.0]))
        assert merge_conditions(prior, fresh, now, window) == \
            oracle_merge(prior, fresh, now, window)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_conditions_validation():
    with pytest.raises(ValueError, match="non-negative"):
        SceneConditions(cyclist_ahead=-1.0)
    with pytest.raises(ValueError, match="speed limit sign"):
        SceneConditions(posted_speed_limit=25.0)
    with pytest.raises(ValueError, match="speed limit sign"):
        SceneConditions(signs=frozenset({Sign.SPEED_LIMIT}))


def test_describer_config_rejects_unknown_modes():
    with pytest.raises(ValueError, match="unknown misdetection"):
        DescriberConfig(misdetections=frozenset({"nonsense"}))
