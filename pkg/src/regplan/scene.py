"""Scripted scene description and parsing into structured conditions.

``describe_scripted`` plays the role of an onboard vision-language scene
describer: given a ground-truth view of the world and the prompt for the
current superstate, it emits canonical English sentences.  ``parse_response``
maps sentences back into a ``SceneConditions`` record; anything it cannot
match is ignored and reported through a diagnostics list, never guessed.
Unknown fields stay explicitly unknown so downstream consumers cannot
mistake silence for an all-clear.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from enum import Enum

from regplan.fsm import PROMPTS, Superstate

# Distance reported for an element detected without a usable range estimate.
# Present for keyword matching, beyond every distance-gated trigger.
UNKNOWN_DISTANCE = math.inf


class TrafficLight(Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"
    NONE = "none"        # confirmed absent
    UNKNOWN = "unknown"  # not observed


class Sign(Enum):
    STOP = "stop"
    ROAD_WORK = "road_work"
    END_ROAD_WORK = "end_road_work"
    NO_TURN_ON_RED = "no_turn_on_red"
    STOP_HERE_ON_RED = "stop_here_on_red"
    SCHOOL_ZONE = "school_zone"
    SPEED_LIMIT = "speed_limit"


class LaneMarking(Enum):
    DASHED = "dashed"
    SOLID = "solid"
    UNKNOWN = "unknown"


# Misdetection modes observed for the scripted describer's sign classifier.
MISDETECT_END_ROAD_WORK = "end_road_work_as_road_work"
MISDETECT_STOP_HERE_ON_RED = "stop_here_on_red_as_stop"
MISDETECTION_MODES = frozenset({MISDETECT_END_ROAD_WORK, MISDETECT_STOP_HERE_ON_RED})


@dataclass(frozen=True)
class SceneConditions:
    """Structured scene facts.  ``None`` / UNKNOWN mean "not observed"."""

    intersection_ahead: float | None = None        # m
    traffic_light: TrafficLight = TrafficLight.UNKNOWN
    signs: frozenset | None = None                 # None = unknown, empty = none seen
    posted_speed_limit: float | None = None        # mph, present iff a limit sign seen
    cyclist_ahead: float | None = None             # m
    pedestrian_present: bool | None = None
    adjacent_left_lane_occupied: bool | None = None
    lane_marking_left: LaneMarking = LaneMarking.UNKNOWN
    school_zone_ahead: float | None = None         # ft to zone start, 0 when inside
    bicycle_lane_present: bool | None = None
    road_type: str | None = None
    observed_at: float = 0.0

    def __post_init__(self):
        for name in ("intersection_ahead", "cyclist_ahead", "school_zone_ahead"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        has_limit_sign = self.signs is not None and Sign.SPEED_LIMIT in self.signs
        if has_limit_sign != (self.posted_speed_limit is not None):
            raise ValueError("posted_speed_limit must accompany a speed limit sign")

    def keyword_view(self) -> str:
        """Canonical lowercase phrase rendering used for regulation matching."""
        phrases: list[str] = []
        if self.intersection_ahead is not None:
            phrases.append("intersection ahead")
        if self.traffic_light not in (TrafficLight.UNKNOWN, TrafficLight.NONE):
            phrases.append(f"{self.traffic_light.value} signal")
        for sign in sorted(self.signs or (), key=lambda s: s.value):
            phrases.append({
                Sign.STOP: "stop sign",
                Sign.ROAD_WORK: "road work",
                Sign.END_ROAD_WORK: "end road work",
                Sign.NO_TURN_ON_RED: "no turn on red",
                Sign.STOP_HERE_ON_RED: "stop here on red",
                Sign.SCHOOL_ZONE: "school zone",
                Sign.SPEED_LIMIT: "speed limit",
            }[sign])
        if self.cyclist_ahead is not None:
            phrases.append("cyclist")
        if self.pedestrian_present:
            phrases.append("pedestrian")
        if self.adjacent_left_lane_occupied is True:
            phrases.append("adjacent lane occupied")
        elif self.adjacent_left_lane_occupied is False:
            phrases.append("adjacent lane clear")
        if self.lane_marking_left is not LaneMarking.UNKNOWN:
            phrases.append(f"{self.lane_marking_left.value} line")
        if self.school_zone_ahead is not None:
            phrases.append("school zone")
        if self.bicycle_lane_present:
            phrases.append("bicycle lane")
        if self.road_type:
            phrases.append(self.road_type.lower())
        # Dedupe, keep first occurrence for a stable rendering.
        seen: list[str] = []
        for p in phrases:
            if p not in seen:
                seen.append(p)
        return "; ".join(seen)


UNKNOWN_CONDITIONS = SceneConditions()


def phrase_in_view(phrase: str, view: str) -> bool:
    """Word-bounded containment so 'red' cannot match inside another word."""
    return re.search(rf"\b{re.escape(phrase.lower())}\b", view.lower()) is not None


@dataclass(frozen=True)
class DescriberResponse:
    text: str
    produced_at: float
    prompt_used: str


@dataclass(frozen=True)
class DescriberConfig:
    view_ahead: float = 60.0   # m
    view_behind: float = 5.0   # m
    misdetections: frozenset = frozenset()

    def __post_init__(self):
        unknown = set(self.misdetections) - MISDETECTION_MODES
        if unknown:
            raise ValueError(f"unknown misdetection modes: {sorted(unknown)}")


@dataclass(frozen=True)
class GroundTruthView:
    """What is actually visible from the ego vehicle right now.

    The simulator fills this from world state; the describer only reads it.
    Distances are meters ahead of the ego unless noted.
    """

    intersection_ahead: float | None = None
    traffic_light: TrafficLight | None = None      # None = no signal in view
    signs_in_view: tuple = ()                      # (Sign, distance_m, value-or-None)
    cyclist_ahead: float | None = None
    pedestrian_in_view: bool = False
    adjacent_left_lane_occupied: bool | None = None  # None = no adjacent lane
    lane_marking_left: LaneMarking = LaneMarking.UNKNOWN
    school_zone_ahead_ft: float | None = None      # 0 when inside the zone
    bicycle_lane_in_view: bool = False
    road_type: str = "highway"


# Which scene elements each superstate's prompt asks about.
_COMMON = {"intersection", "light", "signs", "obstacles", "road_type", "pedestrian"}
PROMPT_GATES: dict[Superstate, frozenset[str]] = {
    Superstate.LANE_FOLLOWING: frozenset(
        _COMMON | {"marking", "school_zone", "bicycle_lane"}),
    Superstate.INTERSECTION_HANDLING: frozenset(_COMMON),
    Superstate.OVERTAKING: frozenset(
        _COMMON | {"occupancy", "marking", "bicycle_lane"}),
}

EMPTY_SCENE_TEXT = "No regulation-relevant elements detected."


def _sign_sentence(sign: Sign, value, misdetections: frozenset) -> str:
    if sign is Sign.END_ROAD_WORK and MISDETECT_END_ROAD_WORK in misdetections:
        sign = Sign.ROAD_WORK
    if sign is Sign.STOP_HERE_ON_RED and MISDETECT_STOP_HERE_ON_RED in misdetections:
        sign = Sign.STOP
    if sign is Sign.SPEED_LIMIT:
        return f"The speed limit sign indicates {value:g} mph maximum speed."
    return {
        Sign.STOP: "There is a visible stop sign.",
        Sign.ROAD_WORK: "There is a visible warning sign: Road Work Ahead.",
        Sign.END_ROAD_WORK: "There is a visible warning sign: End Road Work.",
        Sign.NO_TURN_ON_RED: "There is a visible sign: No Turn on Red.",
        Sign.STOP_HERE_ON_RED: "There is a visible sign: Stop Here on Red.",
        Sign.SCHOOL_ZONE: "There is a visible school zone sign.",
    }[sign]


def describe_scripted(view: GroundTruthView, prompt: str, produced_at: float = 0.0,
                      config: DescriberConfig = DescriberConfig()) -> DescriberResponse:
    """Emit the canonical sentences for everything the prompt asks about."""
    gates = None
    for superstate, text in PROMPTS.items():
        if text == prompt:
            gates = PROMPT_GATES[superstate]
    if gates is None:
        raise ValueError("prompt does not match any superstate prompt")

    sentences: list[str] = []
    if "intersection" in gates and view.intersection_ahead is not None:
        sentences.append(
            "Ego vehicle is approaching an intersection, approximately "
            f"{view.intersection_ahead:.0f} meters ahead.")
    if "light" in gates and view.traffic_light not in (None, TrafficLight.UNKNOWN,
                                                       TrafficLight.NONE):
        sentences.append(
            f"There is a visible {view.traffic_light.value} traffic light in sight.")
    if "signs" in gates:
        for sign, _dist, value in sorted(view.signs_in_view,
                                         key=lambda e: (e[1], e[0].value)):
            sentences.append(_sign_sentence(sign, value, config.misdetections))
    if "obstacles" in gates and view.cyclist_ahead is not None:
        sentences.append(
            "There is a cyclist ahead in the same lane, approximately "
            f"{view.cyclist_ahead:.0f} meters ahead.")
    if "pedestrian" in gates and view.pedestrian_in_view:
        sentences.append(
            "The intersection appears to have pedestrian crossing, the ego "
            "vehicle should stay alert and yield to pedestrians.")
    if "occupancy" in gates and view.adjacent_left_lane_occupied is not None:
        if view.adjacent_left_lane_occupied:
            sentences.append("The adjacent left lane is occupied by another vehicle.")
        else:
            sentences.append("The adjacent left lane is clear.")
    if "marking" in gates and view.lane_marking_left is not LaneMarking.UNKNOWN:
        sentences.append(
            "The lane marking to the left of the ego vehicle is a "
            f"{view.lane_marking_left.value} white line.")
    if "school_zone" in gates and view.school_zone_ahead_ft is not None:
        if view.school_zone_ahead_ft <= 0:
            sentences.append("The ego vehicle is inside a school zone.")
        else:
            sentences.append(
                "There is a school zone ahead, beginning in approximately "
                f"{view.school_zone_ahead_ft:.0f} feet.")
    if "bicycle_lane" in gates and view.bicycle_lane_in_view:
        sentences.append("There is a visible bicycle lane.")
    if "road_type" in gates and view.road_type:
        sentences.append(f"The ego vehicle is driving on a {view.road_type}.")

    text = " ".join(sentences) if sentences else EMPTY_SCENE_TEXT
    return DescriberResponse(text=text, produced_at=produced_at, prompt_used=prompt)


_NUM = r"(\d+(?:\.\d+)?)"


def _set_sign(updates: dict, sign: Sign) -> None:
    updates["signs"] = frozenset((updates.get("signs") or frozenset()) | {sign})


def _parse_sentence(sentence: str, updates: dict) -> bool:
    """Apply one sentence to the update dict; False when unrecognized."""
    s = sentence.lower().strip()
    if not s:
        return True
    if "approaching an intersection" in s:
        m = re.search(_NUM + r" meters", s)
        updates["intersection_ahead"] = float(m.group(1)) if m else UNKNOWN_DISTANCE
        return True
    m = re.search(r"visible (red|green|yellow) traffic light", s)
    if m:
        updates["traffic_light"] = TrafficLight(m.group(1))
        return True
    if "road work ahead" in s:
        _set_sign(updates, Sign.ROAD_WORK)
        return True
    if "end road work" in s:
        _set_sign(updates, Sign.END_ROAD_WORK)
        return True
    if "visible stop sign" in s:
        _set_sign(updates, Sign.STOP)
        return True
    if "stop here on red" in s:
        _set_sign(updates, Sign.STOP_HERE_ON_RED)
        return True
    if "no turn on red" in s:
        _set_sign(updates, Sign.NO_TURN_ON_RED)
        return True
    m = re.search(r"speed limit sign indicates " + _NUM + r" mph", s)
    if m:
        _set_sign(updates, Sign.SPEED_LIMIT)
        updates["posted_speed_limit"] = float(m.group(1))
        return True
    if "yield to pedestrians" in s or "pedestrian crossing" in s:
        updates["pedestrian_present"] = True
        return True
    if "cyclist ahead" in s:
        m = re.search(_NUM + r" meters", s)
        updates["cyclist_ahead"] = float(m.group(1)) if m else UNKNOWN_DISTANCE
        return True
    if "visible bicycle lane" in s:
        updates["bicycle_lane_present"] = True
        return True
    if "adjacent left lane is occupied" in s:
        updates["adjacent_left_lane_occupied"] = True
        return True
    if "adjacent left lane is clear" in s:
        updates["adjacent_left_lane_occupied"] = False
        return True
    m = re.search(r"lane marking .* is a (dashed|solid) white line", s)
    if m:
        updates["lane_marking_left"] = LaneMarking(m.group(1))
        return True
    if "inside a school zone" in s:
        updates["school_zone_ahead"] = 0.0
        return True
    if "school zone ahead" in s:
        m = re.search(_NUM + r" feet", s)
        updates["school_zone_ahead"] = float(m.group(1)) if m else UNKNOWN_DISTANCE
        return True
    if "visible school zone sign" in s:
        _set_sign(updates, Sign.SCHOOL_ZONE)
        return True
    m = re.search(r"driving on an? ([a-z ]+?)\s*$", s.rstrip("."))
    if m and "driving on" in s:
        updates["road_type"] = m.group(1).strip()
        return True
    if "no regulation-relevant elements" in s:
        return True
    return False


def parse_response(response: DescriberResponse,
                   diagnostics: list | None = None) -> SceneConditions:
    """Keyword-parse a describer response into structured conditions.

    Total: no input raises.  Idempotent in the sense that describing the
    parsed conditions again yields the same parse.  Unmatched sentences
    are skipped and appended to ``diagnostics`` when a list is provided.
    """
    updates: dict = {"observed_at": response.produced_at}
    for sentence in re.split(r"(?<=[.!?])\s+", response.text.strip()):
        if sentence and not _parse_sentence(sentence, updates):
            if diagnostics is not None:
                diagnostics.append(sentence)
    return SceneConditions(**updates)


_UNKNOWN_MARKERS = {
    "traffic_light": TrafficLight.UNKNOWN,
    "lane_marking_left": LaneMarking.UNKNOWN,
}


def _is_known(name: str, value) -> bool:
    if name in _UNKNOWN_MARKERS:
        return value is not _UNKNOWN_MARKERS[name]
    return value is not None


def merge_conditions(prior: SceneConditions, fresh: SceneConditions, now: float,
                     staleness_window: float = 1.0) -> SceneConditions:
    """Field-wise newest-wins merge with staleness expiry.

    Fresh known fields always win.  A field known only in the prior record
    survives while ``now - prior.observed_at`` is within the window, after
    which it reverts to unknown.
    """
    if fresh.observed_at < prior.observed_at:
        raise ValueError("fresh conditions are older than the prior ones")
    prior_alive = (now - prior.observed_at) <= staleness_window
    merged: dict = {}
    for f in fields(SceneConditions):
        if f.name == "observed_at":
            continue
        fresh_v = getattr(fresh, f.name)
        if _is_known(f.name, fresh_v):
            merged[f.name] = fresh_v
        elif prior_alive and _is_known(f.name, getattr(prior, f.name)):
            merged[f.name] = getattr(prior, f.name)
    # posted_speed_limit and the limit sign must live or die together.
    signs = merged.get("signs")
    if "posted_speed_limit" in merged and (signs is None or Sign.SPEED_LIMIT not in signs):
        del merged["posted_speed_limit"]
    if signs is not None and Sign.SPEED_LIMIT in signs and "posted_speed_limit" not in merged:
        merged["signs"] = signs - {Sign.SPEED_LIMIT}
    return SceneConditions(observed_at=fresh.observed_at, **merged)


def conditions_to_view(cond: SceneConditions) -> GroundTruthView:
    """Re-render parsed conditions as a ground-truth view (round-trip helper)."""
    signs = tuple(
        (s, 0.0, cond.posted_speed_limit if s is Sign.SPEED_LIMIT else None)
        for s in sorted(cond.signs or (), key=lambda s: s.value)
    )
    return GroundTruthView(
        intersection_ahead=cond.intersection_ahead,
        traffic_light=None if cond.traffic_light is TrafficLight.UNKNOWN
        else cond.traffic_light,
        signs_in_view=signs,
        cyclist_ahead=cond.cyclist_ahead,
        pedestrian_in_view=bool(cond.pedestrian_present),
        adjacent_left_lane_occupied=cond.adjacent_left_lane_occupied,
        lane_marking_left=cond.lane_marking_left,
        school_zone_ahead_ft=cond.school_zone_ahead,
        bicycle_lane_in_view=bool(cond.bicycle_lane_present),
        road_type=cond.road_type or "",
    )
