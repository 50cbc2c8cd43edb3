"""Hierarchical behavior FSM for mission planning.

Four superstates (lane following, intersection handling, overtaking,
emergency stop) each own a small set of maneuver substates.  The planner
asks ``candidate_next_states`` for the maneuvers that are geometrically
plausible right now; legality and cost scoring pick among them.  Superstate
transitions are restricted to a fixed adjacency, with the emergency
superstate reachable from anywhere and exiting back to lane following.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum


class Superstate(Enum):
    LANE_FOLLOWING = "Lane Following"
    INTERSECTION_HANDLING = "Intersection Handling"
    OVERTAKING = "Overtaking"
    EMERGENCY_STOP = "Emergency Stop"


class Substate(Enum):
    GO_STRAIGHT = "Go Straight"
    CAR_FOLLOWING = "Car Following"
    TURN_RIGHT = "Turn Right"
    TURN_LEFT = "Turn Left"
    OVERTAKE_OUT = "Overtake Out"
    OVERTAKE_RETURN = "Overtake Return"
    STOPPED_AT_LINE = "Stopped At Line"
    EMERGENCY_BRAKE = "Emergency Brake"


SUPERSTATE_MEMBERS: dict[Superstate, frozenset[Substate]] = {
    Superstate.LANE_FOLLOWING: frozenset({Substate.GO_STRAIGHT, Substate.CAR_FOLLOWING}),
    Superstate.INTERSECTION_HANDLING: frozenset({
        Substate.CAR_FOLLOWING, Substate.TURN_RIGHT, Substate.TURN_LEFT,
        Substate.STOPPED_AT_LINE,
    }),
    Superstate.OVERTAKING: frozenset({
        Substate.OVERTAKE_OUT, Substate.OVERTAKE_RETURN, Substate.CAR_FOLLOWING,
    }),
    Superstate.EMERGENCY_STOP: frozenset({Substate.EMERGENCY_BRAKE}),
}

# Regulation records may name either a substate or a whole superstate.
STATE_NAME_REGISTRY: frozenset[str] = frozenset(
    [s.value for s in Substate] + [s.value for s in Superstate]
)

# Non-emergency superstate adjacency; self-loops always allowed.
ALLOWED_SUPERSTATE_PAIRS: frozenset[tuple[Superstate, Superstate]] = frozenset(
    [
        (Superstate.LANE_FOLLOWING, Superstate.LANE_FOLLOWING),
        (Superstate.LANE_FOLLOWING, Superstate.INTERSECTION_HANDLING),
        (Superstate.LANE_FOLLOWING, Superstate.OVERTAKING),
        (Superstate.INTERSECTION_HANDLING, Superstate.INTERSECTION_HANDLING),
        (Superstate.INTERSECTION_HANDLING, Superstate.LANE_FOLLOWING),
        (Superstate.OVERTAKING, Superstate.OVERTAKING),
        (Superstate.OVERTAKING, Superstate.LANE_FOLLOWING),
        (Superstate.OVERTAKING, Superstate.INTERSECTION_HANDLING),
        (Superstate.EMERGENCY_STOP, Superstate.LANE_FOLLOWING),
        (Superstate.EMERGENCY_STOP, Superstate.EMERGENCY_STOP),
    ]
    + [(s, Superstate.EMERGENCY_STOP) for s in Superstate]
)


class TransitionError(ValueError):
    """Requested superstate hop is not in the adjacency."""


class PromptError(LookupError):
    """No describer prompt exists for the superstate."""


@dataclass(frozen=True)
class DrivingState:
    superstate: Superstate
    substate: Substate
    entered_at: float = 0.0

    def __post_init__(self):
        if self.substate not in SUPERSTATE_MEMBERS[self.superstate]:
            raise ValueError(
                f"{self.substate.value} is not a member of {self.superstate.value}")

    @property
    def pair(self) -> tuple[Superstate, Substate]:
        return (self.superstate, self.substate)

    @property
    def name_set(self) -> frozenset[str]:
        return frozenset({self.substate.value, self.superstate.value})

    def label(self) -> str:
        return f"{self.superstate.value}/{self.substate.value}"


PROMPTS: dict[Superstate, str] = {
    Superstate.LANE_FOLLOWING: (
        "Examine the current driving scenario, look out for intersections or "
        "obstacle vehicles."
    ),
    Superstate.INTERSECTION_HANDLING: (
        "Examine the current driving scenario, check if the ego vehicle is "
        "still facing an intersection."
    ),
    Superstate.OVERTAKING: (
        "Examine the current driving scenario, check nearby lane occupation "
        "conditions, and look out for intersection."
    ),
}


def prompt_for(superstate: Superstate) -> str:
    if superstate not in PROMPTS:
        raise PromptError(f"no describer prompt for {superstate.value}")
    return PROMPTS[superstate]


@dataclass(frozen=True)
class FsmConfig:
    ttc_threshold: float = 1.5        # s, time-to-collision emergency trigger
    min_gap: float = 5.0              # m, hard distance emergency trigger
    dwell: float = 1.0                # s, minimum time in a substate
    follow_range: float = 40.0        # m, obstacle distance that starts following
    overtake_range: float = 50.0      # m, obstacle distance that offers an overtake
    intersection_range: float = 50.0  # m, junction distance that offers handling
    min_stop_duration: float = 1.0    # s, stop dwell before proceeding from a line
    realign_tolerance: float = 0.3    # m, lateral offset treated as back-in-lane
    closing_speed_floor: float = 1e-3  # m/s, keeps the TTC ratio finite


def is_emergency(obstacle_gap: float | None, closing_speed: float,
                 config: FsmConfig = FsmConfig()) -> bool:
    """Range-sensing emergency test; never consults described conditions.

    Emergency when time-to-collision drops under the threshold or the gap
    is under the hard minimum.  A non-closing obstacle only triggers on
    the hard minimum.
    """
    if obstacle_gap is None:
        return False
    if obstacle_gap < config.min_gap:
        return True
    ttc = obstacle_gap / max(closing_speed, config.closing_speed_floor)
    return ttc < config.ttc_threshold


@dataclass(frozen=True)
class RouteContext:
    """Planner-computed geometric facts the trigger predicates read."""

    now: float = 0.0
    next_segments: tuple = ()                    # (segment_id, branch_direction)
    distance_to_intersection: float | None = None  # m to the next branching junction
    intersection_branch: str | None = None         # branch direction the route takes
    distance_to_stop_line: float | None = None
    ego_speed: float = 0.0
    stopped_duration: float = 0.0                # s with speed below the stop threshold
    lateral_offset: float = 0.0                  # m from the route centerline
    overtake_clear: bool = False                 # ego is past the overtaken actor
    turn_complete: bool = False                  # ego is on the post-junction segment
    hazard_cleared: bool = True                  # range sensing reports a free corridor


def _obstacle_ahead(ctx, cond, cfg) -> bool:
    d = cond.cyclist_ahead
    return d is not None and d <= cfg.follow_range


def _obstacle_cleared(ctx, cond, cfg) -> bool:
    return not _obstacle_ahead(ctx, cond, cfg)


def _overtake_opportunity(ctx, cond, cfg) -> bool:
    d = cond.cyclist_ahead
    if d is None or d > cfg.overtake_range:
        return False
    return cond.adjacent_left_lane_occupied is not True


def _branch_near(ctx, cfg, direction: str) -> bool:
    return (
        ctx.intersection_branch == direction
        and ctx.distance_to_intersection is not None
        and ctx.distance_to_intersection <= cfg.intersection_range
    )


def _route_branches_right_near(ctx, cond, cfg) -> bool:
    return _branch_near(ctx, cfg, "right")


def _route_branches_left_near(ctx, cond, cfg) -> bool:
    return _branch_near(ctx, cfg, "left")


def _red_light_near(ctx, cond, cfg) -> bool:
    from regplan.scene import TrafficLight

    return (
        cond.traffic_light is TrafficLight.RED
        and ctx.distance_to_stop_line is not None
        and ctx.distance_to_stop_line <= cfg.intersection_range
    )


def _stopped_long_enough(ctx, cfg) -> bool:
    return ctx.stopped_duration >= cfg.min_stop_duration


def _stopped_and_route_right(ctx, cond, cfg) -> bool:
    return _stopped_long_enough(ctx, cfg) and ctx.intersection_branch == "right"


def _stopped_and_route_left(ctx, cond, cfg) -> bool:
    return _stopped_long_enough(ctx, cfg) and ctx.intersection_branch == "left"


def _cleared_to_go_straight(ctx, cond, cfg) -> bool:
    from regplan.scene import TrafficLight

    return (
        _stopped_long_enough(ctx, cfg)
        and ctx.intersection_branch in (None, "straight")
        and cond.traffic_light in (TrafficLight.GREEN, TrafficLight.NONE)
    )


def _turn_complete(ctx, cond, cfg) -> bool:
    return ctx.turn_complete


def _intersection_cleared(ctx, cond, cfg) -> bool:
    return (ctx.distance_to_intersection is None
            or ctx.distance_to_intersection > cfg.intersection_range)


def _overtake_clear(ctx, cond, cfg) -> bool:
    return ctx.overtake_clear


def _lane_realigned(ctx, cond, cfg) -> bool:
    return abs(ctx.lateral_offset) < cfg.realign_tolerance


def _hazard_cleared(ctx, cond, cfg) -> bool:
    return ctx.hazard_cleared


TRIGGERS = {
    "obstacle_ahead": _obstacle_ahead,
    "obstacle_cleared": _obstacle_cleared,
    "overtake_opportunity": _overtake_opportunity,
    "route_branches_right_near": _route_branches_right_near,
    "route_branches_left_near": _route_branches_left_near,
    "red_light_near": _red_light_near,
    "stopped_and_route_right": _stopped_and_route_right,
    "stopped_and_route_left": _stopped_and_route_left,
    "cleared_to_go_straight": _cleared_to_go_straight,
    "turn_complete": _turn_complete,
    "intersection_cleared": _intersection_cleared,
    "overtake_clear": _overtake_clear,
    "lane_realigned": _lane_realigned,
    "hazard_cleared": _hazard_cleared,
}

_LF, _IH, _OT, _ES = (Superstate.LANE_FOLLOWING, Superstate.INTERSECTION_HANDLING,
                      Superstate.OVERTAKING, Superstate.EMERGENCY_STOP)
_GS, _CF, _TR, _TL = (Substate.GO_STRAIGHT, Substate.CAR_FOLLOWING,
                      Substate.TURN_RIGHT, Substate.TURN_LEFT)
_OO, _OR, _SL, _EB = (Substate.OVERTAKE_OUT, Substate.OVERTAKE_RETURN,
                      Substate.STOPPED_AT_LINE, Substate.EMERGENCY_BRAKE)

# (from_super, from_sub, trigger, to_super, to_sub); self-loops are implicit.
TRANSITION_EDGES: tuple = (
    (_LF, _GS, "obstacle_ahead", _LF, _CF),
    (_LF, _GS, "overtake_opportunity", _OT, _OO),
    (_LF, _GS, "route_branches_right_near", _IH, _TR),
    (_LF, _GS, "route_branches_left_near", _IH, _TL),
    (_LF, _GS, "red_light_near", _IH, _SL),
    (_LF, _CF, "obstacle_cleared", _LF, _GS),
    (_LF, _CF, "overtake_opportunity", _OT, _OO),
    (_LF, _CF, "route_branches_right_near", _IH, _TR),
    (_LF, _CF, "route_branches_left_near", _IH, _TL),
    (_LF, _CF, "red_light_near", _IH, _SL),
    (_IH, _TR, "turn_complete", _LF, _GS),
    (_IH, _TR, "obstacle_ahead", _IH, _CF),
    (_IH, _TL, "turn_complete", _LF, _GS),
    (_IH, _TL, "obstacle_ahead", _IH, _CF),
    (_IH, _SL, "stopped_and_route_right", _IH, _TR),
    (_IH, _SL, "stopped_and_route_left", _IH, _TL),
    (_IH, _SL, "cleared_to_go_straight", _LF, _GS),
    (_IH, _SL, "obstacle_ahead", _IH, _CF),
    (_IH, _CF, "route_branches_right_near", _IH, _TR),
    (_IH, _CF, "route_branches_left_near", _IH, _TL),
    (_IH, _CF, "red_light_near", _IH, _SL),
    (_IH, _CF, "intersection_cleared", _LF, _GS),
    (_OT, _OO, "overtake_clear", _OT, _OR),
    (_OT, _OO, "obstacle_ahead", _OT, _CF),
    (_OT, _OR, "lane_realigned", _LF, _GS),
    (_OT, _OR, "obstacle_ahead", _OT, _CF),
    (_OT, _CF, "obstacle_cleared", _LF, _GS),
    (_OT, _CF, "overtake_opportunity", _OT, _OO),
    (_ES, _EB, "hazard_cleared", _LF, _GS),
)


@dataclass
class TransitionTable:
    allowed_pairs: frozenset = ALLOWED_SUPERSTATE_PAIRS
    edges: tuple = TRANSITION_EDGES
    config: FsmConfig = field(default_factory=FsmConfig)

    def __post_init__(self):
        for from_sup, from_sub, trigger, to_sup, to_sub in self.edges:
            if (from_sup, to_sup) not in self.allowed_pairs:
                raise ValueError(
                    f"edge {from_sup.value}->{to_sup.value} outside the adjacency")
            if trigger not in TRIGGERS:
                raise ValueError(f"unknown trigger {trigger}")
            if from_sub not in SUPERSTATE_MEMBERS[from_sup]:
                raise ValueError(f"{from_sub.value} not in {from_sup.value}")
            if to_sub not in SUPERSTATE_MEMBERS[to_sup]:
                raise ValueError(f"{to_sub.value} not in {to_sup.value}")

    @classmethod
    def from_config(cls, section: dict) -> "TransitionTable":
        """Build from a config mapping: threshold overrides, optional pair list."""
        cfg_fields = {f for f in FsmConfig.__dataclass_fields__}
        overrides = {k: float(v) for k, v in section.items() if k in cfg_fields}
        table = cls(config=FsmConfig(**overrides))
        if "allowed_pairs" in section:
            by_name = {s.value: s for s in Superstate}
            pairs = frozenset(
                (by_name[a.strip()], by_name[b.strip()])
                for a, b in (p.split(">") for p in section["allowed_pairs"])
            )
            table = cls(allowed_pairs=pairs, config=table.config)
        return table


DEFAULT_TABLE = TransitionTable()


def candidate_next_states(current: DrivingState, route: RouteContext, conditions,
                          table: TransitionTable = DEFAULT_TABLE) -> list[DrivingState]:
    """Maneuvers plausible from here; the self-loop always leads the list.

    Within the dwell window only the self-loop is offered so that newly
    entered maneuvers get time to act.  Emergency entry is not proposed
    here; the planner forces it from range sensing.
    """
    self_loop = DrivingState(current.superstate, current.substate, current.entered_at)
    candidates = [self_loop]
    if route.now - current.entered_at < table.config.dwell:
        return candidates
    seen = {current.pair}
    for from_sup, from_sub, trigger, to_sup, to_sub in table.edges:
        if (from_sup, from_sub) != current.pair or (to_sup, to_sub) in seen:
            continue
        if TRIGGERS[trigger](route, conditions, table.config):
            candidates.append(DrivingState(to_sup, to_sub, route.now))
            seen.add((to_sup, to_sub))
    return candidates


def transition(current: DrivingState, selected: DrivingState, now: float,
               table: TransitionTable = DEFAULT_TABLE) -> DrivingState:
    """Commit a selected state, validating the superstate hop.

    Identity transitions keep the original entry timestamp so dwell time
    accumulates; real transitions restamp it.
    """
    if (current.superstate, selected.superstate) not in table.allowed_pairs:
        raise TransitionError(
            f"transition {current.superstate.value} -> {selected.superstate.value} "
            "is not allowed")
    if selected.pair == current.pair:
        return current
    return replace(selected, entered_at=now)
