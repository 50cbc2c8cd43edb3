"""Built-in scenario library.

Three closed-loop scenarios exercise the planner against the bundled
California regulation set, each with variants that flip one environmental
fact (lane marking, signage, sign misdetection, injected obstacle) while
keeping everything else identical:

* ``overtake_cyclist`` — a slow cyclist in lane on a two-lane road; the
  ego must pass with adequate lateral clearance and merge back.
* ``right_turn_on_red`` — a signalized right turn; the ego must stop
  fully before turning on red, and must wait for green when a
  "No Turn on Red" sign is posted.
* ``school_zone`` — a posted school zone begins 700 feet past its
  announcing marker; the ego must be at the zone speed on entry.
"""

from __future__ import annotations

import math
from dataclasses import replace

from regplan.geom import RoadSegment, Zone
from regplan.scene import MISDETECT_END_ROAD_WORK, MISDETECT_STOP_HERE_ON_RED, DescriberConfig
from regplan.sim.config import ActorSpec, ScenarioConfig, SignalSpec, SignSpec
from regplan.units import ft_to_m, mph_to_mps

# Cruise entry speed: just under the 35 mph segment limit, matching the
# planner's own margin so runs start in steady state.
_CRUISE = mph_to_mps(35.0 * 0.995)


def _straight_waypoints(length: float, spacing: float = 50.0) -> tuple:
    n = int(length / spacing)
    return tuple((i * spacing, 0.0) for i in range(n + 1))


def _overtake_cyclist() -> ScenarioConfig:
    road = RoadSegment(
        seg_id="main",
        waypoints=_straight_waypoints(400.0),
        lane_width=3.5,
        speed_limit_mph=35.0,
        lane_marking_left="dashed",
        road_type="highway",
        bicycle_lane=True,
    )
    return ScenarioConfig(
        name="overtake_cyclist",
        description="Pass a slow cyclist with regulated lateral clearance.",
        segments=(road,),
        route=("main",),
        ego_start_station=5.0,
        ego_start_speed=_CRUISE,
        goal_station=250.0,
        actors=(ActorSpec(kind="cyclist", start_station=65.0, speed=5.0,
                          width=0.6, length=1.8),),
        signs=(SignSpec(sign="end_road_work", station=150.0),),
        timeout=60.0,
    )


def _right_turn_on_red() -> ScenarioConfig:
    radius = 12.0
    arc = tuple(
        (120.0 + radius * math.sin(phi), -radius + radius * math.cos(phi))
        for phi in (i * math.pi / 12.0 for i in range(7))
    )
    approach = RoadSegment(
        seg_id="approach",
        waypoints=((0.0, 0.0), (30.0, 0.0), (60.0, 0.0), (90.0, 0.0), (120.0, 0.0)),
        speed_limit_mph=35.0,
        successors=("turn",),
        lane_marking_left="solid",
        road_type="highway",
    )
    turn = RoadSegment(
        seg_id="turn",
        waypoints=arc,
        speed_limit_mph=35.0,
        successors=("exit",),
        branch_direction="right",
        lane_marking_left="solid",
        road_type="highway",
    )
    exit_road = RoadSegment(
        seg_id="exit",
        waypoints=((132.0, -12.0), (132.0, -52.0), (132.0, -92.0), (132.0, -132.0)),
        speed_limit_mph=35.0,
        lane_marking_left="dashed",
        road_type="highway",
    )
    return ScenarioConfig(
        name="right_turn_on_red",
        description="Stop fully at a red signal, then turn right when permitted.",
        segments=(approach, turn, exit_road),
        route=("approach", "turn", "exit"),
        ego_start_station=10.0,
        ego_start_speed=_CRUISE,
        goal_station=240.0,
        signals=(SignalSpec(station=120.0, phases=(("red", 7200.0),)),),
        signs=(SignSpec(sign="stop_here_on_red", station=108.0),),
        timeout=90.0,
    )


def _school_zone() -> ScenarioConfig:
    marker = 100.0
    zone_start = marker + ft_to_m(700.0)
    road = RoadSegment(
        seg_id="main",
        waypoints=_straight_waypoints(540.0, 60.0),
        speed_limit_mph=35.0,
        lane_marking_left="dashed",
        road_type="highway",
        zones=(Zone(zone_type="school", start=zone_start, end=zone_start + 120.0,
                    marker_station=marker),),
    )
    return ScenarioConfig(
        name="school_zone",
        description="Slow to the zone limit before entering a posted school zone.",
        segments=(road,),
        route=("main",),
        ego_start_station=2.0,
        ego_start_speed=_CRUISE,
        goal_station=500.0,
        signs=(SignSpec(sign="end_road_work", station=470.0),),
        timeout=90.0,
    )


_BUILDERS = {
    "overtake_cyclist": _overtake_cyclist,
    "right_turn_on_red": _right_turn_on_red,
    "school_zone": _school_zone,
}

_VARIANTS: dict[str, tuple[str, ...]] = {
    "overtake_cyclist": ("base", "solid_marking", "misdetect", "obstacle"),
    "right_turn_on_red": ("base", "no_turn_on_red", "misdetect"),
    "school_zone": ("base", "misdetect"),
}


def scenario_library() -> dict[str, ScenarioConfig]:
    """Name -> base config for every built-in scenario."""
    return {name: build() for name, build in _BUILDERS.items()}


def scenario_variants(name: str) -> tuple[str, ...]:
    if name not in _VARIANTS:
        raise KeyError(f"unknown scenario {name!r}")
    return _VARIANTS[name]


def get_scenario(name: str, variant: str = "base") -> ScenarioConfig:
    """Build a scenario config with one of its registered variants applied."""
    if name not in _BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; "
                       f"choose from {sorted(_BUILDERS)}")
    if variant not in scenario_variants(name):
        raise KeyError(f"unknown variant {variant!r} for {name}; "
                       f"choose from {scenario_variants(name)}")
    cfg = _BUILDERS[name]()
    if variant == "base":
        return cfg

    if name == "overtake_cyclist":
        if variant == "solid_marking":
            solid = replace(cfg.segments[0], lane_marking_left="solid")
            return replace(cfg, variant=variant, segments=(solid,))
        if variant == "misdetect":
            return replace(cfg, variant=variant, describer=DescriberConfig(
                misdetections=frozenset({MISDETECT_END_ROAD_WORK})))
        if variant == "obstacle":
            # Appears one second in, roughly four meters ahead of the ego's
            # front bumper: inside the minimum-gap envelope from the first
            # moment it can be sensed.
            stalled = ActorSpec(kind="vehicle", start_station=28.3, speed=0.0,
                                spawn_time=1.0, width=1.8, length=4.5)
            return replace(cfg, variant=variant, actors=cfg.actors + (stalled,),
                           timeout=40.0)
    if name == "right_turn_on_red":
        if variant == "no_turn_on_red":
            # The prohibition plate hangs at the signal head itself, so it
            # stays in the describer's view while the ego waits at the line.
            return replace(
                cfg, variant=variant,
                signals=(SignalSpec(station=120.0,
                                    phases=(("red", 25.0), ("green", 7200.0))),),
                signs=cfg.signs + (SignSpec(sign="no_turn_on_red", station=120.0),),
            )
        if variant == "misdetect":
            return replace(cfg, variant=variant, describer=DescriberConfig(
                misdetections=frozenset({MISDETECT_STOP_HERE_ON_RED})))
    if name == "school_zone" and variant == "misdetect":
        return replace(cfg, variant=variant, describer=DescriberConfig(
            misdetections=frozenset({MISDETECT_END_ROAD_WORK})))
    raise AssertionError(f"variant {variant} not wired for {name}")
