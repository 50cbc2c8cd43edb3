"""Scenario configuration model with YAML round-tripping.

A :class:`ScenarioConfig` is a complete, self-contained description of one
closed-loop run: the road network and route, the ego vehicle's initial state
and goal, scripted actors, signal schedules, posted signs, cadences for the
physics/planner/describer loops, and the tuning blocks consumed by the
planner (cost weights, normalisation constants, state-machine thresholds).

Configs are plain dataclasses so tests can build them directly; the YAML
layer exists for the command-line interface and for users editing scenarios
on disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from regplan.cost import CostNorms, CostWeights
from regplan.fsm import FsmConfig
from regplan.geom import RoadSegment, Zone
from regplan.scene import DescriberConfig


class ConfigError(ValueError):
    """Raised when a scenario configuration is malformed."""


@dataclass(frozen=True)
class ActorSpec:
    """A scripted road user that travels along the route at fixed speed.

    ``start_station`` is the actor's route station at ``spawn_time``; before
    that instant the actor does not exist for sensing or collision purposes.
    ``lateral`` is a constant signed offset from the route centerline
    (left positive).
    """

    kind: str  # "cyclist" | "vehicle" | "pedestrian"
    start_station: float
    speed: float = 0.0
    lateral: float = 0.0
    spawn_time: float = 0.0
    width: float = 0.6
    length: float = 1.8

    def __post_init__(self) -> None:
        if self.kind not in ("cyclist", "vehicle", "pedestrian"):
            raise ConfigError(f"unknown actor kind {self.kind!r}")
        if self.speed < 0:
            raise ConfigError("actor speed must be non-negative")


@dataclass(frozen=True)
class SignalSpec:
    """A traffic signal whose stop line sits at ``station`` on the route.

    ``phases`` is a cyclic schedule of ``(phase_name, duration_s)`` pairs
    starting at t=0; phase names are "red", "yellow" or "green".
    """

    station: float
    phases: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if not self.phases:
            raise ConfigError("signal needs at least one phase")
        for name, duration in self.phases:
            if name not in ("red", "yellow", "green"):
                raise ConfigError(f"unknown signal phase {name!r}")
            if duration <= 0:
                raise ConfigError("signal phase durations must be positive")

    def phase_at(self, t: float) -> str:
        cycle = sum(d for _, d in self.phases)
        if t >= cycle:  # schedules are written long enough to never wrap in-run
            t = t % cycle
        for name, duration in self.phases:
            if t < duration:
                return name
            t -= duration
        return self.phases[-1][0]


@dataclass(frozen=True)
class SignSpec:
    """A posted sign at a route station; ``value`` carries e.g. a limit in mph."""

    sign: str
    station: float
    value: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one simulation run bit-for-bit."""

    name: str
    description: str = ""
    variant: str = "base"
    seed: int = 0
    segments: tuple[RoadSegment, ...] = ()
    route: tuple[str, ...] = ()
    ego_start_station: float = 0.0
    ego_start_speed: float = 0.0
    ego_width: float = 1.8
    ego_length: float = 4.5
    goal_station: float = 0.0
    actors: tuple[ActorSpec, ...] = ()
    signals: tuple[SignalSpec, ...] = ()
    signs: tuple[SignSpec, ...] = ()
    physics_dt: float = 0.1
    planner_period: float = 0.5
    describer_period: float = 0.5
    timeout: float = 120.0
    weights: CostWeights = field(default_factory=CostWeights)
    norms: CostNorms = field(default_factory=CostNorms)
    legality_penalty: float = 1.0
    fsm: FsmConfig = field(default_factory=FsmConfig)
    describer: DescriberConfig = field(default_factory=DescriberConfig)
    jurisdiction: tuple[tuple[str, str], ...] = (("state", "California"),)
    activation_date: str = "2026-01-01"
    db_path: str | None = None
    staleness_window: float = 1.0

    def __post_init__(self) -> None:
        if not self.route:
            raise ConfigError("scenario route must list at least one segment id")
        ids = {seg.seg_id for seg in self.segments}
        missing = [sid for sid in self.route if sid not in ids]
        if missing:
            raise ConfigError(f"route references unknown segments: {missing}")
        if self.physics_dt <= 0:
            raise ConfigError("physics_dt must be positive")
        for period in (self.planner_period, self.describer_period):
            ratio = period / self.physics_dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ConfigError("planner/describer periods must be integer multiples of physics_dt")

    def with_variant(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# dict / YAML conversion


def _segment_to_dict(seg: RoadSegment) -> dict:
    out: dict[str, Any] = {
        "seg_id": seg.seg_id,
        "waypoints": [[float(x), float(y)] for x, y in seg.waypoints],
        "lane_width": seg.lane_width,
        "speed_limit_mph": seg.speed_limit_mph,
        "successors": list(seg.successors),
        "branch_direction": seg.branch_direction,
        "road_type": seg.road_type,
        "lane_marking_left": seg.lane_marking_left,
        "bicycle_lane": seg.bicycle_lane,
    }
    if seg.zones:
        out["zones"] = [
            {
                "zone_type": z.zone_type,
                "start": z.start,
                "end": z.end,
                "marker_station": z.marker_station,
            }
            for z in seg.zones
        ]
    return out


def _segment_from_dict(data: Mapping) -> RoadSegment:
    zones = tuple(
        Zone(
            zone_type=z["zone_type"],
            start=float(z["start"]),
            end=float(z["end"]),
            marker_station=float(z["marker_station"]),
        )
        for z in data.get("zones", ())
    )
    return RoadSegment(
        seg_id=str(data["seg_id"]),
        waypoints=tuple((float(x), float(y)) for x, y in data["waypoints"]),
        lane_width=float(data.get("lane_width", 3.5)),
        speed_limit_mph=float(data.get("speed_limit_mph", 35.0)),
        successors=tuple(data.get("successors", ())),
        branch_direction=str(data.get("branch_direction", "straight")),
        road_type=str(data.get("road_type", "highway")),
        lane_marking_left=str(data.get("lane_marking_left", "dashed")),
        bicycle_lane=bool(data.get("bicycle_lane", False)),
        zones=zones,
    )


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Lossless plain-dict form of a scenario (YAML/JSON friendly)."""
    desc = cfg.describer
    return {
        "name": cfg.name,
        "description": cfg.description,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "segments": [_segment_to_dict(s) for s in cfg.segments],
        "route": list(cfg.route),
        "ego": {
            "start_station": cfg.ego_start_station,
            "start_speed": cfg.ego_start_speed,
            "width": cfg.ego_width,
            "length": cfg.ego_length,
            "goal_station": cfg.goal_station,
        },
        "actors": [
            {
                "kind": a.kind,
                "start_station": a.start_station,
                "speed": a.speed,
                "lateral": a.lateral,
                "spawn_time": a.spawn_time,
                "width": a.width,
                "length": a.length,
            }
            for a in cfg.actors
        ],
        "signals": [
            {"station": s.station, "phases": [[n, d] for n, d in s.phases]} for s in cfg.signals
        ],
        "signs": [
            {"sign": s.sign, "station": s.station, "value": s.value} for s in cfg.signs
        ],
        "cadence": {
            "physics_dt": cfg.physics_dt,
            "planner_period": cfg.planner_period,
            "describer_period": cfg.describer_period,
            "timeout": cfg.timeout,
        },
        "cost": {
            "weights": {
                "legal": cfg.weights.legal,
                "safety": cfg.weights.safety,
                "comfort": cfg.weights.comfort,
                "distance": cfg.weights.distance,
            },
            "norms": {
                "accel_ref": cfg.norms.accel_ref,
                "speed_var_ref": cfg.norms.speed_var_ref,
                "curvature_ref": cfg.norms.curvature_ref,
            },
            "legality_penalty": cfg.legality_penalty,
        },
        "fsm": {
            "ttc_threshold": cfg.fsm.ttc_threshold,
            "min_gap": cfg.fsm.min_gap,
            "dwell": cfg.fsm.dwell,
            "follow_range": cfg.fsm.follow_range,
            "overtake_range": cfg.fsm.overtake_range,
            "intersection_range": cfg.fsm.intersection_range,
            "min_stop_duration": cfg.fsm.min_stop_duration,
            "realign_tolerance": cfg.fsm.realign_tolerance,
        },
        "describer": {
            "view_ahead": desc.view_ahead,
            "view_behind": desc.view_behind,
            "misdetections": sorted(desc.misdetections),
        },
        "regulations": {
            "jurisdiction": [[level, name] for level, name in cfg.jurisdiction],
            "activation_date": cfg.activation_date,
            "db_path": cfg.db_path,
        },
        "staleness_window": cfg.staleness_window,
    }


def config_from_dict(data: Mapping) -> ScenarioConfig:
    """Inverse of :func:`config_to_dict`; validates as it builds."""
    try:
        ego = data.get("ego", {})
        cadence = data.get("cadence", {})
        cost = data.get("cost", {})
        weights = cost.get("weights", {})
        norms = cost.get("norms", {})
        fsm = data.get("fsm", {})
        desc = data.get("describer", {})
        regs = data.get("regulations", {})
        return ScenarioConfig(
            name=str(data["name"]),
            description=str(data.get("description", "")),
            variant=str(data.get("variant", "base")),
            seed=int(data.get("seed", 0)),
            segments=tuple(_segment_from_dict(s) for s in data.get("segments", ())),
            route=tuple(str(s) for s in data.get("route", ())),
            ego_start_station=float(ego.get("start_station", 0.0)),
            ego_start_speed=float(ego.get("start_speed", 0.0)),
            ego_width=float(ego.get("width", 1.8)),
            ego_length=float(ego.get("length", 4.5)),
            goal_station=float(ego.get("goal_station", 0.0)),
            actors=tuple(
                ActorSpec(
                    kind=str(a["kind"]),
                    start_station=float(a["start_station"]),
                    speed=float(a.get("speed", 0.0)),
                    lateral=float(a.get("lateral", 0.0)),
                    spawn_time=float(a.get("spawn_time", 0.0)),
                    width=float(a.get("width", 0.6)),
                    length=float(a.get("length", 1.8)),
                )
                for a in data.get("actors", ())
            ),
            signals=tuple(
                SignalSpec(
                    station=float(s["station"]),
                    phases=tuple((str(n), float(d)) for n, d in s["phases"]),
                )
                for s in data.get("signals", ())
            ),
            signs=tuple(
                SignSpec(
                    sign=str(s["sign"]),
                    station=float(s["station"]),
                    value=None if s.get("value") is None else float(s["value"]),
                )
                for s in data.get("signs", ())
            ),
            physics_dt=float(cadence.get("physics_dt", 0.1)),
            planner_period=float(cadence.get("planner_period", 0.5)),
            describer_period=float(cadence.get("describer_period", 0.5)),
            timeout=float(cadence.get("timeout", 120.0)),
            weights=CostWeights(
                legal=float(weights.get("legal", 10.0)),
                safety=float(weights.get("safety", 1.0)),
                comfort=float(weights.get("comfort", 1.0)),
                distance=float(weights.get("distance", 1.0)),
            ),
            norms=CostNorms(
                accel_ref=float(norms.get("accel_ref", 3.0)),
                speed_var_ref=float(norms.get("speed_var_ref", 4.0)),
                curvature_ref=float(norms.get("curvature_ref", 0.2)),
            ),
            legality_penalty=float(cost.get("legality_penalty", 1.0)),
            fsm=FsmConfig(
                ttc_threshold=float(fsm.get("ttc_threshold", 1.5)),
                min_gap=float(fsm.get("min_gap", 5.0)),
                dwell=float(fsm.get("dwell", 1.0)),
                follow_range=float(fsm.get("follow_range", 40.0)),
                overtake_range=float(fsm.get("overtake_range", 50.0)),
                intersection_range=float(fsm.get("intersection_range", 50.0)),
                min_stop_duration=float(fsm.get("min_stop_duration", 1.0)),
                realign_tolerance=float(fsm.get("realign_tolerance", 0.3)),
            ),
            describer=DescriberConfig(
                view_ahead=float(desc.get("view_ahead", 60.0)),
                view_behind=float(desc.get("view_behind", 5.0)),
                misdetections=frozenset(desc.get("misdetections", ())),
            ),
            jurisdiction=tuple((str(l), str(n)) for l, n in regs.get("jurisdiction", [["state", "California"]])),
            activation_date=str(regs.get("activation_date", "2026-01-01")),
            db_path=regs.get("db_path"),
            staleness_window=float(data.get("staleness_window", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scenario config: {exc}") from exc


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize a scenario to YAML text."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config(source: str | Path) -> ScenarioConfig:
    """Load a scenario from YAML text or a file path."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith((".yaml", ".yml"))):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    data = yaml.safe_load(text)
    if not isinstance(data, Mapping):
        raise ConfigError("scenario YAML must contain a mapping at top level")
    return config_from_dict(data)
