"""World state, vehicle kinematics, range sensing, and ground-truth views.

The world owns the map, the scripted actors, and the signal schedules.  The
ego vehicle integrates a kinematic bicycle model at a fixed physics step:
the tracker commands longitudinal acceleration and path curvature, both
clipped against hard physical bounds.  Everything downstream observes the
world through two channels only: the range-sensing corridor gap (used for
emergencies and car following) and the :class:`GroundTruthView` handed to
the scene describer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from regplan.geom import RoutePath, VectorMap
from regplan.scene import DescriberConfig, GroundTruthView, LaneMarking, Sign, TrafficLight
from regplan.sim.config import ActorSpec, ScenarioConfig
from regplan.units import m_to_ft

# Hard physical envelope of the ego platform.
ACCEL_BOUND = 8.0       # m/s^2
CURVATURE_BOUND = 0.3   # 1/m

# Range sensing field: how far ahead the corridor is scanned and how wide
# the ego's swept corridor is taken to be on each side of its centerline.
SENSE_RANGE = 80.0      # m
CORRIDOR_HALF_WIDTH = 1.5  # m


@dataclass(frozen=True)
class EgoCommand:
    accel: float
    curvature: float


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0      # command applied over the step ending here
    curvature: float = 0.0


@dataclass(frozen=True)
class SimState:
    t: float
    ego: EgoState
    actor_stations: tuple  # route station per configured actor


def step(state: SimState, command: EgoCommand, dt: float,
         actors: tuple[ActorSpec, ...]) -> SimState:
    """Advance the world one physics step (pure function).

    Kinematic bicycle in curvature form: the commanded curvature steers the
    heading at rate ``v * kappa``.  Speeds never go negative (no reverse).
    Commands outside the physical envelope are rejected, not clipped, so a
    misbehaving tracker fails loudly.
    """
    if not (abs(command.accel) <= ACCEL_BOUND + 1e-9):
        raise ValueError(f"acceleration command {command.accel} exceeds bound {ACCEL_BOUND}")
    if not (abs(command.curvature) <= CURVATURE_BOUND + 1e-9):
        raise ValueError(f"curvature command {command.curvature} exceeds bound {CURVATURE_BOUND}")
    ego = state.ego
    new_speed = max(0.0, ego.speed + command.accel * dt)
    new_heading = ego.heading + ego.speed * command.curvature * dt
    new_ego = EgoState(
        x=ego.x + ego.speed * math.cos(ego.heading) * dt,
        y=ego.y + ego.speed * math.sin(ego.heading) * dt,
        heading=math.atan2(math.sin(new_heading), math.cos(new_heading)),
        speed=new_speed,
        accel=command.accel,
        curvature=command.curvature,
    )
    stations = tuple(
        s + (spec.speed * dt if state.t >= spec.spawn_time - 1e-9 else 0.0)
        for s, spec in zip(state.actor_stations, actors)
    )
    return SimState(t=state.t + dt, ego=new_ego, actor_stations=stations)


@dataclass(frozen=True)
class Junction:
    """A route location that needs intersection handling."""

    station: float          # route station of the segment boundary
    branch: str             # direction the route takes through it
    stop_line: float        # route station of the stop line
    signal_index: int | None


class World:
    """Mutable simulation world built from a scenario config."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.vmap = VectorMap.from_segments(cfg.segments)
        self.route = RoutePath(self.vmap, cfg.route)
        if not (0.0 <= cfg.ego_start_station < self.route.length):
            raise ValueError("ego start station outside the route")
        if not (cfg.ego_start_station < cfg.goal_station <= self.route.length):
            raise ValueError("goal station must lie ahead of the start on the route")
        p = self.route.eval(cfg.ego_start_station)
        self.state = SimState(
            t=0.0,
            ego=EgoState(x=p.x, y=p.y, heading=p.heading, speed=cfg.ego_start_speed),
            actor_stations=tuple(a.start_station for a in cfg.actors),
        )
        self.junctions = self._find_junctions()
        self._frenet_cache: tuple[float, object] | None = None

    # -- topology ---------------------------------------------------------

    def _find_junctions(self) -> tuple[Junction, ...]:
        junctions = []
        claimed_signals: set[int] = set()
        for i in range(1, len(self.route.route)):
            sid = self.route.route[i]
            station = self.route.segment_starts[sid]
            branch = self.vmap.segments[sid].branch_direction
            signal_index = None
            for j, sig in enumerate(self.cfg.signals):
                if abs(sig.station - station) <= 5.0:
                    signal_index = j
                    claimed_signals.add(j)
                    break
            if branch != "straight" or signal_index is not None:
                stop_line = (self.cfg.signals[signal_index].station
                             if signal_index is not None else station)
                junctions.append(Junction(station, branch, stop_line, signal_index))
        # Signals not sitting on a segment boundary still gate the lane.
        for j, sig in enumerate(self.cfg.signals):
            if j not in claimed_signals:
                junctions.append(Junction(sig.station, "straight", sig.station, j))
        return tuple(sorted(junctions, key=lambda jn: jn.station))

    def next_junction(self, station: float) -> Junction | None:
        """First junction whose stop line is still ahead of the station."""
        for junction in self.junctions:
            if junction.stop_line >= station - 0.3:
                return junction
        return None

    # -- state access -----------------------------------------------------

    @property
    def t(self) -> float:
        return self.state.t

    @property
    def ego(self) -> EgoState:
        return self.state.ego

    def ego_frenet(self):
        """Route-frame pose of the ego, cached per physics step."""
        if self._frenet_cache is None or self._frenet_cache[0] != self.state.t:
            pose = self.route.project((self.ego.x, self.ego.y))
            self._frenet_cache = (self.state.t, pose)
        return self._frenet_cache[1]

    def actor_active(self, i: int) -> bool:
        return self.state.t >= self.cfg.actors[i].spawn_time - 1e-9

    def actor_position(self, i: int) -> tuple[float, float]:
        spec = self.cfg.actors[i]
        return self.route.point_at(self.state.actor_stations[i], spec.lateral)

    def actors_snapshot(self) -> list[tuple[ActorSpec, float]]:
        """(spec, current_station) for every active actor."""
        return [
            (spec, self.state.actor_stations[i])
            for i, spec in enumerate(self.cfg.actors)
            if self.actor_active(i)
        ]

    def signal_phase(self, index: int) -> TrafficLight:
        return TrafficLight(self.cfg.signals[index].phase_at(self.state.t))

    # -- sensing ----------------------------------------------------------

    def corridor_gap(self) -> tuple[float | None, float]:
        """Nearest obstruction inside the ego's forward corridor.

        Returns ``(gap_m, closing_speed)`` to the closest actor whose body
        overlaps the corridor, or ``(None, 0.0)`` when the corridor is
        clear.  The gap is bumper-to-bumper; closing speed is the rate at
        which the gap shrinks.
        """
        ego = self.ego
        cos_h, sin_h = math.cos(ego.heading), math.sin(ego.heading)
        best: tuple[float, float] | None = None
        for i, spec in enumerate(self.cfg.actors):
            if not self.actor_active(i):
                continue
            ax, ay = self.actor_position(i)
            dx, dy = ax - ego.x, ay - ego.y
            forward = dx * cos_h + dy * sin_h
            lateral = -dx * sin_h + dy * cos_h
            if forward <= 0 or forward > SENSE_RANGE:
                continue
            if abs(lateral) > CORRIDOR_HALF_WIDTH + spec.width / 2.0:
                continue
            gap = max(0.0, forward - (self.cfg.ego_length + spec.length) / 2.0)
            tangent = self.route.eval(self.state.actor_stations[i]).heading
            closing = ego.speed - spec.speed * math.cos(tangent - ego.heading)
            if best is None or gap < best[0]:
                best = (gap, closing)
        if best is None:
            return None, 0.0
        return best

    # -- describer ground truth --------------------------------------------

    def ground_truth_view(self, config: DescriberConfig | None = None) -> GroundTruthView:
        cfg = config or self.cfg.describer
        s0 = self.ego_frenet().station
        seg = self.vmap.segments[self.route.segment_at(s0)]

        junction = self.next_junction(s0)
        intersection_ahead = None
        if junction is not None and junction.station - s0 <= cfg.view_ahead:
            intersection_ahead = max(0.0, junction.station - s0)

        traffic_light = None
        for j, sig in enumerate(self.cfg.signals):
            if -cfg.view_behind <= sig.station - s0 <= cfg.view_ahead:
                traffic_light = self.signal_phase(j)
                break

        signs_in_view = tuple(
            (Sign(sp.sign), sp.station - s0, sp.value)
            for sp in self.cfg.signs
            if -cfg.view_behind <= sp.station - s0 <= cfg.view_ahead
        )

        cyclist_ahead = None
        pedestrian_in_view = False
        adjacent_occupied = False
        for spec, station in self.actors_snapshot():
            ds = station - s0
            if spec.kind == "cyclist" and abs(spec.lateral) <= seg.lane_width / 2.0:
                if 0.0 < ds <= cfg.view_ahead and (cyclist_ahead is None or ds < cyclist_ahead):
                    cyclist_ahead = ds
            if spec.kind == "pedestrian" and 0.0 <= ds <= cfg.view_ahead:
                pedestrian_in_view = True
            in_left_band = seg.lane_width / 2.0 < spec.lateral <= 1.5 * seg.lane_width
            if spec.kind != "pedestrian" and in_left_band and abs(ds) <= 15.0:
                adjacent_occupied = True

        school_zone_ahead_ft = None
        for zone in self.route.zones:
            if zone.zone_type != "school":
                continue
            if zone.start <= s0 <= zone.end:
                school_zone_ahead_ft = 0.0
                break
            announce = zone.start - s0 <= cfg.view_ahead or (
                zone.marker_station is not None
                and 0.0 <= zone.marker_station - s0 <= cfg.view_ahead
            )
            if s0 < zone.start and announce:
                school_zone_ahead_ft = m_to_ft(zone.start - s0)
                break

        return GroundTruthView(
            intersection_ahead=intersection_ahead,
            traffic_light=traffic_light,
            signs_in_view=signs_in_view,
            cyclist_ahead=cyclist_ahead,
            pedestrian_in_view=pedestrian_in_view,
            adjacent_left_lane_occupied=adjacent_occupied,
            lane_marking_left=LaneMarking(seg.lane_marking_left),
            school_zone_ahead_ft=school_zone_ahead_ft,
            bicycle_lane_in_view=seg.bicycle_lane,
            road_type=seg.road_type,
        )

    # -- dynamics -----------------------------------------------------------

    def advance(self, command: EgoCommand) -> None:
        self.state = step(self.state, command, self.cfg.physics_dt, self.cfg.actors)
        self._frenet_cache = None

    def inject_actor(self, spec: ActorSpec) -> None:
        """Add a scripted actor mid-run (used by fault-injection tests)."""
        self.cfg = replace(self.cfg, actors=self.cfg.actors + (spec,))
        self.state = replace(
            self.state, actor_stations=self.state.actor_stations + (spec.start_station,)
        )
