"""Mission planning cycle: candidates, trajectories, legality, cost, commit.

Each planner tick runs the same pipeline.  Range sensing is checked first
and can force the emergency maneuver without consulting the describer.
Otherwise the behavior FSM proposes maneuver candidates, each candidate is
expanded into a concrete spline trajectory, the regulation database scores
its legality, and the weighted cost function picks the winner, which is
then committed as the next FSM state.

A maneuver's trajectory spans exactly its own objective: a turn plan ends
a little past its junction, an overtake-out plan ends once the passed
actor is behind, a stop plan ends at the line.  Completed objectives thus
stop making longitudinal progress, and the distance cost hands control to
the successor maneuver without any special-case switching logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from regplan.cost import (
    CandidatePlan,
    make_breakdown,
    distance_cost,
    legality_cost,
    safety_comfort_cost,
    select_plan,
)
from regplan.fsm import (
    DrivingState,
    RouteContext,
    Substate,
    Superstate,
    TransitionTable,
    candidate_next_states,
    is_emergency,
    transition,
)
from regplan.geom import (
    MotionLimits,
    SplineError,
    Trajectory,
    TrajectoryInfeasible,
    generate_trajectory,
    route_next_segments,
)
from regplan.regdb import RegulationDatabase, evaluate_legality, query_applicable
from regplan.scene import SceneConditions, TrafficLight
from regplan.sim.config import ScenarioConfig
from regplan.sim.world import SENSE_RANGE, World
from regplan.units import mps_to_mph


@dataclass(frozen=True)
class PlannerSettings:
    horizon: float = 6.0            # s of trajectory per plan
    path_length: float = 170.0      # m of route a full-span plan covers
    min_span: float = 12.0          # m span of a plan whose objective is spent
    waypoint_spacing: float = 3.0   # m between path waypoints
    accel: float = 3.0              # m/s^2 comfort acceleration bound
    decel: float = 3.0              # m/s^2 comfort braking bound
    emergency_decel: float = 6.0    # m/s^2 emergency braking rate
    lateral_accel_max: float = 2.0  # m/s^2 curvature comfort cap
    follow_distance: float = 25.0   # m behind a lead where speed matching starts
    follow_gap: float = 8.0         # m standing buffer behind a lead (following)
    caution_gap: float = 12.0       # m standing buffer behind a lead (lane keeping)
    stop_margin_commit: float = 0.5   # m short of the line for a committed stop
    stop_margin_cautious: float = 3.0  # m short of a junction for lane keeping
    lane_shift_length: float = 55.0  # m of travel to complete a lane change
    pass_clear_ahead: float = 6.0   # m past an actor that count as clear
    turn_overrun: float = 15.0      # m past the branch segment a turn plan covers
    limit_margin: float = 0.005     # fraction kept below every speed limit
    alongside_window: float = 3.0   # m station difference treated as side-by-side
    zone_entry_lead: float = 10.0   # m before a zone at which its cap takes hold
    stop_speed: float = 0.1         # m/s under which the ego counts as stopped


@dataclass
class Decision:
    """Everything one planner tick produced."""

    now: float
    state: DrivingState          # committed state after this tick
    selected: CandidatePlan
    candidates: list = field(default_factory=list)
    emergency: bool = False
    describer_consulted: bool = True
    fallback: bool = False       # not executing any candidate; braking in place
    holding: bool = False        # fallback because every candidate is illegal
    infeasible: tuple = ()       # labels of candidates dropped with reasons


def _smoothstep(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, 1.0)
    return w * w * (3.0 - 2.0 * w)


class MissionPlanner:
    def __init__(self, world: World, db: RegulationDatabase, cfg: ScenarioConfig,
                 settings: PlannerSettings = PlannerSettings()):
        self.world = world
        self.db = db
        self.cfg = cfg
        self.settings = settings
        self.table = TransitionTable(config=cfg.fsm)
        self.state = DrivingState(Superstate.LANE_FOLLOWING, Substate.GO_STRAIGHT, 0.0)
        self._turn_entry_station: float | None = None
        self._shift_anchor: tuple[float, float] | None = None  # (station, lateral)
        self._stopped_duration = 0.0  # refreshed at the top of every decide()

    # -- context -------------------------------------------------------------

    def _lead_actor(self, s0: float):
        """Nearest active non-pedestrian actor ahead in the ego's travel lane."""
        best = None
        for spec, station in self.world.actors_snapshot():
            if spec.kind == "pedestrian":
                continue
            seg = self.world.vmap.segments[self.world.route.segment_at(s0)]
            if abs(spec.lateral) > seg.lane_width / 2.0:
                continue
            ds = station - s0
            if 0.0 < ds <= SENSE_RANGE and (best is None or ds < best[1] - s0):
                best = (spec, station)
        return best

    def _overtake_clear(self, s0: float) -> bool:
        clear_by = self.settings.pass_clear_ahead
        for spec, station in self.world.actors_snapshot():
            if spec.kind == "pedestrian":
                continue
            seg = self.world.vmap.segments[self.world.route.segment_at(s0)]
            if abs(spec.lateral) > seg.lane_width / 2.0:
                continue
            if s0 - (station + (spec.length + self.cfg.ego_length) / 2.0) < clear_by:
                return False
        return True

    def _stop_delivered(self, s0: float, junction) -> bool:
        """The line-stop maneuver's duty is done: a long-enough stop at the line."""
        return (self._stopped_duration >= self.cfg.fsm.min_stop_duration
                and s0 >= junction.stop_line - self.settings.stop_margin_commit - 1.0)

    def _turn_complete(self, s0: float) -> bool:
        if self.state.substate not in (Substate.TURN_RIGHT, Substate.TURN_LEFT):
            return False
        if self._turn_entry_station is None or s0 <= self._turn_entry_station + 1.0:
            return False
        seg = self.world.vmap.segments[self.world.route.segment_at(s0)]
        if seg.branch_direction != "straight":
            return False
        route_heading = self.world.route.eval(s0).heading
        err = math.atan2(math.sin(self.world.ego.heading - route_heading),
                         math.cos(self.world.ego.heading - route_heading))
        return abs(err) < 0.2

    def route_context(self, now: float, stopped_duration: float,
                      gap: float | None, closing: float) -> RouteContext:
        fr = self.world.ego_frenet()
        s0 = fr.station
        junction = self.world.next_junction(s0)
        distance_to_intersection = None
        branch = None
        distance_to_stop_line = None
        if junction is not None:
            distance_to_intersection = max(0.0, junction.station - s0)
            branch = junction.branch
            distance_to_stop_line = max(0.0, junction.stop_line - s0)
        return RouteContext(
            now=now,
            next_segments=tuple(
                route_next_segments(self.world.vmap, self.world.route.segment_at(s0))),
            distance_to_intersection=distance_to_intersection,
            intersection_branch=branch,
            distance_to_stop_line=distance_to_stop_line,
            ego_speed=self.world.ego.speed,
            stopped_duration=stopped_duration,
            lateral_offset=fr.lateral,
            overtake_clear=self._overtake_clear(s0),
            turn_complete=self._turn_complete(s0),
            hazard_cleared=(gap is None
                            or (gap > 2.0 * self.cfg.fsm.min_gap
                                and not is_emergency(gap, closing, self.cfg.fsm))),
        )

    # -- plan construction -----------------------------------------------------

    def _lateral_profile(self, candidate: DrivingState, s0: float, d0: float):
        """Signed lateral offset from the route centerline as f(route station).

        Lane changes (overtake out/return) are anchored at the station where
        the maneuver was entered, so replans continue the shift mid-slope
        instead of restarting it with zero slope every cycle.
        """
        seg = self.world.vmap.segments[self.world.route.segment_at(s0)]
        target = seg.lane_width if candidate.substate is Substate.OVERTAKE_OUT else 0.0
        if (candidate.substate in (Substate.OVERTAKE_OUT, Substate.OVERTAKE_RETURN)
                and candidate.pair == self.state.pair
                and self._shift_anchor is not None):
            anchor_s, anchor_d = self._shift_anchor
        else:
            anchor_s, anchor_d = s0, d0
        full = max(seg.lane_width, 1e-6)
        shift = max(15.0, self.settings.lane_shift_length * abs(target - anchor_d) / full)

        def profile(stations: np.ndarray) -> np.ndarray:
            w = _smoothstep((np.asarray(stations, dtype=float) - anchor_s) / shift)
            return anchor_d + (target - anchor_d) * w

        return profile

    def _plan_span(self, candidate: DrivingState, s0: float) -> float | None:
        """Route station where this maneuver's objective ends.

        A spent-but-resumable objective (a finished turn, an overtake with
        nothing left to pass) yields a short rolling span so the maneuver
        keeps losing the distance term until a successor takes over.  ``None``
        means the maneuver has no executable plan at all from here: straight
        driving with no straight road left before a turning junction, or a
        line stop whose required stop has already been delivered.
        """
        st = self.settings
        route = self.world.route
        full = s0 + st.path_length
        sub = candidate.substate
        if sub in (Substate.TURN_RIGHT, Substate.TURN_LEFT):
            junction = self.world.next_junction(s0)
            if junction is not None:
                branch_sid = route.segment_at(junction.station + 0.5)
                return route.segment_end_station(branch_sid) + st.turn_overrun
            seg_id = route.segment_at(s0)
            if self.world.vmap.segments[seg_id].branch_direction != "straight":
                return route.segment_end_station(seg_id) + st.turn_overrun
            return s0 + st.min_span  # turn finished: objective spent
        if sub is Substate.STOPPED_AT_LINE:
            # End at the line itself so the stopping path stays straight and
            # never borrows curvature from the branch beyond it.
            junction = self.world.next_junction(s0)
            if junction is None:
                return full
            if self._stop_delivered(s0, junction):
                return None  # the required stop already happened; move on
            return junction.stop_line
        if sub is Substate.OVERTAKE_OUT:
            lead = self._lead_actor(s0)
            if lead is None:
                return s0 + st.min_span
            spec, station = lead
            return (station + spec.speed * st.horizon + st.pass_clear_ahead
                    + (spec.length + self.cfg.ego_length) / 2.0)
        if sub is Substate.OVERTAKE_RETURN:
            return s0 + st.lane_shift_length + 10.0
        if sub in (Substate.GO_STRAIGHT, Substate.CAR_FOLLOWING):
            # Straight driving ends where the route stops going straight.  A
            # turning junction caps the span at its approach side; once less
            # than a minimum span of straight road remains there is nothing
            # left for this maneuver to execute.
            junction = self.world.next_junction(s0)
            if junction is not None and junction.branch in ("right", "left"):
                span = junction.stop_line - st.stop_margin_cautious
                return span if span - s0 >= st.min_span else None
            if sub is Substate.CAR_FOLLOWING and self._lead_actor(s0) is None:
                return s0 + st.min_span
        return full

    def _limit_profile(self, candidate: DrivingState, s0: float, span_end: float,
                       conditions: SceneConditions) -> tuple[list, float]:
        """Station-relative speed caps and the base cap in mph."""
        st = self.settings
        derate = 1.0 - st.limit_margin
        route = self.world.route
        entries: list[tuple[float, float, float]] = []
        seg_limits = []
        for sid in route.route:
            a = route.segment_starts[sid]
            b = route.segment_end_station(sid)
            if b < s0 or a > span_end:
                continue
            mph = self.world.vmap.segments[sid].speed_limit_mph
            seg_limits.append(mph)
            entries.append((max(a - s0, 0.0), min(b, span_end) - s0, mph * derate))

        applicable = query_applicable(self.db, self.state, candidate, conditions)
        global_mph = math.inf
        for rec in applicable:
            max_speed = rec.attr("max_speed")
            if max_speed is None:
                continue
            zone_type = rec.attr("zone_type")
            if zone_type is None:
                global_mph = min(global_mph, float(max_speed))
            else:
                for zone in route.zones:
                    if zone.zone_type != zone_type or zone.end <= s0:
                        continue
                    if zone.start - s0 > st.path_length:
                        continue
                    # Take the cap slightly before the boundary so tracking
                    # transients settle before the zone begins.
                    entries.append((max(zone.start - st.zone_entry_lead - s0, 0.0),
                                    zone.end - s0, float(max_speed) * derate))
        if conditions.posted_speed_limit is not None:
            global_mph = min(global_mph, conditions.posted_speed_limit)

        base = min(global_mph, max(seg_limits) if seg_limits else math.inf)
        if not math.isfinite(base):
            base = 200.0
        return entries, base * derate

    def _stop_station(self, candidate: DrivingState, s0: float,
                      conditions: SceneConditions) -> float | None:
        """Path-relative station where this plan must reach zero speed."""
        st = self.settings
        sub = candidate.substate
        barriers: list[float] = []

        junction = self.world.next_junction(s0)
        if sub is Substate.STOPPED_AT_LINE:
            if junction is not None:
                barriers.append(junction.stop_line - st.stop_margin_commit - s0)
        elif sub in (Substate.GO_STRAIGHT, Substate.CAR_FOLLOWING) and junction is not None:
            light_clear = (junction.signal_index is not None
                           and conditions.traffic_light is TrafficLight.GREEN)
            route_turns = junction.branch in ("right", "left")
            if route_turns or not light_clear:
                barriers.append(junction.stop_line - st.stop_margin_cautious - s0)

        if sub in (Substate.GO_STRAIGHT, Substate.CAR_FOLLOWING,
                   Substate.TURN_RIGHT, Substate.TURN_LEFT):
            lead = self._lead_actor(s0)
            if lead is not None:
                spec, station = lead
                buffer = st.follow_gap if sub is Substate.CAR_FOLLOWING else st.caution_gap
                barriers.append(station - s0
                                - (spec.length + self.cfg.ego_length) / 2.0 - buffer)

        if not barriers:
            return None
        return max(0.0, min(barriers))

    def _follow_entries(self, candidate: DrivingState, s0: float,
                        span_end: float) -> list:
        """Speed-matching cap behind a lead actor for following maneuvers."""
        if candidate.substate is not Substate.CAR_FOLLOWING:
            return []
        lead = self._lead_actor(s0)
        if lead is None:
            return []
        spec, station = lead
        if spec.speed < 0.5:
            return []  # standing lead: the stop barrier handles it
        match_from = max(station - s0 - self.settings.follow_distance, 0.0)
        return [(match_from, span_end - s0, mps_to_mph(spec.speed))]

    def _plan_attributes(self, traj: Trajectory, s0: float, profile) -> dict:
        """mph/clearance facts the legality evaluation reads off the plan."""
        attrs: dict[str, float] = {"max_speed": mps_to_mph(traj.max_speed())}
        route_stations = s0 + traj.station
        for zone in self.world.route.zones:
            mask = (route_stations >= zone.start) & (route_stations <= zone.end)
            if np.any(mask):
                key = f"max_speed_in_zone:{zone.zone_type}"
                zone_mph = mps_to_mph(float(np.max(traj.speed[mask])))
                attrs[key] = max(attrs.get(key, 0.0), zone_mph)

        ego_lat = profile(route_stations)
        clearance = math.inf
        for spec, station in self.world.actors_snapshot():
            actor_stations = station + spec.speed * traj.t
            alongside = np.abs(route_stations - actor_stations) <= self.settings.alongside_window
            if not np.any(alongside):
                continue
            lateral_gap = np.abs(ego_lat[alongside] - spec.lateral)
            body = (self.cfg.ego_width + spec.width) / 2.0
            clearance = min(clearance, float(np.min(lateral_gap)) - body)
        if math.isfinite(clearance):
            attrs["min_clearance"] = clearance
        return attrs

    def build_plan(self, plan_id: int, candidate: DrivingState,
                   conditions: SceneConditions) -> CandidatePlan:
        st = self.settings
        fr = self.world.ego_frenet()
        s0, d0 = fr.station, fr.lateral
        route = self.world.route

        span = self._plan_span(candidate, s0)
        if span is None:
            raise TrajectoryInfeasible(
                f"{candidate.label()} has no executable objective from "
                f"station {s0:.1f}")
        span_end = min(span, s0 + st.path_length, route.length - 0.25)
        # Geometric floor only: enough room for a valid spline, not a full
        # rolling span — objective-spent maneuvers set that themselves.
        span_end = max(span_end, min(s0 + 2.0 * st.waypoint_spacing,
                                     route.length - 0.25))
        profile = self._lateral_profile(candidate, s0, d0)
        stations = np.arange(s0 + st.waypoint_spacing, span_end + 1e-9,
                             st.waypoint_spacing)
        if len(stations) < 2:
            stations = np.array([s0 + st.waypoint_spacing, span_end])
        laterals = profile(stations)
        waypoints = [route.point_at(s, d) for s, d in zip(stations, laterals)]

        entries, base_mph = self._limit_profile(candidate, s0, span_end, conditions)
        entries += self._follow_entries(candidate, s0, span_end)

        # A stop barrier beyond this plan's span binds the successor maneuver,
        # not this plan — but the plan must still end slow enough that the
        # successor can brake to it, so it becomes a terminal speed cap.
        stop = self._stop_station(candidate, s0, conditions)
        span_length = span_end - s0
        if stop is not None and stop > span_length + 1e-9:
            v_end = math.sqrt(2.0 * st.decel * (stop - span_length))
            entries.append((max(span_length - 1.0, 0.0), span_length,
                            mps_to_mph(v_end)))
            stop = None

        limits = MotionLimits(speed_limit_mph=base_mph, accel=st.accel, decel=st.decel)
        ego = self.world.ego
        traj = generate_trajectory(
            (ego.x, ego.y, ego.heading), ego.speed, waypoints, limits, st.horizon,
            limit_profile=entries,
            stop_at_station=stop,
            lateral_accel_max=st.lateral_accel_max,
        )
        return CandidatePlan(
            plan_id=plan_id,
            current_state=self.state,
            next_state=candidate,
            trajectory=traj,
            attributes=self._plan_attributes(traj, s0, profile),
        )

    # -- special maneuvers ------------------------------------------------------

    def _brake_plan(self, decel: float, next_state: DrivingState) -> CandidatePlan:
        """Straight-line braking trajectory built in closed form."""
        ego = self.world.ego
        st = self.settings
        dt = 0.1
        ts = np.arange(0.0, st.horizon + dt / 2.0, dt)
        speeds = np.maximum(0.0, ego.speed - decel * ts)
        t_stop = ego.speed / decel if decel > 0 else math.inf
        stations = np.where(
            ts < t_stop,
            ego.speed * ts - 0.5 * decel * ts ** 2,
            ego.speed * min(t_stop, st.horizon) - 0.5 * decel * min(t_stop, st.horizon) ** 2,
        )
        accel = np.zeros_like(speeds)
        accel[:-1] = np.diff(speeds) / dt
        traj = Trajectory(
            t=ts,
            x=ego.x + stations * math.cos(ego.heading),
            y=ego.y + stations * math.sin(ego.heading),
            heading=np.full_like(ts, ego.heading),
            speed=speeds,
            accel=accel,
            curvature=np.zeros_like(ts),
            station=stations,
        )
        return CandidatePlan(
            plan_id=0,
            current_state=self.state,
            next_state=next_state,
            trajectory=traj,
            attributes={"max_speed": mps_to_mph(ego.speed)},
        )

    # -- the planning cycle ------------------------------------------------------

    def decide(self, now: float, conditions: SceneConditions,
               stopped_duration: float) -> Decision:
        self._stopped_duration = stopped_duration
        gap, closing = self.world.corridor_gap()
        if is_emergency(gap, closing, self.cfg.fsm):
            target = DrivingState(Superstate.EMERGENCY_STOP, Substate.EMERGENCY_BRAKE, now)
            plan = self._brake_plan(self.settings.emergency_decel, target)
            self.state = transition(self.state, target, now, self.table)
            self._turn_entry_station = None
            return Decision(now=now, state=self.state, selected=plan,
                            candidates=[plan], emergency=True,
                            describer_consulted=False)

        ctx = self.route_context(now, stopped_duration, gap, closing)
        candidates = candidate_next_states(self.state, ctx, conditions, self.table)
        plans: list[CandidatePlan] = []
        infeasible: list[str] = []
        for plan_id, candidate in enumerate(candidates):
            try:
                if candidate.substate is Substate.EMERGENCY_BRAKE:
                    if (ctx.hazard_cleared
                            and self.world.ego.speed < self.settings.stop_speed):
                        raise TrajectoryInfeasible(
                            "emergency brake has no hazard to hold for")
                    plan = self._brake_plan(self.settings.emergency_decel, candidate)
                    plan.plan_id = plan_id
                else:
                    plan = self.build_plan(plan_id, candidate, conditions)
            except (TrajectoryInfeasible, SplineError) as exc:
                infeasible.append(f"{candidate.label()}: {exc}")
                continue
            plan.verdict = evaluate_legality(self.db, plan, conditions)
            legal = legality_cost(plan.verdict, self.cfg.legality_penalty)
            safety, comfort = safety_comfort_cost(plan.trajectory, self.cfg.norms)
            distance = distance_cost(plan.trajectory, self.world.route,
                                     self.cfg.goal_station)
            plan.breakdown = make_breakdown(self.cfg.weights, legal, safety, comfort,
                                            distance)
            plans.append(plan)

        if not plans:
            plan = self._brake_plan(self.settings.decel, self.state)
            return Decision(now=now, state=self.state, selected=plan,
                            candidates=[plan], fallback=True,
                            infeasible=tuple(infeasible))

        selected = select_plan(plans)
        if selected.breakdown.legal > 0.0:
            # Even the cheapest candidate breaks a regulation.  Braking in
            # the current state is always lawful, so hold instead of ever
            # executing an illegal plan (e.g. waiting out a red signal with
            # a posted turn prohibition).
            plan = self._brake_plan(self.settings.decel, self.state)
            return Decision(now=now, state=self.state, selected=plan,
                            candidates=plans, fallback=True, holding=True,
                            infeasible=tuple(infeasible))
        previous = self.state
        self.state = transition(self.state, selected.next_state, now, self.table)
        if self.state.pair != previous.pair:
            fr = self.world.ego_frenet()
            if self.state.substate in (Substate.TURN_RIGHT, Substate.TURN_LEFT):
                junction = self.world.next_junction(fr.station)
                self._turn_entry_station = junction.station if junction else None
            elif self.state.superstate is not previous.superstate:
                self._turn_entry_station = None
            if self.state.substate in (Substate.OVERTAKE_OUT, Substate.OVERTAKE_RETURN):
                self._shift_anchor = (fr.station, fr.lateral)
            else:
                self._shift_anchor = None
        return Decision(now=now, state=self.state, selected=selected,
                        candidates=plans, infeasible=tuple(infeasible))
