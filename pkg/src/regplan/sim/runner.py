"""Closed-loop scenario execution.

One run wires the fixed-cadence loops together: physics at ``physics_dt``,
the describer and planner at their own periods (describer first, and never
while the emergency superstate holds the vehicle).  Scene snapshots land
in a mailbox and are folded into effective conditions with staleness
expiry at each planner tick, so the planner always reasons over bounded-
age information.  Every step appends one sample to the event log; the
loop ends at the goal station, on planner deadlock, or at the timeout.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from importlib import resources

from regplan.fsm import PromptError, Superstate, prompt_for
from regplan.regdb import Jurisdiction, JurisdictionLevel, RegulationDatabase, activate, parse_regulation_csv
from regplan.scene import SceneConditions, describe_scripted, merge_conditions, parse_response
from regplan.sim.config import ScenarioConfig
from regplan.sim.eventlog import DecisionEvent, DescriberEvent, EventLog, Sample, TransitionEvent
from regplan.sim.planner import MissionPlanner
from regplan.sim.tracker import PurePursuitTracker
from regplan.sim.world import World

_STOP_SPEED = 0.1          # m/s under which the ego counts as stopped
_DEADLOCK_SECONDS = 5.0    # sustained fallback braking treated as failure


def default_database() -> RegulationDatabase:
    """Parse the regulation CSV bundled with the package."""
    text = (resources.files("regplan.data") / "regulations.csv").read_text("utf-8")
    return parse_regulation_csv(text)


def activate_for(cfg: ScenarioConfig, db: RegulationDatabase) -> RegulationDatabase:
    chain = tuple(
        Jurisdiction(level=JurisdictionLevel[level.upper()], name=name)
        for level, name in cfg.jurisdiction
    )
    on_date = _dt.date.fromisoformat(cfg.activation_date)
    return activate(db, chain, on_date)


def effective_conditions(snapshots: list, now: float,
                         window: float) -> SceneConditions:
    """Fold mailbox snapshots into one view, expiring stale fields."""
    live = [s for s in snapshots if now - s.observed_at <= window]
    if not live:
        return SceneConditions(observed_at=now)
    merged = live[0]
    for snap in live[1:]:
        merged = merge_conditions(merged, snap, now=snap.observed_at,
                                  staleness_window=window)
    if merged.observed_at < now:
        merged = merge_conditions(merged, SceneConditions(observed_at=now), now,
                                  staleness_window=window)
    return merged


def _build_meta(cfg: ScenarioConfig, world: World) -> dict:
    route = world.route
    return {
        "scenario": cfg.name,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "physics_dt": cfg.physics_dt,
        "planner_period": cfg.planner_period,
        "goal_station": cfg.goal_station,
        "route": list(cfg.route),
        "route_length": round(route.length, 6),
        "ego": {
            "width": cfg.ego_width, "length": cfg.ego_length,
            "start_station": cfg.ego_start_station,
            "start_speed": cfg.ego_start_speed,
        },
        "actors": [
            {"kind": a.kind, "width": a.width, "length": a.length,
             "lateral": a.lateral, "speed": a.speed, "spawn_time": a.spawn_time,
             "start_station": a.start_station}
            for a in cfg.actors
        ],
        "signals": [
            {"station": s.station, "phases": [[n, d] for n, d in s.phases]}
            for s in cfg.signals
        ],
        "signs": [
            {"sign": s.sign, "station": s.station, "value": s.value}
            for s in cfg.signs
        ],
        "zones": [
            {"zone_type": z.zone_type, "start": round(z.start, 6),
             "end": round(z.end, 6),
             "marker": None if z.marker_station is None else round(z.marker_station, 6)}
            for z in route.zones
        ],
        "segments": [
            {"id": sid,
             "start": round(route.segment_starts[sid], 6),
             "end": round(route.segment_end_station(sid), 6),
             "lane_width": world.vmap.segments[sid].lane_width,
             "speed_limit_mph": world.vmap.segments[sid].speed_limit_mph,
             "lane_marking_left": world.vmap.segments[sid].lane_marking_left,
             "road_type": world.vmap.segments[sid].road_type,
             "branch": world.vmap.segments[sid].branch_direction,
             "bicycle_lane": world.vmap.segments[sid].bicycle_lane}
            for sid in route.route
        ],
        "junctions": [
            {"station": round(j.station, 6), "branch": j.branch,
             "stop_line": round(j.stop_line, 6), "signal_index": j.signal_index}
            for j in world.junctions
        ],
    }


@dataclass
class RunResult:
    log: EventLog
    completed: bool
    reached_goal_at: float | None
    world: World
    db: RegulationDatabase
    planner: MissionPlanner


def run_scenario(cfg: ScenarioConfig,
                 db: RegulationDatabase | None = None) -> RunResult:
    if db is None:
        db = default_database()
    db = activate_for(cfg, db)
    world = World(cfg)
    planner = MissionPlanner(world, db, cfg)
    tracker = PurePursuitTracker()
    log = EventLog(meta=_build_meta(cfg, world))

    dt = cfg.physics_dt
    describer_every = round(cfg.describer_period / dt)
    planner_every = round(cfg.planner_period / dt)
    n_steps = int(round(cfg.timeout / dt))

    snapshots: list[SceneConditions] = []
    decision = None
    plan_started_at = 0.0
    stopped_since: float | None = None
    fallback_since: float | None = None
    was_holding = False
    completed = False
    reached_goal_at = None

    for k in range(n_steps + 1):
        t = k * dt
        station = world.ego_frenet().station
        lateral = world.ego_frenet().lateral

        if station >= cfg.goal_station:
            completed = True
            reached_goal_at = t
            log.add_note(t, "goal reached")

        if not completed and k % describer_every == 0 \
                and planner.state.superstate is not Superstate.EMERGENCY_STOP:
            try:
                prompt = prompt_for(planner.state.superstate)
            except PromptError:  # pragma: no cover - guarded by the check above
                prompt = None
            if prompt is not None:
                view = world.ground_truth_view()
                response = describe_scripted(view, prompt, produced_at=t,
                                             config=cfg.describer)
                unparsed: list[str] = []
                snapshots.append(parse_response(response, unparsed))
                snapshots = [s for s in snapshots
                             if t - s.observed_at <= cfg.staleness_window]
                log.add_describer(DescriberEvent(
                    t=t, prompt=prompt, text=response.text,
                    unparsed=tuple(unparsed)))

        if not completed and k % planner_every == 0:
            conditions = effective_conditions(snapshots, t, cfg.staleness_window)
            stopped_duration = (t - stopped_since) if stopped_since is not None else 0.0
            before = planner.state
            decision = planner.decide(t, conditions, stopped_duration)
            plan_started_at = t
            log.add_decision(DecisionEvent(
                t=t,
                state_label=decision.state.label(),
                selected_plan=decision.selected.plan_id,
                emergency=decision.emergency,
                describer_consulted=decision.describer_consulted,
                candidates=tuple(_candidate_record(p) for p in decision.candidates),
            ))
            if decision.state.pair != before.pair:
                log.add_transition(TransitionEvent(
                    t=t, from_label=before.label(), to_label=decision.state.label(),
                    reason="emergency" if decision.emergency else "selected"))
            for reason in decision.infeasible:
                log.add_note(t, f"infeasible candidate: {reason}")
            if decision.fallback and not decision.holding:
                # A lawful hold (candidates scored, all illegal) can last as
                # long as the prohibition does; only a genuine wedge — no
                # feasible candidate at all — counts toward the deadlock timer.
                fallback_since = t if fallback_since is None else fallback_since
            else:
                fallback_since = None
            if decision.holding and not was_holding:
                log.add_note(t, "holding position: every candidate plan is illegal")
            was_holding = decision.holding

        breakdown = decision.selected.breakdown if decision else None
        log.add_sample(Sample(
            t=t, x=world.ego.x, y=world.ego.y, heading=world.ego.heading,
            speed=world.ego.speed, accel=world.ego.accel,
            curvature=world.ego.curvature, station=station, lateral=lateral,
            superstate=planner.state.superstate.value,
            substate=planner.state.substate.value,
            plan_id=decision.selected.plan_id if decision else -1,
            total_cost=breakdown.total if breakdown else -1.0,
            describer_consulted=decision.describer_consulted if decision else False,
            signal_phases=tuple(world.signal_phase(i).value
                                for i in range(len(cfg.signals))),
            actor_stations=tuple(world.state.actor_stations),
        ))

        if completed:
            break
        if fallback_since is not None and t - fallback_since >= _DEADLOCK_SECONDS:
            log.add_note(t, "planner deadlock: no feasible candidate for "
                            f"{_DEADLOCK_SECONDS:.0f} s")
            break

        command = tracker.command(world.ego, decision.selected.trajectory,
                                  t - plan_started_at, dt)
        world.advance(command)
        if world.ego.speed < _STOP_SPEED:
            if stopped_since is None:
                stopped_since = world.t
        else:
            stopped_since = None
    else:
        log.add_note(n_steps * dt, "timeout before reaching the goal")

    return RunResult(log=log, completed=completed, reached_goal_at=reached_goal_at,
                     world=world, db=db, planner=planner)


def _candidate_record(plan) -> dict:
    record = {
        "plan_id": plan.plan_id,
        "label": plan.next_state.label(),
    }
    if plan.verdict is not None:
        record["legal"] = plan.verdict.legal
        record["matched"] = list(plan.verdict.matched_records)
    if plan.breakdown is not None:
        record.update(
            total=round(plan.breakdown.total, 9),
            legal_cost=round(plan.breakdown.legal, 9),
            safety=round(plan.breakdown.safety, 9),
            comfort=round(plan.breakdown.comfort, 9),
            distance=round(plan.breakdown.distance, 9),
        )
    return record
