"""Pure-pursuit trajectory tracking.

Turns the currently selected trajectory into per-step acceleration and
curvature commands.  Longitudinal control is feedforward from the
trajectory's speed profile plus a proportional correction; lateral control
is classic pure pursuit toward a lookahead point on the trajectory, which
keeps the controller stateless and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from regplan.geom import Trajectory
from regplan.sim.world import ACCEL_BOUND, CURVATURE_BOUND, EgoCommand, EgoState


@dataclass(frozen=True)
class TrackerConfig:
    lookahead: float = 5.0      # m along the trajectory
    speed_gain: float = 1.5     # 1/s proportional speed correction
    stop_speed: float = 0.02    # m/s, profile speeds below this mean "hold"


class PurePursuitTracker:
    def __init__(self, config: TrackerConfig = TrackerConfig()):
        self.config = config

    def command(self, ego: EgoState, traj: Trajectory, elapsed: float,
                dt: float) -> EgoCommand:
        """Command for the step starting now, ``elapsed`` s after the plan."""
        cfg = self.config
        idx = int(np.searchsorted(traj.t, elapsed + 1e-9))
        idx = min(max(idx, 0), len(traj) - 1)
        v_des = float(traj.speed[idx])
        a_ff = float(traj.accel[idx])

        if v_des < cfg.stop_speed:
            # Profile wants a standstill: bleed the remaining speed in one step.
            accel = max(-ACCEL_BOUND, -ego.speed / dt) if ego.speed > 0 else 0.0
            return EgoCommand(accel=accel, curvature=0.0)

        accel = a_ff + cfg.speed_gain * (v_des - ego.speed)
        accel = float(np.clip(accel, -ACCEL_BOUND, ACCEL_BOUND))

        # Lateral: chase a lookahead point measured along the trajectory from
        # the sample nearest the ego.
        d2 = (traj.x - ego.x) ** 2 + (traj.y - ego.y) ** 2
        nearest = int(np.argmin(d2))
        target_station = float(traj.station[nearest]) + cfg.lookahead
        tail = int(np.searchsorted(traj.station, target_station))
        tail = min(tail, len(traj) - 1)
        tx, ty = float(traj.x[tail]), float(traj.y[tail])
        chord = math.hypot(tx - ego.x, ty - ego.y)
        if chord < 0.5:
            curvature = float(traj.curvature[idx])
        else:
            alpha = math.atan2(ty - ego.y, tx - ego.x) - ego.heading
            alpha = math.atan2(math.sin(alpha), math.cos(alpha))
            curvature = 2.0 * math.sin(alpha) / chord
        curvature = float(np.clip(curvature, -CURVATURE_BOUND, CURVATURE_BOUND))
        return EgoCommand(accel=accel, curvature=curvature)
