"""Weighted plan scoring.

Each candidate plan gets four cost components: a binary legality penalty,
normalized safety and comfort terms from the trajectory dynamics, and the
remaining fraction of the distance to the mission goal.  The total is the
dot product with a weight vector; the legality weight dominates so that an
illegal plan only wins when every alternative is also illegal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from regplan.fsm import DrivingState
from regplan.geom.trajectory import Trajectory
from regplan.regdb import LegalityVerdict


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class CostWeights:
    legal: float = 10.0
    safety: float = 1.0
    comfort: float = 1.0
    distance: float = 1.0

    def __post_init__(self):
        values = (self.legal, self.safety, self.comfort, self.distance)
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ValueError("weights must be finite and non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.legal, self.safety, self.comfort, self.distance])


@dataclass(frozen=True)
class CostNorms:
    accel_ref: float = 3.0        # m/s^2, mean |accel| treated as full scale
    speed_var_ref: float = 4.0    # (m/s)^2, speed variance full scale
    curvature_ref: float = 0.2    # 1/m, max curvature full scale


@dataclass(frozen=True)
class CostBreakdown:
    legal: float
    safety: float
    comfort: float
    distance: float
    total: float

    def components(self) -> tuple[float, float, float, float]:
        return (self.legal, self.safety, self.comfort, self.distance)


@dataclass
class CandidatePlan:
    plan_id: int
    current_state: DrivingState
    next_state: DrivingState
    trajectory: Trajectory | None = None
    verdict: LegalityVerdict | None = None
    attributes: dict = field(default_factory=dict)
    breakdown: CostBreakdown | None = None


def legality_cost(verdict: LegalityVerdict, penalty: float = 1.0) -> float:
    """0 when legal, the flat penalty otherwise; match count does not scale it."""
    return 0.0 if verdict.legal else penalty


def safety_comfort_cost(traj: Trajectory,
                        norms: CostNorms = CostNorms()) -> tuple[float, float]:
    """Normalized dynamic-quality terms.

    Safety averages the acceleration magnitude and peak curvature scales;
    comfort additionally penalizes speed variance (population variance,
    matching a fixed sample grid).
    """
    if len(traj) < 2:
        raise ValueError("need at least two samples to score dynamics")
    mean_abs_accel = float(np.mean(np.abs(traj.accel)))
    max_curv = float(np.max(np.abs(traj.curvature)))
    speed_var = float(np.var(traj.speed))
    a_n = mean_abs_accel / norms.accel_ref
    k_n = max_curv / norms.curvature_ref
    v_n = speed_var / norms.speed_var_ref
    return (a_n + k_n) / 2.0, (a_n + v_n + k_n) / 3.0


def distance_cost(traj: Trajectory, refpath, goal_station: float) -> float:
    """Fraction of the start-to-goal distance the plan leaves uncovered.

    Start and end positions are projected onto the reference path, so
    laterally offset plans are measured by longitudinal progress only.
    Clamped to [0, 1]: overshooting the goal costs nothing extra.
    """
    start_station = refpath.project(traj.start_position()).station
    end_station = refpath.project(traj.end_position()).station
    span = goal_station - start_station
    if span <= 1e-9:
        return 0.0
    return float(min(max((goal_station - end_station) / span, 0.0), 1.0))


def total_cost(weights: CostWeights, legal: float, safety: float, comfort: float,
               distance: float) -> float:
    return (weights.legal * legal + weights.safety * safety
            + weights.comfort * comfort + weights.distance * distance)


def make_breakdown(weights: CostWeights, legal: float, safety: float, comfort: float,
                   distance: float) -> CostBreakdown:
    return CostBreakdown(
        legal=legal, safety=safety, comfort=comfort, distance=distance,
        total=total_cost(weights, legal, safety, comfort, distance),
    )


def select_plan(plans) -> CandidatePlan:
    """Lowest total cost wins; ties break to the lowest plan id."""
    scored = [p for p in plans if p.breakdown is not None]
    if not scored:
        raise SelectionError("no scored plans to select from")
    return min(scored, key=lambda p: (p.breakdown.total, p.plan_id))
