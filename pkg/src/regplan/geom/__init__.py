"""Path geometry: arc-length splines, vector maps, and speed-profiled trajectories."""

from regplan.geom.spline import CubicSpline2D, FrenetPose, PathPoint, SplineError
from regplan.geom.vectormap import (
    MapError,
    RoadSegment,
    RoutePath,
    VectorMap,
    Zone,
    route_next_segments,
)
from regplan.geom.trajectory import (
    MotionLimits,
    Trajectory,
    TrajectoryInfeasible,
    generate_trajectory,
)

__all__ = [
    "CubicSpline2D",
    "FrenetPose",
    "PathPoint",
    "SplineError",
    "MapError",
    "RoadSegment",
    "RoutePath",
    "VectorMap",
    "Zone",
    "route_next_segments",
    "MotionLimits",
    "Trajectory",
    "TrajectoryInfeasible",
    "generate_trajectory",
]
