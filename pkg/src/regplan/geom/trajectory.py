"""Speed-profiled trajectories along spline paths.

``generate_trajectory`` fits a spline through the target waypoints and
lays a trapezoidal speed profile over it: speed caps per station (segment
limit, regulation limits that begin partway down the path, curvature
comfort) are combined, a backward pass enforces the deceleration bound
into every upcoming cap or stop point, and a forward pass enforces the
acceleration bound from the current speed.  Samples are emitted on a
fixed time grid so the tracker can index them by elapsed time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from regplan.geom.spline import CubicSpline2D
from regplan.units import mph_to_mps


class TrajectoryInfeasible(RuntimeError):
    """No dynamically feasible profile exists (e.g. cannot stop in time)."""


@dataclass(frozen=True)
class MotionLimits:
    speed_limit_mph: float
    accel: float   # m/s^2, >= 0
    decel: float   # m/s^2, >= 0 (magnitude of braking bound)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float
    curvature: float
    station: float


class Trajectory:
    """Time-sampled motion plan.  Arrays are parallel, one row per sample."""

    def __init__(self, t, x, y, heading, speed, accel, curvature, station):
        self.t = np.asarray(t, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.heading = np.asarray(heading, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.accel = np.asarray(accel, dtype=float)
        self.curvature = np.asarray(curvature, dtype=float)
        self.station = np.asarray(station, dtype=float)
        if len(self.t) < 2:
            raise TrajectoryInfeasible("trajectory needs at least two samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(self.speed < -1e-9):
            raise ValueError("speeds must be non-negative")
        if np.any(np.diff(self.station) < -1e-9):
            raise ValueError("stations must be non-decreasing")

    def __len__(self) -> int:
        return len(self.t)

    def sample(self, i: int) -> TrajectorySample:
        return TrajectorySample(
            t=float(self.t[i]), x=float(self.x[i]), y=float(self.y[i]),
            heading=float(self.heading[i]), speed=float(self.speed[i]),
            accel=float(self.accel[i]), curvature=float(self.curvature[i]),
            station=float(self.station[i]),
        )

    def max_speed(self) -> float:
        return float(np.max(self.speed))

    def end_position(self) -> tuple[float, float]:
        return float(self.x[-1]), float(self.y[-1])

    def start_position(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.y[0])


def _station_caps(path: CubicSpline2D, grid: np.ndarray, limits: MotionLimits,
                  limit_profile, stop_stations, lateral_accel_max: float) -> np.ndarray:
    caps = np.full_like(grid, mph_to_mps(limits.speed_limit_mph))
    if limit_profile:
        for start, end, mph in limit_profile:
            mask = (grid >= start - 1e-9) & (grid <= end + 1e-9)
            caps[mask] = np.minimum(caps[mask], mph_to_mps(mph))
    if lateral_accel_max > 0:
        curv = np.abs([path.eval(s).curvature for s in grid])
        with np.errstate(divide="ignore"):
            v_curv = np.sqrt(np.where(curv > 1e-9, lateral_accel_max / np.maximum(curv, 1e-9),
                                      np.inf))
        caps = np.minimum(caps, v_curv)
    for s_stop in stop_stations:
        caps[grid >= s_stop - 1e-9] = 0.0
    return caps


def generate_trajectory(start_pose, start_speed: float, waypoints, limits: MotionLimits,
                        horizon: float, *, limit_profile=None, stop_at_station=None,
                        stop_at_end: bool = False, dt: float = 0.1,
                        lateral_accel_max: float = 2.0, ds: float = 0.25,
                        start_speed_tolerance: float = 0.5) -> Trajectory:
    """Build a trajectory from the current pose through the waypoints.

    start_pose: (x, y, heading).  waypoints: iterable of (x, y) ahead of
    the start.  limit_profile: optional [(start_station, end_station, mph)]
    caps expressed in path stations measured from the start pose.
    stop_at_station: require speed zero at that path station and beyond.
    Raises TrajectoryInfeasible when the current speed cannot be reconciled
    with the caps under the deceleration bound; tracking jitter up to
    ``start_speed_tolerance`` above the envelope is absorbed by clamping
    the profile's first sample instead.
    """
    x0, y0 = float(start_pose[0]), float(start_pose[1])
    pts = [(x0, y0)]
    for w in waypoints:
        px, py = float(w[0]), float(w[1])
        lx, ly = pts[-1]
        if (px - lx) ** 2 + (py - ly) ** 2 > 0.25 ** 2:
            pts.append((px, py))
    if len(pts) < 2:
        raise TrajectoryInfeasible("no usable waypoints ahead of the start pose")
    path = CubicSpline2D(pts)

    n = max(2, int(np.ceil(path.length / ds)) + 1)
    grid = np.linspace(0.0, path.length, n)
    stops = []
    if stop_at_station is not None:
        stops.append(min(max(float(stop_at_station), 0.0), path.length))
    if stop_at_end:
        stops.append(path.length)
    caps = _station_caps(path, grid, limits, limit_profile, stops, lateral_accel_max)

    # Backward pass: decelerating into every cap must stay feasible.
    v_b = np.empty_like(caps)
    v_b[-1] = caps[-1]
    seg = np.diff(grid)
    for i in range(n - 2, -1, -1):
        v_b[i] = min(caps[i], np.sqrt(v_b[i + 1] ** 2 + 2.0 * limits.decel * seg[i]))

    v0 = max(float(start_speed), 0.0)
    if v0 > v_b[0] + start_speed_tolerance:
        raise TrajectoryInfeasible(
            f"start speed {v0:.2f} m/s exceeds the feasible envelope {v_b[0]:.2f} m/s")

    # Forward pass: acceleration-bounded from the current speed.
    v = np.empty_like(v_b)
    v[0] = min(v0, v_b[0])
    for i in range(n - 1):
        v[i + 1] = min(v_b[i + 1], np.sqrt(v[i] ** 2 + 2.0 * limits.accel * seg[i]))

    # Truncate once the profile is parked (consecutive zero-speed knots).
    last = n - 1
    for i in range(n - 1):
        if v[i] < 1e-6 and v[i + 1] < 1e-6:
            last = i
            break
    stopped_at_end = v[last] < 1e-6

    # Station -> time over the kept knots, exact for piecewise-constant accel.
    times = np.zeros(last + 1)
    for i in range(last):
        v1, v2 = v[i], v[i + 1]
        a = (v2 ** 2 - v1 ** 2) / (2.0 * seg[i])
        if abs(a) > 1e-9:
            times[i + 1] = times[i] + (v2 - v1) / a
        elif v1 > 1e-9:
            times[i + 1] = times[i] + seg[i] / v1
        else:
            times[i + 1] = times[i]  # unreachable knot; loop above truncates first

    total_time = times[-1]
    sample_t = np.arange(0.0, horizon + dt / 2, dt)
    s_of_t = np.empty_like(sample_t)
    v_of_t = np.empty_like(sample_t)
    for j, tj in enumerate(sample_t):
        if tj >= total_time:
            if stopped_at_end:
                s_of_t[j], v_of_t[j] = grid[last], 0.0
            else:
                sample_t = sample_t[:j]
                s_of_t, v_of_t = s_of_t[:j], v_of_t[:j]
                break
        else:
            i = int(np.searchsorted(times, tj, side="right")) - 1
            i = min(max(i, 0), last - 1)
            v1, v2 = v[i], v[i + 1]
            a = (v2 ** 2 - v1 ** 2) / (2.0 * seg[i])
            dt_in = tj - times[i]
            s_of_t[j] = grid[i] + v1 * dt_in + 0.5 * a * dt_in ** 2
            v_of_t[j] = v1 + a * dt_in

    if len(sample_t) < 2:
        # Path ends almost immediately; pad one terminal sample.
        sample_t = np.array([0.0, dt])
        s_of_t = np.array([0.0, min(path.length, v0 * dt)])
        v_of_t = np.array([v0, v0])

    poses = [path.eval(min(s, path.length)) for s in s_of_t]
    accel = np.zeros_like(v_of_t)
    accel[:-1] = np.diff(v_of_t) / dt  # integrating these reproduces the speeds
    return Trajectory(
        t=sample_t,
        x=[p.x for p in poses],
        y=[p.y for p in poses],
        heading=[p.heading for p in poses],
        speed=v_of_t,
        accel=accel,
        curvature=[p.curvature for p in poses],
        station=s_of_t,
    )
