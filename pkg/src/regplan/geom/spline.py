"""Planar cubic splines parameterized by arc length.

A path is fit through waypoints with natural cubic splines (zero second
derivative at both ends).  The first fit uses cumulative chord length as
the parameter; the knot parameters are then iteratively replaced with the
measured arc length of the previous fit until parameter and arc length
agree to within a tolerance.  After refinement the station ``s`` handed to
``eval`` is an arc length along the path to within that tolerance, and
evaluation at a knot station returns the original waypoint exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar


class SplineError(ValueError):
    """Bad input geometry or out-of-range station."""


@dataclass(frozen=True)
class PathPoint:
    """Pose sampled from a path at a given station."""

    station: float
    x: float
    y: float
    heading: float    # rad, atan2 of the tangent
    curvature: float  # 1/m, signed, left turns positive


@dataclass(frozen=True)
class FrenetPose:
    """Projection of a point onto a path: station along it, lateral offset.

    Lateral is signed: positive to the left of the path tangent.
    """

    station: float
    lateral: float


# Gauss-Legendre nodes/weights on [0, 1], enough for cubic integrands.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


class CubicSpline2D:
    def __init__(self, points, tol: float = 1e-3, max_refits: int = 8):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise SplineError("points must be an (n, 2) array")
        if len(pts) < 2:
            raise SplineError("need at least two waypoints")
        steps = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
        if np.any(steps < 1e-9):
            raise SplineError("consecutive waypoints must be distinct")

        u = np.concatenate(([0.0], np.cumsum(steps)))
        for _ in range(max_refits):
            sx = CubicSpline(u, pts[:, 0], bc_type="natural")
            sy = CubicSpline(u, pts[:, 1], bc_type="natural")
            arc = self._knot_arc_lengths(sx, sy, u)
            if np.max(np.abs(arc - u)) < tol:
                break
            u = arc
        self._sx = sx
        self._sy = sy
        self.knots = u
        self.length = float(u[-1])
        self.waypoints = pts

    @staticmethod
    def _knot_arc_lengths(sx: CubicSpline, sy: CubicSpline, u: np.ndarray) -> np.ndarray:
        """Cumulative arc length at each knot, via Gauss-Legendre per interval."""
        dsx, dsy = sx.derivative(), sy.derivative()
        lengths = [0.0]
        for a, b in zip(u[:-1], u[1:]):
            t = a + (b - a) * _GL_NODES
            speed = np.hypot(dsx(t), dsy(t))
            lengths.append(lengths[-1] + (b - a) * float(np.dot(_GL_WEIGHTS, speed)))
        return np.asarray(lengths)

    def _check_station(self, s: float) -> float:
        if s < -1e-9 or s > self.length + 1e-9:
            raise SplineError(f"station {s} outside [0, {self.length}]")
        return min(max(s, 0.0), self.length)

    def eval(self, station: float) -> PathPoint:
        """Pose at a station measured along the path."""
        s = self._check_station(station)
        dx, dy = self._sx(s, 1), self._sy(s, 1)
        ddx, ddy = self._sx(s, 2), self._sy(s, 2)
        denom = (dx * dx + dy * dy) ** 1.5
        curv = 0.0 if denom < 1e-12 else (dx * ddy - dy * ddx) / denom
        return PathPoint(
            station=s,
            x=float(self._sx(s)),
            y=float(self._sy(s)),
            heading=float(np.arctan2(dy, dx)),
            curvature=float(curv),
        )

    def positions(self, stations: np.ndarray) -> np.ndarray:
        """Vectorized (n, 2) positions; stations are clamped to the domain."""
        s = np.clip(np.asarray(stations, dtype=float), 0.0, self.length)
        return np.column_stack((self._sx(s), self._sy(s)))

    def left_normal(self, station: float) -> tuple[float, float]:
        p = self.eval(station)
        return -np.sin(p.heading), np.cos(p.heading)

    def project(self, point) -> FrenetPose:
        """Closest station to a point, refined from a dense scan.

        The dense scan brackets the global minimum; bounded scalar
        minimization then refines the station well below 1e-3 m.
        """
        px, py = float(point[0]), float(point[1])
        n = max(64, int(self.length / 0.25) + 1)
        grid = np.linspace(0.0, self.length, n)
        pos = self.positions(grid)
        d2 = (pos[:, 0] - px) ** 2 + (pos[:, 1] - py) ** 2
        i = int(np.argmin(d2))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n - 1)]

        def d2_of(s: float) -> float:
            return (float(self._sx(s)) - px) ** 2 + (float(self._sy(s)) - py) ** 2

        if hi - lo > 1e-12:
            res = minimize_scalar(d2_of, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-7})
            s = float(res.x)
            if d2_of(s) > d2[i]:
                s = float(grid[i])
        else:
            s = float(grid[i])

        p = self.eval(s)
        dx, dy = px - p.x, py - p.y
        tangent = (np.cos(p.heading), np.sin(p.heading))
        lateral = tangent[0] * dy - tangent[1] * dx  # z of tangent x delta
        return FrenetPose(station=s, lateral=float(lateral))
