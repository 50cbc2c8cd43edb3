"""Lightweight vector map: road segments chained into a drivable route.

Segments carry the per-lane metadata the planner and the regulation
auditor need (speed limit, marking type, special zones).  A ``RoutePath``
stitches an ordered list of segments into one arc-length spline so that a
single station coordinate covers the whole mission.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from regplan.geom.spline import CubicSpline2D, FrenetPose


class MapError(ValueError):
    """Inconsistent map topology or unknown segment references."""


@dataclass(frozen=True)
class Zone:
    """Special-rule interval on a segment, stations local to the segment."""

    zone_type: str        # e.g. "school"
    start: float          # m from segment start
    end: float            # m from segment start
    marker_station: float | None = None  # where the announcing landmark sits


@dataclass(frozen=True)
class RoadSegment:
    seg_id: str
    waypoints: tuple  # ((x, y), ...) centerline
    lane_width: float = 3.5
    speed_limit_mph: float = 35.0
    successors: tuple = ()            # segment ids reachable from the end
    branch_direction: str = "straight"  # how this segment branches off its parent
    road_type: str = "highway"
    lane_marking_left: str = "dashed"   # "dashed" | "solid"
    bicycle_lane: bool = False          # marked bicycle lane alongside
    zones: tuple = ()                   # Zone instances


@dataclass
class VectorMap:
    segments: dict = field(default_factory=dict)

    @classmethod
    def from_segments(cls, segments) -> "VectorMap":
        vmap = cls(segments={s.seg_id: s for s in segments})
        if len(vmap.segments) != len(segments):
            raise MapError("duplicate segment id")
        vmap.validate()
        return vmap

    def validate(self) -> None:
        for seg in self.segments.values():
            if len(seg.waypoints) < 2:
                raise MapError(f"segment {seg.seg_id} needs at least 2 waypoints")
            for succ in seg.successors:
                if succ not in self.segments:
                    raise MapError(f"segment {seg.seg_id} references unknown successor {succ}")
            if seg.branch_direction not in ("straight", "left", "right"):
                raise MapError(f"segment {seg.seg_id} has bad branch direction")
            for z in seg.zones:
                if z.end <= z.start:
                    raise MapError(f"segment {seg.seg_id} zone {z.zone_type} is empty")


def route_next_segments(vmap: VectorMap, current_segment: str):
    """Successor segments of the current one, with their branch directions."""
    if current_segment not in vmap.segments:
        raise MapError(f"unknown segment {current_segment}")
    seg = vmap.segments[current_segment]
    return [(sid, vmap.segments[sid].branch_direction) for sid in seg.successors]


@dataclass(frozen=True)
class RouteZone:
    zone_type: str
    start: float
    end: float
    marker_station: float | None = None


class RoutePath:
    """An ordered chain of segments fused into one arc-length spline.

    Consecutive segments must share their junction waypoint; the shared
    point is kept once.  Segment boundaries, zones, and per-station
    metadata are all expressed in route stations.
    """

    def __init__(self, vmap: VectorMap, route):
        self.vmap = vmap
        self.route = tuple(route)
        if not self.route:
            raise MapError("route is empty")
        pts: list = []
        boundary_idx: list = []  # waypoint index where each segment starts
        prev = None
        for sid in self.route:
            if sid not in vmap.segments:
                raise MapError(f"route references unknown segment {sid}")
            seg = vmap.segments[sid]
            if prev is not None and sid not in vmap.segments[prev].successors:
                raise MapError(f"route hop {prev} -> {sid} is not in the map adjacency")
            wpts = list(seg.waypoints)
            if pts:
                x0, y0 = pts[-1]
                x1, y1 = wpts[0]
                if (x1 - x0) ** 2 + (y1 - y0) ** 2 > 0.25:
                    raise MapError(f"segments {prev} and {sid} do not connect")
                wpts = wpts[1:]
            boundary_idx.append(len(pts) if prev is None else len(pts) - 1)
            pts.extend(wpts)
            prev = sid
        self.spline = CubicSpline2D(pts)
        self.length = self.spline.length
        # Route station where each segment begins (knots are arc lengths).
        self.segment_starts = {
            sid: float(self.spline.knots[idx]) for sid, idx in zip(self.route, boundary_idx)
        }
        self.zones = self._collect_zones()

    def _collect_zones(self):
        zones = []
        for sid in self.route:
            seg = self.vmap.segments[sid]
            off = self.segment_starts[sid]
            for z in seg.zones:
                marker = None if z.marker_station is None else off + z.marker_station
                zones.append(RouteZone(z.zone_type, off + z.start, off + z.end, marker))
        return tuple(zones)

    def segment_at(self, station: float) -> str:
        """Segment id owning a route station."""
        current = self.route[0]
        for sid in self.route:
            if self.segment_starts[sid] <= station + 1e-9:
                current = sid
        return current

    def segment_end_station(self, sid: str) -> float:
        idx = self.route.index(sid)
        if idx + 1 < len(self.route):
            return self.segment_starts[self.route[idx + 1]]
        return self.length

    def speed_limit_mph_at(self, station: float) -> float:
        return self.vmap.segments[self.segment_at(station)].speed_limit_mph

    def eval(self, station: float):
        return self.spline.eval(station)

    def project(self, point) -> FrenetPose:
        return self.spline.project(point)

    def point_at(self, station: float, lateral: float = 0.0):
        p = self.spline.eval(station)
        nx, ny = self.spline.left_normal(station)
        return (p.x + lateral * nx, p.y + lateral * ny)
