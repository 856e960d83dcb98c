"""Core domain types and track geometry.

Conventions used throughout the package:

* ``s`` is arc length along the track centerline in meters; on closed
  loops it wraps modulo the total length.
* ``lateral`` is the signed distance from the road centerline, positive
  to the LEFT of the travel direction ("to_middle" in the indicator set).
* ``yaw_rel`` is vehicle heading minus track tangent at ``s``.  The
  heading indicator consumed by the controller is ``-yaw_rel``.
* ``steer`` is positive to the left.
* Lane 1 is the leftmost lane.  For a 3-lane road with 4 m lanes the
  lane centers sit at +4, 0, -4 meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

TAU = 2.0 * math.pi


def wrap_to_pi(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = angle % TAU
    if a > math.pi:
        a -= TAU
    return a


def wrap_signed(delta: float, length: float) -> float:
    """Shortest signed along-track distance on a loop of given length.

    Result lies in (-length/2, length/2].
    """
    m = delta % length
    if m > 0.5 * length:
        m -= length
    return m


@dataclass(frozen=True)
class Segment:
    """One piece of track centerline, either a straight or a circular arc.

    ``length`` applies to straights.  Arcs are given by ``radius`` and a
    signed ``arc_angle`` in radians (positive turns left).
    """

    kind: str  # "straight" | "arc"
    length: float = 0.0
    radius: float = 0.0
    arc_angle: float = 0.0

    def __post_init__(self):
        if self.kind == "straight":
            if not self.length > 0.0:
                raise ValueError("straight segment needs length > 0")
        elif self.kind == "arc":
            if not self.radius > 0.0:
                raise ValueError("arc segment needs radius > 0")
            if self.arc_angle == 0.0:
                raise ValueError("arc segment needs a nonzero arc angle")
        else:
            raise ValueError(f"unknown segment kind {self.kind!r}")

    @property
    def arc_length(self) -> float:
        if self.kind == "straight":
            return self.length
        return self.radius * abs(self.arc_angle)

    @property
    def curvature(self) -> float:
        if self.kind == "straight":
            return 0.0
        return math.copysign(1.0 / self.radius, self.arc_angle)


@dataclass(frozen=True)
class _SegmentFrame:
    """Precomputed start pose of a segment: position, heading, curvature."""

    s0: float
    length: float
    x0: float
    y0: float
    h0: float
    kappa: float


@dataclass(frozen=True)
class TrackSpec:
    """Track layout: an ordered chain of segments plus lane geometry.

    ``closed`` marks a loop; the chain must then return to its start pose.
    """

    segments: tuple[Segment, ...]
    lane_count: int = 3
    lane_width: float = 4.0
    road_width: float = 13.0
    closed: bool = True

    def __post_init__(self):
        if not self.segments:
            raise ValueError("track needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.lane_count < 1:
            raise ValueError("lane_count must be positive")
        if self.lane_width <= 0.0 or self.road_width <= 0.0:
            raise ValueError("lane_width and road_width must be positive")
        if self.road_width < self.lane_count * self.lane_width - 1e-9:
            raise ValueError("road_width must cover lane_count * lane_width")
        if self.closed:
            x, y, h = self._end_pose()
            if math.hypot(x, y) > 1e-6:
                raise ValueError(
                    f"closed track does not return to start (gap {math.hypot(x, y):.3g} m)"
                )
            if abs(wrap_to_pi(h)) > 1e-9:
                raise ValueError("closed track heading does not close to a multiple of 2*pi")

    def _end_pose(self) -> tuple[float, float, float]:
        x = y = h = 0.0
        for seg in self.segments:
            if seg.kind == "straight":
                x += seg.length * math.cos(h)
                y += seg.length * math.sin(h)
            else:
                k = seg.curvature
                h1 = h + seg.arc_angle
                x += (math.sin(h1) - math.sin(h)) / k
                y += (math.cos(h) - math.cos(h1)) / k
                h = h1
        return x, y, h

    @cached_property
    def _frames(self) -> tuple[_SegmentFrame, ...]:
        frames = []
        s = x = y = h = 0.0
        for seg in self.segments:
            frames.append(_SegmentFrame(s, seg.arc_length, x, y, h, seg.curvature))
            if seg.kind == "straight":
                x += seg.length * math.cos(h)
                y += seg.length * math.sin(h)
            else:
                k = seg.curvature
                h1 = h + seg.arc_angle
                x += (math.sin(h1) - math.sin(h)) / k
                y += (math.cos(h) - math.cos(h1)) / k
                h = h1
            s += seg.arc_length
        return tuple(frames)

    @cached_property
    def total_length(self) -> float:
        return sum(seg.arc_length for seg in self.segments)

    @cached_property
    def lane_centers(self) -> tuple[float, ...]:
        half = 0.5 * (self.lane_count + 1)
        return tuple((half - i) * self.lane_width for i in range(1, self.lane_count + 1))

    def wrap_s(self, s: float) -> float:
        if self.closed:
            return s % self.total_length
        if s < -1e-9 or s > self.total_length + 1e-9:
            raise ValueError(f"s={s!r} outside open course [0, {self.total_length}]")
        return min(max(s, 0.0), self.total_length)

    def _frame_at(self, s: float) -> tuple[int, float]:
        frames = self._frames
        lo, hi = 0, len(frames)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if frames[mid].s0 <= s:
                lo = mid
            else:
                hi = mid
        return lo, s - frames[lo].s0


def track_pose(track: TrackSpec, s: float) -> tuple[float, float, tuple[float, float]]:
    """Centerline pose at arc length ``s``.

    Returns ``(tangent_heading, curvature, (x, y))``.  Heading is
    continuous across segment joints; curvature is 0 on straights and
    ``+-1/radius`` on arcs.  ``s`` wraps on closed loops and raises out of
    bounds on open courses.
    """
    s = track.wrap_s(s)
    idx, u = track._frame_at(s)
    frame = track._frames[idx]
    if frame.kappa == 0.0:
        x = frame.x0 + u * math.cos(frame.h0)
        y = frame.y0 + u * math.sin(frame.h0)
        return frame.h0, 0.0, (x, y)
    k = frame.kappa
    h = frame.h0 + k * u
    cx = frame.x0 - math.sin(frame.h0) / k
    cy = frame.y0 + math.cos(frame.h0) / k
    x = cx + math.sin(h) / k
    y = cy - math.cos(h) / k
    return h, k, (x, y)


def world_from_track(track: TrackSpec, s: float, lateral: float) -> tuple[float, float]:
    """World position of a point at (s, lateral); lateral positive-left."""
    h, _, (x, y) = track_pose(track, s)
    return x - lateral * math.sin(h), y + lateral * math.cos(h)


def _project_frame(frame: _SegmentFrame, x: float, y: float) -> tuple[float, float, float]:
    """Project a point onto one segment; returns (dist2, s, lateral)."""
    if frame.kappa == 0.0:
        dx = x - frame.x0
        dy = y - frame.y0
        ch = math.cos(frame.h0)
        sh = math.sin(frame.h0)
        t = dx * ch + dy * sh
        t_in = min(max(t, 0.0), frame.length)
        lat = -dx * sh + dy * ch
        px = frame.x0 + t_in * ch
        py = frame.y0 + t_in * sh
        return (x - px) ** 2 + (y - py) ** 2, frame.s0 + t_in, lat
    k = frame.kappa
    r = 1.0 / abs(k)
    cx = frame.x0 - math.sin(frame.h0) / k
    cy = frame.y0 + math.cos(frame.h0) / k
    vx = x - cx
    vy = y - cy
    dist_c = math.hypot(vx, vy)
    if dist_c < 1e-12:
        return math.inf, frame.s0, 0.0
    lat = (r - dist_c) if k > 0.0 else (dist_c - r)
    phi = math.atan2(vy, vx)
    phi0 = frame.h0 - math.copysign(0.5 * math.pi, k)
    span = frame.length / r  # unsigned arc angle
    alpha = (phi - phi0) % TAU if k > 0.0 else (phi0 - phi) % TAU
    # fold near-complete wrap back to the segment start
    if alpha > span:
        alpha = span if alpha - span < (TAU - alpha) else 0.0
    u = alpha * r
    h = frame.h0 + k * u
    px = cx + math.sin(h) / k
    py = cy - math.cos(h) / k
    return (x - px) ** 2 + (y - py) ** 2, frame.s0 + u, lat


# a local (hint-neighborhood) projection is trusted only this close to the
# centerline; beyond it the global scan decides
_LOCAL_PROJECTION_REACH2 = 30.0 * 30.0


def track_from_world(
    track: TrackSpec, x: float, y: float, s_hint: float | None = None
) -> tuple[float, float]:
    """Project a world point back to (s, lateral).

    With ``s_hint`` only the hinted segment and its neighbors are tried,
    which is exact for points near the centerline moving continuously.
    Otherwise (or when the local result is implausibly far) every segment
    is scanned and the closest projection wins, ties broken by wrap
    distance to the hint.
    """
    total = track.total_length
    frames = track._frames
    nseg = len(frames)
    if s_hint is not None:
        hint = track.wrap_s(s_hint)
        idx, _ = track._frame_at(hint)
        best = None
        for di in (0, -1, 1):
            j = idx + di
            if track.closed:
                j %= nseg
            elif not 0 <= j < nseg:
                continue
            d2, cand_s, cand_lat = _project_frame(frames[j], x, y)
            if track.closed and cand_s >= total:
                cand_s -= total
            if best is None or d2 < best[0]:
                best = (d2, cand_s, cand_lat)
        if best is not None and best[0] <= _LOCAL_PROJECTION_REACH2:
            return best[1], best[2]

    best = None  # (dist2, tiebreak, s, lateral)
    for frame in frames:
        d2, cand_s, cand_lat = _project_frame(frame, x, y)
        if track.closed and cand_s >= total:
            cand_s -= total
        if s_hint is not None:
            if track.closed:
                tb = abs(wrap_signed(cand_s - s_hint, total))
            else:
                tb = abs(cand_s - s_hint)
        else:
            tb = 0.0
        entry = (d2, tb, cand_s, cand_lat)
        if best is None or entry[0] < best[0] - 1e-9 or (
            entry[0] < best[0] + 1e-9 and entry[1] < best[1]
        ):
            best = entry
    assert best is not None
    return best[2], best[3]


def lane_membership(track: TrackSpec, lateral: float) -> tuple[int, ...]:
    """1-based lanes whose band (center +- lane_width/2) contains ``lateral``.

    Bands are closed intervals, so a position exactly on a boundary
    belongs to both adjacent lanes.
    """
    half = 0.5 * track.lane_width
    return tuple(
        i + 1 for i, c in enumerate(track.lane_centers) if abs(lateral - c) <= half
    )


def primary_lane(track: TrackSpec, lateral: float) -> int:
    """Nearest lane center (1-based); ties go to the leftmost lane."""
    centers = track.lane_centers
    best = 1
    best_d = abs(lateral - centers[0])
    for i in range(1, len(centers)):
        d = abs(lateral - centers[i])
        if d < best_d - 1e-12:
            best = i + 1
            best_d = d
    return best


@dataclass(frozen=True, slots=True)
class VehicleState:
    """Kinematic state of one vehicle at a tick.

    ``driven_wheel_speed`` and ``wheel_avg_speed`` are the wheel-sensor
    readings the slip controllers consume; they are produced by the
    dynamics step, not integrated states.
    """

    s: float
    lateral: float
    yaw_rel: float
    speed: float
    driven_wheel_speed: float
    wheel_avg_speed: float
    damage: int = 0
    role: str = "agent"  # "host" | "agent"

    def __post_init__(self):
        if self.speed < 0.0 or self.driven_wheel_speed < 0.0 or self.wheel_avg_speed < 0.0:
            raise ValueError("speeds must be nonnegative")
        if self.damage < 0:
            raise ValueError("damage must be nonnegative")
        if self.role not in ("host", "agent"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True, slots=True)
class ControlCommand:
    """Effector outputs: steer in [-1, 1] (positive left), accel and brake
    in [0, 1].  Accel and brake may both be nonzero; the dynamics applies
    both forces."""

    steer: float
    accel: float
    brake: float

    def __post_init__(self):
        if not -1.0 <= self.steer <= 1.0:
            raise ValueError(f"steer {self.steer} outside [-1, 1]")
        if not 0.0 <= self.accel <= 1.0:
            raise ValueError(f"accel {self.accel} outside [0, 1]")
        if not 0.0 <= self.brake <= 1.0:
            raise ValueError(f"brake {self.brake} outside [0, 1]")


@dataclass(frozen=True)
class WorldState:
    """Full simulation truth at one tick: the track plus all vehicles.

    Vehicle ids are indices into ``vehicles``.  The cached tables below
    are computed once per snapshot and shared by the sensor and collision
    paths.
    """

    track: TrackSpec
    vehicles: tuple[VehicleState, ...]

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))

    @cached_property
    def _centerline(self) -> tuple[tuple[float, float, float], ...]:
        return tuple(
            (p[0], p[2][0], p[2][1])
            for p in (track_pose(self.track, v.s) for v in self.vehicles)
        )

    @cached_property
    def headings(self) -> tuple[float, ...]:
        """Track tangent heading at each vehicle's s."""
        return tuple(row[0] for row in self._centerline)

    @cached_property
    def vehicle_poses(self) -> tuple[tuple[float, float, float], ...]:
        """World (x, y, absolute heading) per vehicle."""
        out = []
        for v, (h, cx, cy) in zip(self.vehicles, self._centerline):
            out.append((
                cx - v.lateral * math.sin(h),
                cy + v.lateral * math.cos(h),
                h + v.yaw_rel,
            ))
        return tuple(out)

    @cached_property
    def lane_sets(self) -> tuple[tuple[int, ...], ...]:
        """Lane membership per vehicle."""
        return tuple(lane_membership(self.track, v.lateral) for v in self.vehicles)


@dataclass(frozen=True)
class ControllerParams:
    """Controller constants.  Defaults are the published literals where
    the source gives one; the rest are engineering defaults recorded in
    the project notes."""

    steer_lock: float = 0.366  # rad, maximum wheel angle
    lane_width: float = 4.0
    road_width: float = 13.0
    detect_range: float = 60.0
    near_threshold: float = 4.5
    lateral_lane_threshold: float = 1.5
    occupancy_gap: float = 10.0
    tcs_slip: float = 2.0
    tcs_range: float = 10.0
    abs_speed: float = 3.0
    abs_slip: float = 2.0
    abs_range: float = 5.0
    offset_step: float = 0.05  # m per control tick
    filter_mix_own: float = 0.5
    filter_mix_agent: float = 0.5
    brake_decel: float = 6.0  # m/s^2 assumed when planning stopping distance
    reaction_margin: float = 5.0  # m added to the stopping distance
    mu: float = 1.0
    v_max_host: float = 20.56
    v_max_agent: float = 20.0
    curvature_window: float = 10.0  # m of travel used to estimate road curvature
    merge_guard_gap: float = 6.0  # m; 0 disables the lateral merge guard
    merge_guard_time: float = 2.0  # s; extends the guard window by closing speed
    hazard_lateral_clearance: float = 2.2  # m; paths overlap when centers are this close

    def __post_init__(self):
        for name in (
            "steer_lock", "lane_width", "road_width", "detect_range",
            "near_threshold", "lateral_lane_threshold", "occupancy_gap",
            "tcs_slip", "tcs_range", "abs_speed", "abs_slip", "abs_range",
            "brake_decel", "v_max_host", "v_max_agent", "curvature_window",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.offset_step <= self.lane_width:
            raise ValueError("offset_step must lie in (0, lane_width]")
        if abs(self.filter_mix_own + self.filter_mix_agent - 1.0) > 1e-12:
            raise ValueError("filter_mix_own + filter_mix_agent must equal 1")
        if self.reaction_margin < 0.0 or self.merge_guard_gap < 0.0 or self.merge_guard_time < 0.0:
            raise ValueError("margins must be nonnegative")
        if self.hazard_lateral_clearance < 0.0:
            raise ValueError("hazard_lateral_clearance must be nonnegative")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
