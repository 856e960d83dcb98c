"""Vehicle dynamics: kinematic bicycle stepping, rectangle collision
detection, and damage accrual.

The wheel-slip quantities are a phenomenological model whose only job is
to feed the traction and anti-lock controllers realistic inputs: the
driven wheels overspeed under throttle at low vehicle speed, and the
wheel average drops under braking.  There are no tire forces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import ControlCommand, TrackSpec, VehicleState, WorldState, track_from_world, track_pose


@dataclass(frozen=True)
class VehicleGeometry:
    length: float = 4.5
    width: float = 2.0
    wheelbase: float = 2.6

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0 or self.wheelbase <= 0.0:
            raise ValueError("geometry dimensions must be positive")
        if self.length <= self.wheelbase:
            raise ValueError("length must exceed wheelbase")


@dataclass(frozen=True)
class DynamicsParams:
    dt: float = 0.02
    max_engine_accel: float = 4.0
    max_brake_decel: float = 8.0
    drag_coeff: float = 0.002  # 1/m, quadratic drag
    wheel_slip_gain_accel: float = 12.0  # m/s of wheel overspeed at full throttle, standstill
    wheel_slip_gain_brake: float = 3.5  # m/s of wheel underspeed at full brake
    off_track_margin: float = 0.5
    damage_per_contact_tick: int = 1
    steer_lock: float = 0.366  # rad; must match the controller's actuator model
    slip_ref_speed: float = 20.0  # m/s at which throttle slip fades out

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        for name in (
            "max_engine_accel", "max_brake_decel", "drag_coeff",
            "wheel_slip_gain_accel", "wheel_slip_gain_brake",
            "off_track_margin",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.damage_per_contact_tick < 0:
            raise ValueError("damage_per_contact_tick must be nonnegative")
        if self.steer_lock <= 0.0 or self.slip_ref_speed <= 0.0:
            raise ValueError("steer_lock and slip_ref_speed must be positive")


@dataclass(frozen=True, slots=True)
class ContactEvent:
    """A collision between two vehicles, or one vehicle off the road.

    ``b`` is None for off-road events.
    """

    a: int
    b: int | None

    @property
    def off_road(self) -> bool:
        return self.b is None


def step_vehicle(
    state: VehicleState,
    cmd: ControlCommand,
    geom: VehicleGeometry,
    params: DynamicsParams,
    track: TrackSpec,
    world_pose: tuple[float, float, float] | None = None,
) -> VehicleState:
    """Advance one vehicle one fixed timestep.

    Position advances along the current heading at the current speed,
    then heading and speed integrate the command; the world position is
    re-projected to track coordinates.  Wheel-sensor outputs derive from
    the entry speed and the applied command.  ``world_pose`` may pass a
    precomputed (x, y, absolute heading) for the entry state.
    """
    if world_pose is None:
        heading, _, (cx, cy) = track_pose(track, state.s)
        x = cx - state.lateral * math.sin(heading)
        y = cy + state.lateral * math.cos(heading)
        psi = heading + state.yaw_rel
    else:
        x, y, psi = world_pose

    dt = params.dt
    x += state.speed * math.cos(psi) * dt
    y += state.speed * math.sin(psi) * dt

    delta = cmd.steer * params.steer_lock
    psi += state.speed * math.tan(delta) / geom.wheelbase * dt

    force = (
        cmd.accel * params.max_engine_accel
        - cmd.brake * params.max_brake_decel
        - params.drag_coeff * state.speed * state.speed
    )
    new_speed = state.speed + force * dt
    if new_speed < 0.0:
        new_speed = 0.0

    new_s, new_lateral = track_from_world(track, x, y, s_hint=state.s)
    new_heading, _, _ = track_pose(track, new_s)
    new_yaw_rel = psi - new_heading
    while new_yaw_rel > math.pi:
        new_yaw_rel -= 2.0 * math.pi
    while new_yaw_rel <= -math.pi:
        new_yaw_rel += 2.0 * math.pi

    low_speed = 1.0 - state.speed / params.slip_ref_speed
    if low_speed < 0.0:
        low_speed = 0.0
    driven = state.speed + params.wheel_slip_gain_accel * cmd.accel * low_speed
    wheel_avg = state.speed - params.wheel_slip_gain_brake * cmd.brake
    if wheel_avg < 0.0:
        wheel_avg = 0.0

    return VehicleState(
        s=new_s,
        lateral=new_lateral,
        yaw_rel=new_yaw_rel,
        speed=new_speed,
        driven_wheel_speed=driven,
        wheel_avg_speed=wheel_avg,
        damage=state.damage,
        role=state.role,
    )


def _corners(x, y, psi, length, width):
    hl = 0.5 * length
    hw = 0.5 * width
    c = math.cos(psi)
    s = math.sin(psi)
    return (
        (x + hl * c - hw * s, y + hl * s + hw * c),
        (x + hl * c + hw * s, y + hl * s - hw * c),
        (x - hl * c + hw * s, y - hl * s - hw * c),
        (x - hl * c - hw * s, y - hl * s + hw * c),
    )


def _rectangles_overlap(ca, cb) -> bool:
    """Separating-axis test for two convex quads given by corner lists."""
    for corners in (ca, cb):
        for i in range(4):
            x1, y1 = corners[i]
            x2, y2 = corners[(i + 1) % 4]
            ax = y1 - y2
            ay = x2 - x1
            amin = amax = ca[0][0] * ax + ca[0][1] * ay
            for px, py in ca[1:]:
                p = px * ax + py * ay
                if p < amin:
                    amin = p
                elif p > amax:
                    amax = p
            bmin = bmax = cb[0][0] * ax + cb[0][1] * ay
            for px, py in cb[1:]:
                p = px * ax + py * ay
                if p < bmin:
                    bmin = p
                elif p > bmax:
                    bmax = p
            if amax < bmin or bmax < amin:
                return False
    return True


def detect_collisions(
    world: WorldState, geoms: list[VehicleGeometry], params: DynamicsParams | None = None
) -> list[ContactEvent]:
    """All overlapping vehicle pairs plus off-road excursions this tick.

    Vehicles are oriented rectangles in world coordinates.  A vehicle is
    off road when its center is more than ``off_track_margin`` beyond the
    road edge.
    """
    params = params or DynamicsParams()
    track = world.track
    vehicles = world.vehicles
    n = len(vehicles)
    events = []

    limit = 0.5 * track.road_width + params.off_track_margin
    poses = world.vehicle_poses
    for i, v in enumerate(vehicles):
        if abs(v.lateral) > limit:
            events.append(ContactEvent(i, None))

    radii = [0.5 * math.hypot(g.length, g.width) for g in geoms]
    corners_cache: list[tuple | None] = [None] * n
    for i in range(n):
        xi, yi, _ = poses[i]
        for j in range(i + 1, n):
            xj, yj, _ = poses[j]
            reach = radii[i] + radii[j]
            dx = xj - xi
            dy = yj - yi
            if dx * dx + dy * dy > reach * reach:
                continue
            if corners_cache[i] is None:
                corners_cache[i] = _corners(xi, yi, poses[i][2], geoms[i].length, geoms[i].width)
            if corners_cache[j] is None:
                corners_cache[j] = _corners(xj, yj, poses[j][2], geoms[j].length, geoms[j].width)
            if _rectangles_overlap(corners_cache[i], corners_cache[j]):
                events.append(ContactEvent(i, j))
    return events


def apply_damage(
    world: WorldState, events: list[ContactEvent], params: DynamicsParams
) -> WorldState:
    """Increment damage counters for every vehicle involved in an event."""
    if not events:
        return world
    rate = params.damage_per_contact_tick
    bump = [0] * len(world.vehicles)
    for ev in events:
        bump[ev.a] += rate
        if ev.b is not None:
            bump[ev.b] += rate
    vehicles = tuple(
        replace(v, damage=v.damage + b) if b else v
        for v, b in zip(world.vehicles, bump)
    )
    return WorldState(world.track, vehicles)
