"""The overtaking controller: traffic-state classification, lane-offset
planning, steering with a lateral-proximity filter, curvature-limited
speed, traction control, and anti-lock braking.

All operations are pure except :func:`get_offset` and
:func:`control_step`, which mutate a per-vehicle :class:`ControllerState`.
Controllers for different vehicles may run in parallel within a tick
because they read a frozen world snapshot.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .core import ControlCommand, ControllerParams, VehicleState, wrap_signed, wrap_to_pi
from .sensors import Indicators, OpponentReading

GRAVITY = 9.81
CURVATURE_FLOOR = 1e-4

STATE_CLEAR = 0
STATE_LEADER = 1
STATE_BLOCKED = 2
STATE_NEAR = 3


@dataclass(frozen=True)
class AgentState:
    """Four-way classification of nearby traffic.

    ``value``: 0 clear, 1 leader ahead, 2 leader ahead without stopping
    room (forces braking), 3 vehicle laterally close.  ``focus`` is the
    reading that determined the state (absent for 0).  ``brake_hazard``
    is true when any reading ahead on an overlapping path (same lane, or
    laterally within the hazard clearance) is inside the needed stopping
    distance, or diagonally ahead inside the near zone while we close on
    it.  It is kept independent of which class won so a lateral neighbor
    cannot mask a rear-end hazard.  ``blocked_left``/``blocked_right``
    report vehicles on that side within the merge guard window (static
    gap plus closing time), and ``focus_side`` is +1/-1 when the focus
    sits left/right of us.
    """

    value: int
    focus: OpponentReading | None = None
    brake_hazard: bool = False
    blocked_left: bool = False
    blocked_right: bool = False
    focus_side: int = 0

    def __post_init__(self):
        if self.value == STATE_CLEAR and self.focus is not None:
            raise ValueError("clear state cannot carry a focus reading")
        if self.value != STATE_CLEAR and self.focus is None:
            raise ValueError("non-clear state needs a focus reading")


@dataclass
class ControllerState:
    """Per-vehicle mutable controller memory.

    ``offset`` is the lateral target, persisted across ticks and always
    clamped to [-lane_width, +lane_width].  ``v_cap`` is the vehicle's
    own speed ceiling (None means the host ceiling).  The remaining
    fields hold the rolling road-tangent window used to estimate
    curvature from the heading indicator plus the vehicle's own yaw.
    """

    params: ControllerParams
    offset: float = 0.0
    v_cap: float | None = None
    track_length: float = math.inf
    disable_agent_state: bool = False
    last_agent_state: int = STATE_CLEAR
    _odo: float = 0.0
    _last_s: float | None = None
    _last_tangent: float | None = None
    _tangent_acc: float = 0.0
    _window: deque = field(default_factory=deque)

    def estimate_curvature(self, s: float, angle: float, self_yaw: float) -> float:
        """Road curvature from tangent change over the travel window.

        The tangent estimate is ``angle + self_yaw``; consecutive samples
        are unwrapped so the accumulated value is continuous.  Returns 0
        until a full window of travel is available.
        """
        raw = angle + self_yaw
        if self._last_s is not None:
            if math.isfinite(self.track_length):
                ds = wrap_signed(s - self._last_s, self.track_length)
            else:
                ds = s - self._last_s
            self._odo += ds
            self._tangent_acc += wrap_to_pi(raw - self._last_tangent)
        self._last_s = s
        self._last_tangent = raw
        self._window.append((self._odo, self._tangent_acc))
        window = self.params.curvature_window
        while len(self._window) >= 2 and self._window[1][0] <= self._odo - window:
            self._window.popleft()
        odo0, tan0 = self._window[0]
        span = self._odo - odo0
        if span < window:
            return 0.0
        return (self._tangent_acc - tan0) / span


def needed_brake_distance(v_self: float, v_agent: float, params: ControllerParams) -> float:
    """Relative-speed stopping distance plus a reaction margin."""
    closing = v_self * v_self - v_agent * v_agent
    if closing < 0.0:
        closing = 0.0
    return closing / (2.0 * params.brake_decel) + params.reaction_margin


def _classify_reading(
    reading: OpponentReading, self_state: VehicleState, params: ControllerParams
) -> int:
    d = reading.d_exact
    if not (-params.detect_range < d < params.detect_range):
        return STATE_CLEAR
    if d > params.near_threshold:
        if reading.same_lane and needed_brake_distance(
            self_state.speed, reading.speed, params
        ) > d:
            return STATE_BLOCKED
        return STATE_LEADER
    if -params.near_threshold < d < params.near_threshold:
        return STATE_NEAR
    return STATE_CLEAR


def agent_state(
    readings: list[OpponentReading], self_state: VehicleState, params: ControllerParams
) -> AgentState:
    """Classify the traffic situation from the short-range readings.

    Each reading is classified on its own; the most severe class wins
    (near > blocked > leader > clear) and the nearest reading within the
    winning class becomes the focus.  The merge guard marks a side
    blocked when a vehicle there is within the static gap or within
    ``merge_guard_time`` at the current closing speed, so a side move is
    never planned into a car about to draw level.
    """
    winner = STATE_CLEAR
    focus = None
    focus_dist = math.inf
    hazard = False
    blocked_left = False
    blocked_right = False
    guard = params.merge_guard_gap
    for r in readings:
        c = _classify_reading(r, self_state, params)
        if not hazard and 0.0 < r.d_exact < params.detect_range:
            lat_gap = abs(r.to_middle - self_state.lateral)
            if r.same_lane or lat_gap < params.hazard_lateral_clearance:
                if r.d_exact > params.near_threshold:
                    if needed_brake_distance(self_state.speed, r.speed, params) > r.d_exact:
                        hazard = True
                elif self_state.speed > r.speed:
                    hazard = True
        if c > winner:
            winner = c
            focus = r
            focus_dist = abs(r.d_exact)
        elif c == winner and c != STATE_CLEAR and abs(r.d_exact) < focus_dist:
            focus = r
            focus_dist = abs(r.d_exact)
        if guard > 0.0:
            d = abs(r.d_exact)
            closing = (
                self_state.speed - r.speed if r.d_exact >= 0.0 else r.speed - self_state.speed
            )
            window = guard
            if closing > 0.0:
                window += closing * params.merge_guard_time
            if d < window:
                side = r.to_middle - self_state.lateral
                if 0.5 < side < 6.5:
                    blocked_left = True
                elif -6.5 < side < -0.5:
                    blocked_right = True
    focus_side = 0
    if focus is not None:
        diff = focus.to_middle - self_state.lateral
        if diff > 0.01:
            focus_side = 1
        elif diff < -0.01:
            focus_side = -1
    return AgentState(winner, focus, hazard, blocked_left, blocked_right, focus_side)


def _decay_toward_zero(offset: float, step: float) -> float:
    if offset > step:
        return offset - step
    if offset < -step:
        return offset + step
    return 0.0


def get_offset(state: ControllerState, agent: AgentState, d1: float, d2: float, d3: float) -> float:
    """Advance the persisted lateral offset one control tick.

    With a plain leader ahead the offset ramps toward a free lane chosen
    from the focus position and the lane gaps; ramping toward a side with
    a vehicle alongside (merge guard) holds instead.  A laterally near
    vehicle freezes the offset so a pass in progress is not steered back
    into the car being passed.  All other states decay toward zero.
    The result is clamped to one lane width either side.
    """
    p = state.params
    step = p.offset_step
    off = state.offset
    if agent.value == STATE_LEADER:
        focus = agent.focus
        if focus.to_middle > p.lateral_lane_threshold:
            if not agent.blocked_right:
                off -= step
        elif focus.to_middle < -p.lateral_lane_threshold:
            if not agent.blocked_left:
                off += step
        else:
            if d2 < p.occupancy_gap:
                if d1 > p.occupancy_gap:
                    if not agent.blocked_left:
                        off += step
                elif d1 < p.occupancy_gap and d3 > p.occupancy_gap:
                    if not agent.blocked_right:
                        off -= step
                else:
                    off = _decay_toward_zero(off, step)
            else:
                off = _decay_toward_zero(off, step)
    elif agent.value == STATE_NEAR:
        # widen the gap to the car alongside; never steer toward it
        if agent.focus_side > 0 and not agent.blocked_right:
            off -= step
        elif agent.focus_side < 0 and not agent.blocked_left:
            off += step
    else:
        off = _decay_toward_zero(off, step)
    off = min(max(off, -p.lane_width), p.lane_width)
    state.offset = off
    return off


def steer(angle: float, to_middle: float, offset: float, params: ControllerParams) -> float:
    """Steering command from the heading indicator and lateral error.

    The lateral error relative to the offset target is corrected twice
    (base term plus a band-dependent term), which doubles the centering
    gain inside one lane width of the target and relaxes it beyond.
    Output is the angle divided by the steer lock, clamped to [-1, 1].
    """
    e = to_middle - offset
    a = angle - e / params.road_width
    if e > params.lane_width:
        a -= (e - params.lane_width) / params.road_width
    elif e < -params.lane_width:
        a -= (e + params.lane_width) / params.road_width
    else:
        a -= e / params.road_width
    return min(max(a / params.steer_lock, -1.0), 1.0)


def filter_steer(
    steer_in: float, agent: AgentState, self_yaw: float, params: ControllerParams
) -> float:
    """Blend the steering command toward a laterally near vehicle's
    heading so the two cars run parallel instead of converging."""
    if (
        agent.value == STATE_NEAR
        and agent.focus is not None
        and abs(agent.focus.d_exact) < params.near_threshold
    ):
        psteer = wrap_to_pi(agent.focus.yaw - self_yaw) / params.steer_lock
        out = params.filter_mix_own * steer_in + params.filter_mix_agent * psteer
        return min(max(out, -1.0), 1.0)
    return steer_in


def allowed_speed(
    angle: float,
    yaw_rel: float,
    curvature_est: float,
    params: ControllerParams,
    v_cap: float | None = None,
) -> float:
    """Curvature-limited cruise speed, capped at the vehicle ceiling."""
    cap = params.v_max_host if v_cap is None else v_cap
    kappa = abs(curvature_est)
    if kappa < CURVATURE_FLOOR:
        kappa = CURVATURE_FLOOR
    return min(cap, math.sqrt(params.mu * GRAVITY / kappa))


def accel(
    current_speed: float,
    allowed: float,
    driven_wheel_speed: float,
    params: ControllerParams,
) -> float:
    """Throttle: full below the allowed speed, engine-speed ratio above,
    then traction control cuts by the slip excess."""
    if current_speed > allowed:
        a = allowed / driven_wheel_speed if driven_wheel_speed > 0.0 else 1.0
        a = min(max(a, 0.0), 1.0)
    else:
        a = 1.0
    slip = driven_wheel_speed - current_speed
    if slip > params.tcs_slip:
        a -= min(a, (slip - params.tcs_slip) / params.tcs_range)
    return a


def brake(
    current_speed: float,
    allowed: float,
    agent: AgentState,
    wheel_avg_speed: float,
    params: ControllerParams,
) -> float:
    """Brake: proportional to the overspeed, forced full on a rear-end
    hazard, then anti-lock releases by the wheel slip excess."""
    if current_speed > allowed:
        b = min(1.0, current_speed - allowed)
    else:
        b = 0.0
    if agent.brake_hazard:
        b = 1.0
    if current_speed > params.abs_speed:
        slip = current_speed - wheel_avg_speed
        if slip > params.abs_slip:
            b -= min(b, (slip - params.abs_slip) / params.abs_range)
    return b


def control_step(
    indicators: Indicators,
    readings: list[OpponentReading],
    self_state: VehicleState,
    state: ControllerState,
    self_yaw: float | None = None,
) -> ControlCommand:
    """One full control tick: classify, plan the offset, steer, filter,
    limit speed, throttle, brake.

    ``self_yaw`` is the vehicle's absolute heading; when omitted the
    track tangent is assumed zero.  The classification outcome is kept
    on ``state.last_agent_state`` for logging.
    """
    if self_yaw is None:
        self_yaw = self_state.yaw_rel
    if state.disable_agent_state:
        agent = AgentState(STATE_CLEAR)
    else:
        agent = agent_state(readings, self_state, state.params)
    state.last_agent_state = agent.value
    offset = get_offset(state, agent, indicators.d1, indicators.d2, indicators.d3)
    raw = steer(indicators.angle, indicators.to_middle, offset, state.params)
    steered = filter_steer(raw, agent, self_yaw, state.params)
    kappa = state.estimate_curvature(self_state.s, indicators.angle, self_yaw)
    allowed = allowed_speed(
        indicators.angle, self_state.yaw_rel, kappa, state.params, state.v_cap
    )
    throttle = accel(self_state.speed, allowed, self_state.driven_wheel_speed, state.params)
    braking = brake(self_state.speed, allowed, agent, self_state.wheel_avg_speed, state.params)
    return ControlCommand(steered, throttle, braking)
