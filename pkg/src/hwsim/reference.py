"""Deliberately naive reference transcription of the eight control rules.

This module re-states every rule as a flat, line-by-line translation of
its pseudocode, sharing no code with :mod:`hwsim.controller`.  The CLI
``verify`` command and the equivalence tests drive both implementations
over random input tuples and require agreement to 1e-12, so an editing
mistake on either side is caught instead of silently shipped.

Keep this file boring on purpose.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ControllerParams, VehicleState
from .sensors import OpponentReading
from . import controller as prod


def ref_agent_state(readings, self_state, params):
    """Classification: most severe class over all readings, nearest focus."""
    best_value = 0
    best_focus = None
    hazard = False
    blocked_left = False
    blocked_right = False
    for r in readings:
        value = 0
        if r.d_exact < params.detect_range and r.d_exact > -params.detect_range:
            if r.d_exact > params.near_threshold:
                value = 1
                gap = self_state.speed * self_state.speed - r.speed * r.speed
                if gap < 0.0:
                    gap = 0.0
                needed = gap / (2.0 * params.brake_decel) + params.reaction_margin
                if r.same_lane and needed > r.d_exact:
                    value = 2
            elif r.d_exact < params.near_threshold and r.d_exact > -params.near_threshold:
                value = 3
        if r.d_exact > 0.0 and r.d_exact < params.detect_range:
            overlap = r.same_lane or abs(r.to_middle - self_state.lateral) < params.hazard_lateral_clearance
            if overlap:
                if r.d_exact > params.near_threshold:
                    gap = self_state.speed * self_state.speed - r.speed * r.speed
                    if gap < 0.0:
                        gap = 0.0
                    needed = gap / (2.0 * params.brake_decel) + params.reaction_margin
                    if needed > r.d_exact:
                        hazard = True
                else:
                    if self_state.speed > r.speed:
                        hazard = True
        if value > best_value:
            best_value = value
            best_focus = r
        elif value == best_value and value != 0:
            if abs(r.d_exact) < abs(best_focus.d_exact):
                best_focus = r
        if params.merge_guard_gap > 0.0:
            if r.d_exact >= 0.0:
                closing = self_state.speed - r.speed
            else:
                closing = r.speed - self_state.speed
            window = params.merge_guard_gap
            if closing > 0.0:
                window = window + closing * params.merge_guard_time
            if abs(r.d_exact) < window:
                rel = r.to_middle - self_state.lateral
                if rel > 0.5 and rel < 6.5:
                    blocked_left = True
                if rel < -0.5 and rel > -6.5:
                    blocked_right = True
    side = 0
    if best_focus is not None:
        rel = best_focus.to_middle - self_state.lateral
        if rel > 0.01:
            side = 1
        elif rel < -0.01:
            side = -1
    return best_value, best_focus, hazard, blocked_left, blocked_right, side


def ref_get_offset(offset, agent_value, focus, blocked_left, blocked_right,
                   focus_side, d1, d2, d3, params):
    """Offset update for one tick; returns the new clamped offset."""
    step = params.offset_step

    def slowly_to_zero(x):
        if x > step:
            return x - step
        if x < -step:
            return x + step
        return 0.0

    if agent_value == 1:
        if focus.to_middle > params.lateral_lane_threshold:
            if not blocked_right:
                offset = offset - step
        elif focus.to_middle < -params.lateral_lane_threshold:
            if not blocked_left:
                offset = offset + step
        else:
            if d2 < params.occupancy_gap:
                if d1 > params.occupancy_gap:
                    if not blocked_left:
                        offset = offset + step
                elif d1 < params.occupancy_gap and d3 > params.occupancy_gap:
                    if not blocked_right:
                        offset = offset - step
                else:
                    offset = slowly_to_zero(offset)
            else:
                offset = slowly_to_zero(offset)
    elif agent_value == 3:
        if focus_side == 1 and not blocked_right:
            offset = offset - step
        elif focus_side == -1 and not blocked_left:
            offset = offset + step
    else:
        offset = slowly_to_zero(offset)
    if offset > params.lane_width:
        offset = params.lane_width
    if offset < -params.lane_width:
        offset = -params.lane_width
    return offset


def ref_steer(angle, to_middle, offset, params):
    """Steering rule with the doubled centering correction."""
    angle = angle - (to_middle - offset) / params.road_width
    if to_middle - offset > params.lane_width:
        angle = angle - ((to_middle - offset) - params.lane_width) / params.road_width
    elif to_middle - offset < -params.lane_width:
        angle = angle - ((to_middle - offset) + params.lane_width) / params.road_width
    else:
        angle = angle - (to_middle - offset) / params.road_width
    value = angle / params.steer_lock
    if value > 1.0:
        value = 1.0
    if value < -1.0:
        value = -1.0
    return value


def ref_filter_steer(steer_value, agent_value, focus, self_yaw, params):
    """Lateral-proximity steering filter."""
    if agent_value == 3 and focus is not None:
        if abs(focus.d_exact) < params.near_threshold:
            diff_yaw = focus.yaw - self_yaw
            while diff_yaw > math.pi:
                diff_yaw -= 2.0 * math.pi
            while diff_yaw <= -math.pi:
                diff_yaw += 2.0 * math.pi
            psteer = diff_yaw / params.steer_lock
            steer_value = params.filter_mix_own * steer_value + params.filter_mix_agent * psteer
            if steer_value > 1.0:
                steer_value = 1.0
            if steer_value < -1.0:
                steer_value = -1.0
    return steer_value


def ref_allowed_speed(curvature, params, v_cap):
    """Curvature-limited speed."""
    k = curvature
    if k < 0.0:
        k = -k
    if k < 1e-4:
        k = 1e-4
    value = math.sqrt(params.mu * 9.81 / k)
    cap = params.v_max_host if v_cap is None else v_cap
    if value > cap:
        value = cap
    return value


def ref_accel(current_speed, allowed, driven_wheel_speed, params):
    """Throttle rule followed by the traction-control cut."""
    if current_speed > allowed:
        if driven_wheel_speed > 0.0:
            a = allowed / driven_wheel_speed
        else:
            a = 1.0
        if a > 1.0:
            a = 1.0
        if a < 0.0:
            a = 0.0
    else:
        a = 1.0
    slip = driven_wheel_speed - current_speed
    if slip > params.tcs_slip:
        cut = (slip - params.tcs_slip) / params.tcs_range
        if cut > a:
            cut = a
        a = a - cut
    return a


def ref_brake(current_speed, allowed, brake_hazard, wheel_avg_speed, params):
    """Brake rule followed by the anti-lock release."""
    if current_speed > allowed:
        b = current_speed - allowed
        if b > 1.0:
            b = 1.0
    else:
        b = 0.0
    if brake_hazard:
        b = 1.0
    if current_speed > params.abs_speed:
        slip = current_speed - wheel_avg_speed
        if slip > params.abs_slip:
            release = (slip - params.abs_slip) / params.abs_range
            if release > b:
                release = b
            b = b - release
    return b


# ---------------------------------------------------------------------------
# equivalence driver

CHECKS = (
    "steer",
    "offset",
    "steer_filter",
    "speed_limit",
    "traction",
    "brake",
    "antilock",
    "classify",
)


def _random_reading(rng) -> OpponentReading:
    return OpponentReading(
        d_exact=float(rng.uniform(-70.0, 70.0)),
        lane_index=int(rng.integers(1, 4)),
        to_middle=float(rng.uniform(-7.0, 7.0)),
        yaw=float(rng.uniform(-math.pi, math.pi)),
        speed=float(rng.uniform(0.0, 30.0)),
        same_lane=bool(rng.integers(0, 2)),
    )


def _random_self(rng) -> VehicleState:
    return VehicleState(
        s=float(rng.uniform(0.0, 4000.0)),
        lateral=float(rng.uniform(-6.5, 6.5)),
        yaw_rel=float(rng.uniform(-0.5, 0.5)),
        speed=float(rng.uniform(0.0, 30.0)),
        driven_wheel_speed=float(rng.uniform(0.0, 40.0)),
        wheel_avg_speed=float(rng.uniform(0.0, 30.0)),
    )


def run_equivalence(
    samples: int = 10_000,
    seed: int = 20_240_101,
    params: ControllerParams | None = None,
    perturb: str | None = None,
) -> dict[str, float]:
    """Max absolute deviation between production and reference, per check.

    ``perturb`` names a check whose production side is fed a skewed
    steer lock; the fault-injection test uses it to prove the harness
    actually discriminates.
    """
    params = params or ControllerParams()
    skewed = ControllerParams(
        steer_lock=params.steer_lock * 1.01,
        offset_step=params.offset_step,
        merge_guard_gap=params.merge_guard_gap,
    )
    rng = np.random.default_rng(seed)
    dev = {name: 0.0 for name in CHECKS}

    for _ in range(samples):
        p_steer = skewed if perturb == "steer" else params
        angle = float(rng.uniform(-0.8, 0.8))
        to_middle = float(rng.uniform(-8.0, 8.0))
        offset = float(rng.uniform(-4.0, 4.0))
        got = prod.steer(angle, to_middle, offset, p_steer)
        want = ref_steer(angle, to_middle, offset, params)
        dev["steer"] = max(dev["steer"], abs(got - want))

        self_state = _random_self(rng)
        readings = [_random_reading(rng) for _ in range(int(rng.integers(0, 5)))]
        got_state = prod.agent_state(readings, self_state, params)
        want_state = ref_agent_state(readings, self_state, params)
        mismatch = 0.0
        if got_state.value != want_state[0]:
            mismatch = 1.0
        if got_state.focus is not want_state[1]:
            mismatch = 1.0
        if got_state.brake_hazard != want_state[2]:
            mismatch = 1.0
        if (got_state.blocked_left, got_state.blocked_right, got_state.focus_side) != want_state[3:]:
            mismatch = 1.0
        dev["classify"] = max(dev["classify"], mismatch)

        d1, d2, d3 = (float(rng.uniform(0.0, 60.0)) for _ in range(3))
        cstate = prod.ControllerState(params, offset=offset)
        got = prod.get_offset(cstate, got_state, d1, d2, d3)
        want = ref_get_offset(
            offset, want_state[0], want_state[1], want_state[3], want_state[4],
            want_state[5], d1, d2, d3, params,
        )
        dev["offset"] = max(dev["offset"], abs(got - want))

        steer_in = float(rng.uniform(-1.0, 1.0))
        self_yaw = float(rng.uniform(-math.pi, math.pi))
        got = prod.filter_steer(steer_in, got_state, self_yaw, params)
        want = ref_filter_steer(steer_in, want_state[0], want_state[1], self_yaw, params)
        dev["steer_filter"] = max(dev["steer_filter"], abs(got - want))

        kappa = float(rng.uniform(-0.1, 0.1))
        v_cap = float(rng.uniform(5.0, 30.0))
        got = prod.allowed_speed(angle, -angle, kappa, params, v_cap)
        want = ref_allowed_speed(kappa, params, v_cap)
        dev["speed_limit"] = max(dev["speed_limit"], abs(got - want))

        current = float(rng.uniform(0.0, 30.0))
        allowed = float(rng.uniform(0.0, 25.0))
        driven = float(rng.uniform(0.0, 40.0))
        wheel_avg = float(rng.uniform(0.0, 30.0))
        got = prod.accel(current, allowed, driven, params)
        want = ref_accel(current, allowed, driven, params)
        dev["traction"] = max(dev["traction"], abs(got - want))

        got = prod.brake(current, allowed, got_state, wheel_avg, params)
        want = ref_brake(current, allowed, want_state[2], wheel_avg, params)
        dev["brake"] = max(dev["brake"], abs(got - want))

        # antilock in isolation: force the hazard path so the release arm runs
        if readings:
            hazard_state = prod.AgentState(prod.STATE_BLOCKED, readings[0], True)
            got = prod.brake(current, allowed, hazard_state, wheel_avg, params)
            want = ref_brake(current, allowed, True, wheel_avg, params)
            dev["antilock"] = max(dev["antilock"], abs(got - want))

    return dev
