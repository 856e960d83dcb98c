"""Affordance indicators, short-range opponent readings, and the
perception noise model.

Ground-truth extraction is pure over a :class:`~hwsim.core.WorldState`.
:func:`perceive` corrupts the host's indicator vector with calibrated
noise and a zero-order hold that models a perception stage running
slower than the physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import WorldState, primary_lane

DETECT_RANGE = 60.0


@dataclass(frozen=True, slots=True)
class Indicators:
    """The five affordance values one controller consumes.

    ``d1``..``d3`` are along-track gaps to the nearest preceding vehicle
    in lanes 1..3, capped at 60 m; exactly 60.0 means the lane is clear
    within range.
    """

    angle: float
    to_middle: float
    d1: float
    d2: float
    d3: float

    def d(self, lane: int) -> float:
        return (self.d1, self.d2, self.d3)[lane - 1]


@dataclass(frozen=True, slots=True)
class OpponentReading:
    """One neighboring vehicle as seen by the short-range sensor.

    ``d_exact`` is the signed centerline-to-centerline along-track gap,
    positive ahead of the observer.  ``yaw`` is the absolute heading.
    """

    d_exact: float
    lane_index: int
    to_middle: float
    yaw: float
    speed: float
    same_lane: bool


@dataclass(frozen=True)
class NoiseModel:
    """Per-channel mean absolute errors plus sampling cadence.

    ``perception_period`` is the number of physics ticks between fresh
    perception samples; held values are returned in between.
    """

    mae_angle: float = 0.0
    mae_to_middle: float = 0.0
    mae_d1: float = 0.0
    mae_d2: float = 0.0
    mae_d3: float = 0.0
    distribution: str = "laplace"  # "laplace" | "gaussian"
    perception_period: int = 2
    rng_seed: int | None = None

    def __post_init__(self):
        for name in ("mae_angle", "mae_to_middle", "mae_d1", "mae_d2", "mae_d3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.distribution not in ("laplace", "gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.perception_period < 1:
            raise ValueError("perception_period must be >= 1")

    @property
    def maes(self) -> tuple[float, float, float, float, float]:
        return (self.mae_angle, self.mae_to_middle, self.mae_d1, self.mae_d2, self.mae_d3)

    def scaled(self, multiplier: float) -> "NoiseModel":
        return replace(
            self,
            mae_angle=self.mae_angle * multiplier,
            mae_to_middle=self.mae_to_middle * multiplier,
            mae_d1=self.mae_d1 * multiplier,
            mae_d2=self.mae_d2 * multiplier,
            mae_d3=self.mae_d3 * multiplier,
        )


# Measured static per-channel MAEs of the three perception networks, plus
# the dynamic (closed-loop) error column of the first one.
NOISE_PRESETS: dict[str, NoiseModel] = {
    "alexnet+": NoiseModel(0.034, 0.539, 6.864, 7.048, 8.388),
    "googlenet": NoiseModel(0.041, 0.389, 5.190, 3.227, 5.905),
    "googlenet+": NoiseModel(0.029, 0.347, 6.055, 3.155, 5.450),
    "dynamic": NoiseModel(0.043, 0.397, 8.315, 9.233, 10.198),
}


def ground_truth_indicators(
    world: WorldState,
    vehicle_id: int,
    car_length: float = 0.0,
    range_cap: float = DETECT_RANGE,
) -> Indicators:
    """Exact indicator vector for one vehicle.

    Lane gaps are centerline-to-centerline minus ``car_length``, floored
    at 0 and capped at ``range_cap``.  A vehicle whose lateral position
    touches two lane bands counts in both lanes.
    """
    track = world.track
    vehicles = world.vehicles
    if not 0 <= vehicle_id < len(vehicles):
        raise KeyError(f"unknown vehicle id {vehicle_id}")
    me = vehicles[vehicle_id]
    my_s = me.s
    total = track.total_length
    closed = track.closed
    n_lanes = track.lane_count
    lane_sets = world.lane_sets
    gaps = [range_cap] * n_lanes
    for j, other in enumerate(vehicles):
        if j == vehicle_id:
            continue
        if closed:
            ahead = (other.s - my_s) % total
        else:
            ahead = other.s - my_s
            if ahead <= 0.0:
                continue
        gap = ahead - car_length
        if gap < 0.0:
            gap = 0.0
        if gap >= range_cap:
            continue
        for lane in lane_sets[j]:
            if lane <= n_lanes and gap < gaps[lane - 1]:
                gaps[lane - 1] = gap
    d = gaps + [range_cap] * max(0, 3 - n_lanes)
    return Indicators(-me.yaw_rel, me.lateral, d[0], d[1], d[2])


def opponents(
    world: WorldState, observer_id: int, range_m: float = DETECT_RANGE
) -> list[OpponentReading]:
    """All vehicles within ``range_m`` along-track of the observer,
    sorted by |d_exact| ascending.

    Gaps use the shortest signed wrap distance on closed loops, so the
    readings of two vehicles are exact negations of each other.
    """
    track = world.track
    vehicles = world.vehicles
    if not 0 <= observer_id < len(vehicles):
        raise KeyError(f"unknown vehicle id {observer_id}")
    me = vehicles[observer_id]
    my_s = me.s
    lane_sets = world.lane_sets
    headings = world.headings
    my_lanes = lane_sets[observer_id]
    total = track.total_length
    closed = track.closed
    half = 0.5 * total
    out = []
    for j, other in enumerate(vehicles):
        if j == observer_id:
            continue
        if closed:
            gap = (other.s - my_s) % total
            if gap > half:
                gap -= total
        else:
            gap = other.s - my_s
        if not -range_m <= gap <= range_m:
            continue
        same = any(l in my_lanes for l in lane_sets[j])
        out.append(
            OpponentReading(
                d_exact=gap,
                lane_index=primary_lane(track, other.lateral),
                to_middle=other.lateral,
                yaw=headings[j] + other.yaw_rel,
                speed=other.speed,
                same_lane=same,
            )
        )
    out.sort(key=lambda r: abs(r.d_exact))
    return out


class PerceptionState:
    """Mutable per-host state for :func:`perceive`: the noise RNG plus the
    held indicator vector.  One instance per host; not thread safe."""

    def __init__(self, model: NoiseModel, seed: int | None = None):
        self.model = model
        actual = model.rng_seed if model.rng_seed is not None else seed
        if actual is None:
            actual = 0
        self.rng = np.random.Generator(np.random.PCG64(actual))
        self.held: Indicators | None = None

    def draw(self) -> tuple[float, ...]:
        """One standard-scale noise draw per channel, scaled by the MAEs.

        Standard variates are drawn unconditionally so the stream does not
        depend on which MAEs are zero.
        """
        m = self.model
        if m.distribution == "laplace":
            raw = self.rng.laplace(0.0, 1.0, size=5)
            scale = m.maes
        else:
            raw = self.rng.standard_normal(5)
            scale = tuple(v * math.sqrt(math.pi / 2.0) for v in m.maes)
        return tuple(r * s for r, s in zip(raw, scale))


def perceive(
    truth: Indicators, model: NoiseModel, tick: int, noise_state: PerceptionState
) -> Indicators:
    """Noisy, rate-limited view of the indicator vector.

    On ticks where ``tick % perception_period == 0`` the truth is
    resampled with fresh per-channel noise (laplace scale equals the MAE;
    gaussian sigma is MAE * sqrt(pi/2)).  Other ticks return the held
    value unchanged.  Lane gaps are re-clamped to [0, 60].
    """
    if tick % model.perception_period == 0 or noise_state.held is None:
        na, nm, n1, n2, n3 = noise_state.draw()
        noise_state.held = Indicators(
            angle=truth.angle + na,
            to_middle=truth.to_middle + nm,
            d1=min(max(truth.d1 + n1, 0.0), DETECT_RANGE),
            d2=min(max(truth.d2 + n2, 0.0), DETECT_RANGE),
            d3=min(max(truth.d3 + n3, 0.0), DETECT_RANGE),
        )
    return noise_state.held
