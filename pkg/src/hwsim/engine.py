"""Fixed-timestep simulation loop: sense, perceive, control, step,
collide, log.

Every controller in a tick reads the same frozen world snapshot
(simultaneous-move semantics), so per-vehicle work can run in parallel
without changing any result.  Two runs with the same scenario and seed
produce byte-identical logs.

RNG splitting rule: the scenario seed feeds a ``numpy`` SeedSequence;
child 0 draws agent target speeds (in vehicle order), child 1 seeds the
host's perception noise unless the noise model carries its own seed.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controller import ControllerState, control_step
from .core import WorldState, wrap_signed
from .dynamics import apply_damage, detect_collisions, step_vehicle
from .scenario import ScenarioSpec, initial_world
from .sensors import PerceptionState, ground_truth_indicators, opponents, perceive

# an overtake only counts when the gap sign change happens this close in,
# ruling out wrap-around crossings on the far side of a loop
_OVERTAKE_WINDOW = 30.0

_LOG_HEADER = (
    "tick,time,vehicle_id,role,s,lateral,yaw_rel,speed,steer,accel,brake,"
    "agent_state,damage,angle_true,to_middle_true,d1_true,d2_true,d3_true,"
    "angle_perceived,to_middle_perceived,d1_perceived,d2_perceived,d3_perceived"
)

_CHANNELS = ("angle", "to_middle", "d1", "d2", "d3")


@dataclass
class RunMetrics:
    """Aggregate outcome of one run."""

    damage: dict[int, int]
    host_id: int
    host_distance: float
    laps_completed: int
    overtakes: int
    overtake_ticks: list[int]
    mean_abs_to_middle: float
    max_abs_to_middle: float
    dmae: dict[str, float]
    ticks: int
    sim_time: float
    loop_incomplete: bool = False

    @property
    def host_damage(self) -> int:
        return self.damage[self.host_id]

    @property
    def total_damage(self) -> int:
        return sum(self.damage.values())

    def lines(self) -> list[str]:
        out = [
            f"ticks = {self.ticks}",
            f"sim_time_s = {_g(self.sim_time)}",
            f"host_id = {self.host_id}",
            f"host_distance_m = {_g(self.host_distance)}",
            f"laps_completed = {self.laps_completed}",
            f"loop_incomplete = {str(self.loop_incomplete).lower()}",
            f"overtakes = {self.overtakes}",
            f"mean_abs_to_middle = {_g(self.mean_abs_to_middle)}",
            f"max_abs_to_middle = {_g(self.max_abs_to_middle)}",
            f"damage_total = {self.total_damage}",
            f"damage_host = {self.host_damage}",
        ]
        for vid in sorted(self.damage):
            out.append(f"damage_vehicle_{vid} = {self.damage[vid]}")
        for ch in _CHANNELS:
            out.append(f"dmae_{ch} = {_g(self.dmae[ch])}")
        return out

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")


def _g(x: float) -> str:
    return format(x, ".9g")


def _derive_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def run(spec: ScenarioSpec, log_path=None, parallel: bool = False) -> RunMetrics:
    """Execute a scenario to completion and return its metrics.

    When ``log_path`` is given, a CSV trajectory log is written there (one
    row per tick per vehicle, state as of the end of the tick).
    ``parallel`` moves per-vehicle control and stepping onto a thread
    pool; results are identical either way.
    """
    track = spec.track
    world, geoms = initial_world(spec)
    params = spec.controller
    dyn = spec.dynamics
    dt = dyn.dt
    total_len = track.total_length

    root = np.random.SeedSequence(spec.seed)
    speed_seq, noise_seq = root.spawn(2)
    speed_rng = np.random.Generator(np.random.PCG64(speed_seq))

    host_id = next(i for i, v in enumerate(spec.vehicles) if v.role == "host")
    states = list(world.vehicles)
    caps: list[float] = []
    for i, v in enumerate(spec.vehicles):
        if v.role == "host":
            cap = v.target_speed if v.target_speed is not None else params.v_max_host
            cap = min(cap, params.v_max_host)
        else:
            target = v.target_speed
            if target is None:
                target = float(speed_rng.uniform(0.5, 1.0)) * params.v_max_agent
            cap = min(target, params.v_max_agent)
        caps.append(cap)
        if v.speed is None:
            states[i] = dataclasses.replace(
                states[i], speed=cap, driven_wheel_speed=cap, wheel_avg_speed=cap
            )

    cstates = [
        ControllerState(
            params=params,
            offset=min(max(track.lane_centers[v.lane - 1], -params.lane_width), params.lane_width),
            v_cap=caps[i],
            track_length=total_len if track.closed else math.inf,
            disable_agent_state=spec.disable_agent_state,
        )
        for i, v in enumerate(spec.vehicles)
    ]
    pstate = PerceptionState(spec.noise, seed=_derive_seed(noise_seq))

    if spec.duration is not None:
        max_ticks = max(1, round(spec.duration / dt))
        target_laps = None
    else:
        target_laps = spec.laps
        # hard stop if the host somehow cannot finish (3 m/s floor pace)
        max_ticks = max(1, math.ceil(target_laps * total_len / 3.0 / dt))

    n = len(states)
    host_odometer = 0.0
    laps_done = 0
    overtakes = 0
    overtake_ticks: list[int] = []
    prev_gap = [0.0] * n
    have_prev_gap = False
    sum_abs_tm = 0.0
    max_abs_tm = 0.0
    dmae_sums = [0.0] * 5
    dmae_ticks = 0

    log_file = open(log_path, "w", newline="") if log_path is not None else None
    if log_file is not None:
        log_file.write(_LOG_HEADER + "\n")

    pool = ThreadPoolExecutor(max_workers=min(8, n)) if parallel else None
    road_limit = 0.5 * track.road_width + dyn.off_track_margin

    try:
        tick = 0
        while tick < max_ticks:
            frozen = WorldState(track, tuple(states))

            poses = frozen.vehicle_poses

            def advance(i, frozen=frozen, tick=tick, poses=poses):
                me = frozen.vehicles[i]
                readings = opponents(frozen, i, params.detect_range)
                truth = ground_truth_indicators(
                    frozen, i, car_length=geoms[i].length, range_cap=params.detect_range
                )
                if i == host_id:
                    used = perceive(truth, spec.noise, tick, pstate)
                else:
                    used = truth
                cmd = control_step(used, readings, me, cstates[i], poses[i][2])
                new_state = step_vehicle(me, cmd, geoms[i], dyn, track, poses[i])
                return new_state, cmd, truth, used

            if pool is not None:
                results = list(pool.map(advance, range(n)))
            else:
                results = [advance(i) for i in range(n)]

            new_states = [r[0] for r in results]
            stepped = WorldState(track, tuple(new_states))
            events = detect_collisions(stepped, geoms, dyn)
            if events:
                stepped = apply_damage(stepped, events, dyn)
            states = list(stepped.vehicles)

            host = states[host_id]
            prev_host = frozen.vehicles[host_id]
            ds = (
                wrap_signed(host.s - prev_host.s, total_len)
                if track.closed
                else host.s - prev_host.s
            )
            host_odometer += ds
            if track.closed:
                laps_done = int(host_odometer // total_len)
            abs_tm = abs(host.lateral)
            sum_abs_tm += abs_tm
            if abs_tm > max_abs_tm:
                max_abs_tm = abs_tm

            host_truth = results[host_id][2]
            host_used = results[host_id][3]
            for k, ch in enumerate(_CHANNELS):
                dmae_sums[k] += abs(getattr(host_used, ch) - getattr(host_truth, ch))
            dmae_ticks += 1

            host_on_road = abs(host.lateral) <= road_limit
            for j in range(n):
                if j == host_id:
                    continue
                gap = (
                    wrap_signed(states[j].s - host.s, total_len)
                    if track.closed
                    else states[j].s - host.s
                )
                if (
                    have_prev_gap
                    and prev_gap[j] > 0.0
                    and gap <= 0.0
                    and prev_gap[j] < _OVERTAKE_WINDOW
                    and host_on_road
                    and abs(states[j].lateral) <= road_limit
                ):
                    overtakes += 1
                    overtake_ticks.append(tick)
                prev_gap[j] = gap
            have_prev_gap = True

            if log_file is not None:
                rows = []
                time_s = _g((tick + 1) * dt)
                for i in range(n):
                    st = states[i]
                    cmd = results[i][1]
                    base = (
                        f"{tick},{time_s},{i},{st.role},{_g(st.s)},{_g(st.lateral)},"
                        f"{_g(st.yaw_rel)},{_g(st.speed)},{_g(cmd.steer)},{_g(cmd.accel)},"
                        f"{_g(cmd.brake)},{cstates[i].last_agent_state},{st.damage}"
                    )
                    if i == host_id:
                        t = results[i][2]
                        u = results[i][3]
                        rows.append(
                            base
                            + f",{_g(t.angle)},{_g(t.to_middle)},{_g(t.d1)},{_g(t.d2)},{_g(t.d3)}"
                            + f",{_g(u.angle)},{_g(u.to_middle)},{_g(u.d1)},{_g(u.d2)},{_g(u.d3)}"
                        )
                    else:
                        rows.append(base + "," * 10)
                log_file.write("\n".join(rows) + "\n")

            tick += 1
            if target_laps is not None and laps_done >= target_laps:
                break
    finally:
        if pool is not None:
            pool.shutdown()
        if log_file is not None:
            log_file.close()

    loop_incomplete = target_laps is not None and laps_done < target_laps
    return RunMetrics(
        damage={i: states[i].damage for i in range(n)},
        host_id=host_id,
        host_distance=host_odometer,
        laps_completed=laps_done,
        overtakes=overtakes,
        overtake_ticks=overtake_ticks,
        mean_abs_to_middle=sum_abs_tm / max(tick, 1),
        max_abs_to_middle=max_abs_tm,
        dmae={ch: dmae_sums[k] / max(dmae_ticks, 1) for k, ch in enumerate(_CHANNELS)},
        ticks=tick,
        sim_time=tick * dt,
        loop_incomplete=loop_incomplete,
    )


def compute_dmae(log) -> dict[str, float]:
    """Per-channel mean absolute perceived-vs-truth error over all host
    rows of a trajectory log.

    ``log`` is a CSV path or an open iterable of CSV lines.  Raises
    ``ValueError`` when the log holds no host rows.
    """
    if isinstance(log, (str, Path)):
        with open(log, newline="") as fh:
            return _dmae_rows(csv.DictReader(fh))
    return _dmae_rows(csv.DictReader(log))


def _dmae_rows(reader) -> dict[str, float]:
    sums = dict.fromkeys(_CHANNELS, 0.0)
    count = 0
    for row in reader:
        if row["role"] != "host" or not row["angle_true"]:
            continue
        for ch in _CHANNELS:
            sums[ch] += abs(float(row[f"{ch}_perceived"]) - float(row[f"{ch}_true"]))
        count += 1
    if count == 0:
        raise ValueError("log contains no host indicator rows")
    return {ch: sums[ch] / count for ch in _CHANNELS}
