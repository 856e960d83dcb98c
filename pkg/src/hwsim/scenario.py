"""Scenario file loading and validation.

The format is line oriented: ``[section]`` headers, ``key = value``
pairs, ``#`` comments.  Sections are ``[track]``, repeated
``[vehicle]``, and optional ``[noise]``, ``[controller]``,
``[dynamics]``, ``[run]``.  Unknown keys are hard errors.  The exact
grammar lives in docs/scenario_format.md.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .core import ControllerParams, Segment, TrackSpec, VehicleState, WorldState
from .dynamics import DynamicsParams, VehicleGeometry, detect_collisions
from .sensors import NOISE_PRESETS, NoiseModel

MAX_AGENTS = 20


class ScenarioError(ValueError):
    """Validation failure; ``errors`` is a list of (field, line, reason)."""

    def __init__(self, errors: list[tuple[str, int, str]]):
        self.errors = list(errors)
        lines = [f"{field} (line {line}): {reason}" for field, line, reason in self.errors]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class VehicleSpawn:
    role: str
    s: float
    lane: int
    lateral: float | None = None  # None spawns at the lane center
    target_speed: float | None = None  # None draws from the seeded distribution
    speed: float | None = None  # None starts at the target speed
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    line: int = 0


@dataclass(frozen=True)
class ScenarioSpec:
    track: TrackSpec
    vehicles: tuple[VehicleSpawn, ...]
    noise: NoiseModel
    controller: ControllerParams
    dynamics: DynamicsParams
    duration: float | None
    laps: int | None
    seed: int
    disable_agent_state: bool = False


_TRACK_KEYS = {"closed", "lane_count", "lane_width", "road_width", "segment"}
_VEHICLE_KEYS = {
    "role", "s", "lane", "lateral", "target_speed", "speed",
    "length", "width", "wheelbase",
}
_NOISE_KEYS = {
    "preset", "mae_angle", "mae_to_middle", "mae_d1", "mae_d2", "mae_d3",
    "distribution", "perception_period", "rng_seed",
}
_CONTROLLER_KEYS = {f.name for f in dataclasses.fields(ControllerParams)}
_DYNAMICS_KEYS = {f.name for f in dataclasses.fields(DynamicsParams)}
_RUN_KEYS = {"duration", "laps", "seed", "disable_agent_state"}
_SECTION_KEYS = {
    "track": _TRACK_KEYS,
    "vehicle": _VEHICLE_KEYS,
    "noise": _NOISE_KEYS,
    "controller": _CONTROLLER_KEYS,
    "dynamics": _DYNAMICS_KEYS,
    "run": _RUN_KEYS,
}
_SINGLETON_SECTIONS = ("track", "noise", "controller", "dynamics", "run")


def _parse_sections(text: str, errors) -> list[tuple[str, int, list[tuple[str, str, int]]]]:
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTION_KEYS:
                errors.append((name, lineno, "unknown section"))
                current = None
                continue
            current = (name, lineno, [])
            sections.append(current)
            continue
        if "=" not in line:
            errors.append(("", lineno, "expected 'key = value'"))
            continue
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip().strip('"')
        if current is None:
            errors.append((key, lineno, "key outside any section"))
            continue
        if key not in _SECTION_KEYS[current[0]]:
            errors.append((f"{current[0]}.{key}", lineno, "unknown key"))
            continue
        current[2].append((key, value, lineno))
    return sections


def _coerce(field_name, value, lineno, kind, errors):
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError("not a boolean")
        return kind(value)
    except ValueError:
        errors.append((field_name, lineno, f"cannot parse {value!r} as {kind.__name__}"))
        return None


def _parse_segment(value: str, lineno: int, errors) -> Segment | None:
    parts = value.split()
    try:
        if parts and parts[0] == "straight" and len(parts) == 2:
            return Segment("straight", length=float(parts[1]))
        if parts and parts[0] == "arc" and len(parts) == 3:
            return Segment("arc", radius=float(parts[1]), arc_angle=float(parts[2]))
        raise ValueError
    except ValueError:
        errors.append((
            "track.segment", lineno,
            f"expected 'straight <length>' or 'arc <radius> <angle_rad>', got {value!r}",
        ))
        return None


def apply_overrides(text: str, overrides: dict[str, str]) -> str:
    """Append dotted-key overrides (e.g. controller.offset_step=0.2) as
    extra section lines so they win over the file's values.

    Only the singleton sections can be overridden; vehicle entries are
    positional and cannot be addressed this way.
    """
    extra = []
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        section = section.strip().lower()
        key = key.strip().lower()
        if section not in _SINGLETON_SECTIONS or not key:
            raise ScenarioError([(dotted, 0, "override must be <section>.<key> with a singleton section")])
        if key not in _SECTION_KEYS[section]:
            raise ScenarioError([(dotted, 0, "unknown field")])
        extra.append(f"[{section}]\n{key} = {value}")
    if not extra:
        return text
    return text + "\n" + "\n".join(extra) + "\n"


def load_scenario(text: str, overrides: dict[str, str] | None = None) -> ScenarioSpec:
    """Parse and fully validate a scenario; raises :class:`ScenarioError`
    carrying every problem found rather than only the first."""
    if overrides:
        text = apply_overrides(text, overrides)
    errors: list[tuple[str, int, str]] = []
    sections = _parse_sections(text, errors)

    merged: dict[str, dict[str, tuple[str, int]]] = {}
    section_lines: dict[str, list[int]] = {}
    vehicles_raw: list[tuple[int, dict[str, tuple[str, int]]]] = []
    segments: list[Segment] = []
    for name, lineno, pairs in sections:
        if name == "vehicle":
            vehicles_raw.append((lineno, {k: (v, ln) for k, v, ln in pairs}))
            continue
        section_lines.setdefault(name, []).append(lineno)
        bucket = merged.setdefault(name, {})
        for k, v, ln in pairs:
            if name == "track" and k == "segment":
                seg = _parse_segment(v, ln, errors)
                if seg is not None:
                    segments.append(seg)
                continue
            bucket[k] = (v, ln)

    if "track" not in section_lines:
        errors.append(("track", 0, "missing [track] section"))
    if not vehicles_raw:
        errors.append(("vehicle", 0, "at least one [vehicle] section required"))

    track_kv = merged.get("track", {})
    closed = True
    if "closed" in track_kv:
        v = _coerce("track.closed", *track_kv["closed"], bool, errors)
        closed = closed if v is None else v
    lane_count = 3
    if "lane_count" in track_kv:
        v = _coerce("track.lane_count", *track_kv["lane_count"], int, errors)
        lane_count = lane_count if v is None else v
    lane_width = 4.0
    if "lane_width" in track_kv:
        v = _coerce("track.lane_width", *track_kv["lane_width"], float, errors)
        lane_width = lane_width if v is None else v
    road_width = 13.0
    if "road_width" in track_kv:
        v = _coerce("track.road_width", *track_kv["road_width"], float, errors)
        road_width = road_width if v is None else v

    track = None
    if segments and not errors:
        try:
            track = TrackSpec(tuple(segments), lane_count, lane_width, road_width, closed)
        except ValueError as exc:
            errors.append(("track", section_lines.get("track", [0])[0], str(exc)))
    elif not segments:
        errors.append(("track.segment", section_lines.get("track", [0])[0] if section_lines.get("track") else 0, "track needs at least one segment"))

    # noise: preset first, explicit keys override
    noise_kv = merged.get("noise", {})
    noise_fields: dict[str, object] = {}
    if "preset" in noise_kv:
        preset_name, ln = noise_kv["preset"]
        preset = NOISE_PRESETS.get(preset_name.lower())
        if preset is None:
            errors.append((
                "noise.preset", ln,
                f"unknown preset {preset_name!r}; known: {', '.join(sorted(NOISE_PRESETS))}",
            ))
        else:
            noise_fields = dataclasses.asdict(preset)
    for key, kind in (
        ("mae_angle", float), ("mae_to_middle", float), ("mae_d1", float),
        ("mae_d2", float), ("mae_d3", float), ("distribution", str),
        ("perception_period", int), ("rng_seed", int),
    ):
        if key in noise_kv:
            v = _coerce(f"noise.{key}", *noise_kv[key], kind, errors)
            if v is not None:
                noise_fields[key] = v
    noise = None
    try:
        noise = NoiseModel(**noise_fields)
    except ValueError as exc:
        errors.append(("noise", section_lines.get("noise", [0])[0] if section_lines.get("noise") else 0, str(exc)))

    controller = _build_params(ControllerParams, merged.get("controller", {}), "controller", errors)
    dynamics = _build_params(DynamicsParams, merged.get("dynamics", {}), "dynamics", errors)

    run_kv = merged.get("run", {})
    duration = None
    laps = None
    if "duration" in run_kv:
        duration = _coerce("run.duration", *run_kv["duration"], float, errors)
    if "laps" in run_kv:
        laps = _coerce("run.laps", *run_kv["laps"], int, errors)
    if duration is None and laps is None:
        errors.append(("run", section_lines.get("run", [0])[0] if section_lines.get("run") else 0, "need run.duration or run.laps"))
    if duration is not None and laps is not None:
        errors.append(("run", run_kv["laps"][1], "duration and laps are mutually exclusive"))
    if duration is not None and duration <= 0.0:
        errors.append(("run.duration", run_kv["duration"][1], "duration must be positive"))
    if laps is not None and laps < 1:
        errors.append(("run.laps", run_kv["laps"][1], "laps must be >= 1"))
    seed = 0
    if "seed" in run_kv:
        v = _coerce("run.seed", *run_kv["seed"], int, errors)
        seed = seed if v is None else v
    disable = False
    if "disable_agent_state" in run_kv:
        v = _coerce("run.disable_agent_state", *run_kv["disable_agent_state"], bool, errors)
        disable = disable if v is None else v

    vehicles = _build_vehicles(vehicles_raw, track, errors)

    if errors:
        raise ScenarioError(errors)
    assert track is not None and noise is not None
    spec = ScenarioSpec(
        track=track,
        vehicles=tuple(vehicles),
        noise=noise,
        controller=controller,
        dynamics=dynamics,
        duration=duration,
        laps=laps,
        seed=seed,
        disable_agent_state=disable,
    )
    _validate_spawns(spec, errors)
    if errors:
        raise ScenarioError(errors)
    return spec


def _build_params(cls, kv, prefix, errors):
    kinds = {f.name: type(getattr(cls(), f.name)) for f in dataclasses.fields(cls)}
    values = {}
    for key, (raw, ln) in kv.items():
        kind = kinds[key]
        v = _coerce(f"{prefix}.{key}", raw, ln, kind, errors)
        if v is not None:
            values[key] = v
    try:
        return cls(**values)
    except ValueError as exc:
        errors.append((prefix, 0, str(exc)))
        return cls()


def _build_vehicles(vehicles_raw, track, errors):
    vehicles = []
    host_lines = []
    agent_count = 0
    for lineno, kv in vehicles_raw:
        role = kv.get("role", ("agent", lineno))[0].lower()
        if role not in ("host", "agent"):
            errors.append(("vehicle.role", kv.get("role", ("", lineno))[1], f"role must be host or agent, got {role!r}"))
            continue
        if role == "host":
            host_lines.append(lineno)
        else:
            agent_count += 1
        if "s" not in kv:
            errors.append(("vehicle.s", lineno, "initial s required"))
            continue
        s = _coerce("vehicle.s", *kv["s"], float, errors)
        if "lane" not in kv:
            errors.append(("vehicle.lane", lineno, "initial lane required"))
            continue
        lane = _coerce("vehicle.lane", *kv["lane"], int, errors)
        if s is None or lane is None:
            continue
        lateral = None
        if "lateral" in kv:
            lateral = _coerce("vehicle.lateral", *kv["lateral"], float, errors)
        target = None
        if "target_speed" in kv:
            raw, ln = kv["target_speed"]
            if raw.lower() != "auto":
                target = _coerce("vehicle.target_speed", raw, ln, float, errors)
                if target is not None and target <= 0.0:
                    errors.append(("vehicle.target_speed", ln, "must be positive or 'auto'"))
        speed = None
        if "speed" in kv:
            speed = _coerce("vehicle.speed", *kv["speed"], float, errors)
            if speed is not None and speed < 0.0:
                errors.append(("vehicle.speed", kv["speed"][1], "must be nonnegative"))
        geom_kwargs = {}
        for gkey in ("length", "width", "wheelbase"):
            if gkey in kv:
                v = _coerce(f"vehicle.{gkey}", *kv[gkey], float, errors)
                if v is not None:
                    geom_kwargs[gkey] = v
        try:
            geom = VehicleGeometry(**geom_kwargs)
        except ValueError as exc:
            errors.append(("vehicle.geometry", lineno, str(exc)))
            geom = VehicleGeometry()
        if track is not None:
            if not 1 <= lane <= track.lane_count:
                errors.append(("vehicle.lane", kv["lane"][1], f"lane must be in 1..{track.lane_count}"))
                continue
            if not track.closed and not 0.0 <= s <= track.total_length:
                errors.append(("vehicle.s", kv["s"][1], "s outside the open course"))
                continue
        vehicles.append(VehicleSpawn(role, s, lane, lateral, target, speed, geom, lineno))
    if len(host_lines) != 1:
        if not host_lines:
            errors.append(("vehicle.role", 0, "exactly one host required, found none"))
        else:
            listed = ", ".join(str(l) for l in host_lines)
            errors.append(("vehicle.role", host_lines[-1], f"exactly one host required, found {len(host_lines)} (lines {listed})"))
    if agent_count > MAX_AGENTS:
        errors.append(("vehicle", 0, f"at most {MAX_AGENTS} agents supported, found {agent_count}"))
    return vehicles


def initial_world(spec: ScenarioSpec) -> tuple[WorldState, list[VehicleGeometry]]:
    """World at tick 0.  Vehicles sit at their lane centers, aligned with
    the track, at their initial speed (target speed unless overridden;
    auto targets resolve later, so spawn speed falls back to 0 here only
    for validation purposes)."""
    states = []
    geoms = []
    centers = spec.track.lane_centers
    for v in spec.vehicles:
        speed = v.speed
        if speed is None:
            speed = v.target_speed if v.target_speed is not None else 0.0
        states.append(
            VehicleState(
                s=spec.track.wrap_s(v.s),
                lateral=v.lateral if v.lateral is not None else centers[v.lane - 1],
                yaw_rel=0.0,
                speed=speed,
                driven_wheel_speed=speed,
                wheel_avg_speed=speed,
                damage=0,
                role=v.role,
            )
        )
        geoms.append(v.geometry)
    return WorldState(spec.track, tuple(states)), geoms


def _validate_spawns(spec: ScenarioSpec, errors) -> None:
    world, geoms = initial_world(spec)
    events = detect_collisions(world, geoms, spec.dynamics)
    for ev in events:
        if ev.b is None:
            errors.append((
                "vehicle", spec.vehicles[ev.a].line,
                "spawn position is off the road",
            ))
        else:
            errors.append((
                "vehicle", spec.vehicles[ev.a].line,
                f"spawn overlaps the vehicle defined at line {spec.vehicles[ev.b].line}",
            ))
