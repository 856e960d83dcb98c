"""Command-line front end.

Subcommands: ``run`` a scenario, ``ablate`` (full controller vs
traffic-state classification disabled), ``sweep`` noise multipliers, and
``verify`` the production controller against the reference transcription.

Exit codes: 0 success / property confirmed, 1 property not confirmed,
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .engine import RunMetrics, run
from .reference import CHECKS, run_equivalence
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_NOT_CONFIRMED = 1
EXIT_USAGE = 2

VERIFY_TOLERANCE = 1e-12


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} must look like section.key=value")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load(args) -> "tuple":
    path = Path(args.scenario)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read scenario {path}: {exc.strerror}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    overrides = _parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    try:
        spec = load_scenario(text, overrides)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return spec


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    spec = _load(args)
    out = _outdir(args)
    metrics = run(spec, log_path=out / "log.csv", parallel=args.parallel)
    metrics.write(out / "metrics.txt")
    print(f"ticks={metrics.ticks} sim_time={metrics.sim_time:.2f}s "
          f"damage_total={metrics.total_damage} overtakes={metrics.overtakes}")
    print(f"wrote {out / 'log.csv'} and {out / 'metrics.txt'}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec = _load(args)
    out = _outdir(args)
    full = run(spec, log_path=out / "log_full.csv", parallel=args.parallel)
    ablated_spec = dataclasses.replace(spec, disable_agent_state=True)
    ablated = run(ablated_spec, log_path=out / "log_ablated.csv", parallel=args.parallel)

    lines = ["vehicle_id  role  damage_full  damage_ablated"]
    world_roles = [v.role for v in spec.vehicles]
    for vid in sorted(full.damage):
        lines.append(
            f"{vid:>10}  {world_roles[vid]:<5} {full.damage[vid]:>11}  {ablated.damage[vid]:>14}"
        )
    lines.append(f"{'total':>10}        {full.total_damage:>11}  {ablated.total_damage:>14}")
    report = "\n".join(lines) + "\n"
    (out / "ablation.txt").write_text(report)
    print(report, end="")

    if full.total_damage == 0 and ablated.total_damage > 0:
        print("ablation confirmed: 0 damage with traffic states, "
              f"{ablated.total_damage} without")
        return EXIT_OK
    if full.total_damage == 0 and ablated.total_damage == 0:
        print("ablation not discriminative: both variants finished without damage")
        return EXIT_NOT_CONFIRMED
    print(f"full controller incurred damage ({full.total_damage}); "
          "scenario exceeds the controller's envelope")
    return EXIT_NOT_CONFIRMED


def cmd_sweep(args) -> int:
    spec = _load(args)
    out = _outdir(args)
    try:
        multipliers = [float(x) for x in args.multipliers.split(",") if x.strip() != ""]
    except ValueError:
        print(f"error: bad multiplier list {args.multipliers!r}", file=sys.stderr)
        return EXIT_USAGE
    if not multipliers or args.seeds < 1:
        print("error: need at least one multiplier and one seed", file=sys.stderr)
        return EXIT_USAGE

    rows = ["multiplier,seed,damage_total,damage_host,overtakes,"
            "dmae_angle,dmae_to_middle,dmae_d1,dmae_d2,dmae_d3"]
    for mult in multipliers:
        scaled = dataclasses.replace(spec, noise=spec.noise.scaled(mult))
        for k in range(args.seeds):
            seed = spec.seed + k
            metrics = run(dataclasses.replace(scaled, seed=seed), parallel=args.parallel)
            d = metrics.dmae
            rows.append(
                f"{mult:g},{seed},{metrics.total_damage},{metrics.host_damage},"
                f"{metrics.overtakes},{d['angle']:.9g},{d['to_middle']:.9g},"
                f"{d['d1']:.9g},{d['d2']:.9g},{d['d3']:.9g}"
            )
            print(f"multiplier {mult:g} seed {seed}: damage {metrics.total_damage}")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    deviations = run_equivalence(samples=args.samples, seed=args.seed or 20_240_101)
    worst = 0.0
    for name in CHECKS:
        dev = deviations[name]
        worst = max(worst, dev)
        status = "ok" if dev <= VERIFY_TOLERANCE else "DEVIATES"
        print(f"{name:<12} max deviation {dev:.3e}  {status}")
    if worst <= VERIFY_TOLERANCE:
        print(f"all checks within {VERIFY_TOLERANCE:g}")
        return EXIT_OK
    failing = ", ".join(n for n in CHECKS if deviations[n] > VERIFY_TOLERANCE)
    print(f"equivalence FAILED for: {failing}")
    return EXIT_NOT_CONFIRMED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hwsim",
        description="Deterministic highway traffic simulator and controller testbed.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, scenario_required=True):
        if scenario_required:
            p.add_argument("--scenario", required=True, help="scenario file path")
            p.add_argument("--out", default="out", help="output directory")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a scenario field, e.g. controller.offset_step=0.2")
            p.add_argument("--parallel", action="store_true",
                           help="run per-vehicle work on a thread pool")
        p.add_argument("--seed", type=int, default=None, help="seed override")

    p_run = sub.add_parser("run", help="run one scenario, write log.csv and metrics.txt")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ablate = sub.add_parser(
        "ablate", help="run with and without traffic-state logic, compare damage"
    )
    add_common(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="scale all noise MAEs and tabulate damage")
    add_common(p_sweep)
    p_sweep.add_argument("--multipliers", default="0,1,2,4,8",
                         help="comma-separated MAE multipliers")
    p_sweep.add_argument("--seeds", type=int, default=10,
                         help="number of consecutive seeds per multiplier")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser(
        "verify", help="compare controller against the reference transcription"
    )
    add_common(p_verify, scenario_required=False)
    p_verify.add_argument("--samples", type=int, default=10_000,
                          help="random input tuples per check")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
