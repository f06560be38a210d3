"""Command-line front end: ``run``, ``compare`` and ``presets``."""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import presets
from .io import (
    ConfigError,
    ScenarioFile,
    apply_override,
    fmt,
    load_scenario_file,
    parse_push,
    with_scenario,
    write_outputs,
)
from .sim import run_closed_loop

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

COMPARE_METRICS = ("e_avg", "e_max", "steps_completed", "fell", "dcm_prediction_error", "solver_mean_us")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise ConfigError(f"expected on or off, got {text!r}")
    return text == "on"


def base_config(args) -> ScenarioFile:
    """Scenario file or preset, with command-line overrides applied in a fixed order."""
    if args.scenario and args.preset:
        raise ConfigError("use either --scenario or --preset, not both")
    if args.scenario:
        sf = load_scenario_file(args.scenario)
    elif args.preset:
        try:
            sf = ScenarioFile(scenario=presets.get_preset(args.preset))
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    else:
        raise ConfigError("one of --scenario or --preset is required")
    if args.seed is not None:
        sf = with_scenario(sf, seed=args.seed)
    if args.alpha is not None:
        sf = with_scenario(sf, alpha=args.alpha)
    if args.pslip is not None:
        sf = with_scenario(sf, pslip_enabled=_on_off(args.pslip))
    if args.push:
        pushes = sf.scenario.pushes + tuple(parse_push(p) for p in args.push)
        sf = with_scenario(sf, pushes=pushes)
    if args.horizon is not None:
        try:
            sf = replace(sf, planner=replace(sf.planner, horizon=args.horizon))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for item in args.override or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must be KEY=VALUE")
        sf = apply_override(sf, key.strip(), value)
    return sf


def execute(sf: ScenarioFile, out_dir):
    trace = run_closed_loop(sf.scenario, sf.sim, sf.params, sf.planner)
    write_outputs(trace, sf, out_dir)
    return trace.metrics


def _parse_values(key: str, text: str) -> list:
    if key == "seed" and ":" in text:
        lo, hi = text.split(":", 1)
        try:
            return list(range(int(lo), int(hi)))
        except ValueError:
            raise ConfigError(f"bad seed range {text!r}") from None
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"sweep {key!r} has no values")
    return values


def parse_sweep(items) -> list[tuple[str, list]]:
    """``KEY=v1,v2`` terms; ``seed=0:10`` is a half-open range."""
    axes = []
    for item in items or ():
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"sweep {item!r} must be KEY=V1,V2,...")
        axes.append((key.strip(), _parse_values(key.strip(), text)))
    return axes


def configure(sf: ScenarioFile, key: str, value) -> ScenarioFile:
    if key == "alpha":
        return with_scenario(sf, alpha=float(value))
    if key == "pslip":
        return with_scenario(sf, pslip_enabled=_on_off(str(value)))
    if key == "seed":
        return with_scenario(sf, seed=int(value))
    if key == "zdist":
        h = float(value)
        dist = sf.scenario.disturbance
        return with_scenario(sf, disturbance=(dist[0], dist[1], (-h, h)))
    return apply_override(sf, key, str(value))


def build_runs(sf: ScenarioFile, axes) -> list[tuple[dict, ScenarioFile]]:
    runs = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        cfg = sf
        labels = {}
        for (key, _), value in zip(axes, combo):
            cfg = configure(cfg, key, value)
            labels[key] = value
        runs.append((labels, cfg))
    return runs


def _run_one(job):
    sf, out_dir = job
    return execute(sf, out_dir)


def cmd_run(args) -> int:
    sf = base_config(args)
    metrics = execute(sf, args.out)
    print(
        f"steps={metrics['steps_completed']} fell={metrics['fell']} "
        f"e_avg={fmt(metrics['e_avg'])} m -> {args.out}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    sf = base_config(args)
    axes = parse_sweep(args.sweep)
    runs = build_runs(sf, axes)
    out = Path(args.out)
    jobs = [(cfg, out / f"run_{i:03d}") for i, (_, cfg) in enumerate(runs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    keys = [k for k, _ in axes]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", *keys, *COMPARE_METRICS])
        for i, ((labels, _), metrics) in enumerate(zip(runs, results)):
            row = [f"run_{i:03d}", *(labels[k] for k in keys)]
            row += [fmt(metrics.get(m, "")) for m in COMPARE_METRICS]
            writer.writerow(row)
            print(" ".join(str(v) for v in row))
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in presets.PRESETS:
        print(presets.describe(name))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--preset", help="built-in scenario name (see the presets verb)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="G-ALIP coefficient in [0, 1]")
    p.add_argument("--horizon", type=int, help="MPC horizon in steps")
    p.add_argument("--pslip", choices=("on", "off"), help="slope-transition compensation")
    p.add_argument("--push", action="append", help='extra push, e.g. "t=6,fx=-50,dur=0.3"')
    p.add_argument("--override", action="append", help="dotted KEY=VALUE, e.g. sim.max_steps=20")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pslip", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="simulate one scenario")
    _add_common(run)
    run.set_defaults(func=cmd_run)
    cmp_ = sub.add_parser("compare", help="simulate a sweep of configurations")
    _add_common(cmp_)
    cmp_.add_argument(
        "--sweep",
        action="append",
        help="alpha=0,0.5,1 | pslip=on,off | seed=0:10 | zdist=0.05,0.1 | block.field=v1,v2",
    )
    cmp_.add_argument("--jobs", type=int, default=1, help="worker processes")
    cmp_.set_defaults(func=cmd_compare)
    pre = sub.add_parser("presets", help="list built-in scenarios")
    pre.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
