"""Command-line entry point.

Subcommands:
    run    [CONFIG] [--preset NAME] [--seed S] [--out DIR]
    rmse   LOG.csv
    export LOG.csv --format csv|geojson [--out PATH]
    sweep  [CONFIG] [--preset NAME] --seeds A..B [--out DIR] [--workers N]

Exit codes: 0 when the requested work completed (a scenario that lands, runs
out of battery, or hits an injected failsafe all count as completed runs),
2 for configuration errors, 1 for unexpected runtime errors.

The default output directory is $TERRALOC_OUT_DIR, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .harness import ConfigError, RunLog, ScenarioConfig, export, load_config, run_scenario
from .presets import build_preset


def _default_out() -> Path:
    return Path(os.environ.get("TERRALOC_OUT_DIR", "runs"))


def _resolve_config(args) -> ScenarioConfig:
    if args.config is None and args.preset is None:
        raise ConfigError("provide a config file, a --preset, or both")
    if args.config is None:
        return build_preset(args.preset)
    if args.preset is None:
        return load_config(args.config)
    # both: the preset is the base, the file overlays it
    import yaml

    from .harness import config_from_dict

    with open(args.config) as f:
        overrides = yaml.safe_load(f) or {}
    overrides.pop("preset", None)
    return config_from_dict({"preset": args.preset, **overrides})


def _print_summary(name: str, seed: int, log: RunLog) -> None:
    s = log.summary()
    print(
        f"{name} seed={seed}: rmse_odom={s['rmse_odom']:.2f} m "
        f"rmse_method={s['rmse_method']:.2f} m "
        f"waypoints={s['waypoints_detected']}/{s['waypoints_total']} "
        f"termination={s['termination']}"
    )


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    seed = args.seed if args.seed is not None else cfg.run.seed
    log = run_scenario(cfg, seed=seed)
    out_dir = Path(args.out) if args.out else _default_out()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{cfg.name}_seed{seed}.csv"
    log.to_csv(path)
    _print_summary(cfg.name, seed, log)
    print(f"log written to {path}")
    return 0


def _cmd_rmse(args) -> int:
    log = RunLog.from_csv(args.log)
    s = log.summary()
    print(f"rmse_odom={s['rmse_odom']:.6f}")
    print(f"rmse_method={s['rmse_method']:.6f}")
    return 0


def _cmd_export(args) -> int:
    log = RunLog.from_csv(args.log)
    if args.preset:
        cfg = build_preset(args.preset)
        log.waypoints = [(w.x, w.y, w.radius) for w in cfg.mission.waypoints]
    out = args.out or str(Path(args.log).with_suffix(f".{args.format}"))
    export(log, args.format, out)
    print(f"written {out}")
    return 0


def _parse_seed_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(spec)]


def _sweep_one(payload):
    cfg, seed = payload
    log = run_scenario(cfg, seed=seed)
    return seed, log


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    seeds = _parse_seed_range(args.seeds)
    out_dir = Path(args.out) if args.out else _default_out()
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, [(cfg, s) for s in seeds]))
    else:
        results = [_sweep_one((cfg, s)) for s in seeds]

    summary_rows = []
    for seed, log in results:
        path = out_dir / f"{cfg.name}_seed{seed}.csv"
        log.to_csv(path)
        _print_summary(cfg.name, seed, log)
        summary_rows.append({"seed": seed, **log.summary()})
    with open(out_dir / f"{cfg.name}_sweep.json", "w") as f:
        json.dump(summary_rows, f, indent=2)
        f.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="terraloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario and write its log")
    p_run.add_argument("config", nargs="?", default=None, help="YAML scenario file")
    p_run.add_argument("--preset", default=None, help="named preset to use as the base")
    p_run.add_argument("--seed", type=int, default=None, help="override the run seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_rmse = sub.add_parser("rmse", help="print RMSE figures from a run log")
    p_rmse.add_argument("log", help="run log CSV")
    p_rmse.set_defaults(func=_cmd_rmse)

    p_exp = sub.add_parser("export", help="convert a run log")
    p_exp.add_argument("log", help="run log CSV")
    p_exp.add_argument("--format", choices=("csv", "geojson"), required=True)
    p_exp.add_argument("--out", default=None, help="output path")
    p_exp.add_argument("--preset", default=None, help="preset supplying waypoint metadata")
    p_exp.set_defaults(func=_cmd_export)

    p_sweep = sub.add_parser("sweep", help="run a scenario over a seed range")
    p_sweep.add_argument("config", nargs="?", default=None)
    p_sweep.add_argument("--preset", default=None)
    p_sweep.add_argument("--seeds", required=True, help="seed range A..B (inclusive)")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
