"""Command-line entry point.

Exit codes: 0 success, 1 runtime violation or solver failure, 2 bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .allocation import AllocationError
from .config import ConfigError, ScenarioConfig, bundled_scenario, dump_config, load_config
from .interference import InterferenceError, valid_range
from .model import N_JOINTS, form_angles
from .sim import SimulationError, run_scenario, write_outputs

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("vectorthrust")

_DEFAULT_SCENARIO = {"fly": "fly_forms", "crawl": "crawl", "ranges": "fly_forms", "sweep": "fly_forms"}


def _load(args, command: str) -> ScenarioConfig:
    path = Path(args.config) if args.config else bundled_scenario(_DEFAULT_SCENARIO[command])
    config = load_config(path)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    if getattr(args, "cycles", None) is not None:
        if args.cycles < 1:
            raise ConfigError("cycles", "must be at least 1")
        updates["cycles"] = args.cycles
    if getattr(args, "no_interference", False):
        updates["interference"] = dataclasses.replace(config.interference, enabled=False)
    if command == "fly":
        updates["mode"] = "flight"
    elif command == "crawl":
        updates["mode"] = "crawl"
    return dataclasses.replace(config, **updates) if updates else config


def _run_one(config: ScenarioConfig, stem: str) -> tuple[int, dict]:
    try:
        traj = run_scenario(config)
    except (SimulationError, AllocationError, InterferenceError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME, {"error": str(exc)}
    summary = write_outputs(traj, config.robot, config.output_dir, stem)
    return (EXIT_RUNTIME if summary["violations"] else EXIT_OK), summary


def cmd_fly(args) -> int:
    if args.dump_defaults:
        print(dump_config(ScenarioConfig(mode="flight")))
        return EXIT_OK
    config = _load(args, "fly")
    code, summary = _run_one(config, "fly")
    _report(summary)
    return code


def cmd_crawl(args) -> int:
    if args.dump_defaults:
        print(dump_config(ScenarioConfig(mode="crawl")))
        return EXIT_OK
    config = _load(args, "crawl")
    code, summary = _run_one(config, "crawl")
    _report(summary)
    return code


def _parse_q(text: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError("q", "expected comma-separated numbers") from exc
    if len(values) != N_JOINTS:
        raise ConfigError("q", f"expected {N_JOINTS} joint angles, got {len(values)}")
    return np.array(values)


def cmd_ranges(args) -> int:
    config = _load(args, "ranges")
    if args.q is not None:
        q = _parse_q(args.q)
    else:
        q = form_angles(args.form)
    ic = config.interference
    try:
        ranges = valid_range(
            config.robot, q, ic.downwash(), alpha_threshold=ic.alpha_threshold, theta_threshold=ic.theta_threshold
        )
    except InterferenceError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME
    table = {"q": q.tolist(), "ranges": [r.to_dict() for r in ranges], "restricted": [r.rotor for r in ranges if r.restricted]}
    text = json.dumps(table, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def _sweep_job(job):
    config, stem = job
    return _run_one(config, stem)


def cmd_sweep(args) -> int:
    config = _load(args, "sweep")
    try:
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError as exc:
        raise ConfigError("seeds", "expected comma-separated integers") from exc
    out = Path(config.output_dir)
    jobs = [(dataclasses.replace(config, seed=s, output_dir=str(out / f"seed_{s}")), config.mode) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    for seed, (code, summary) in zip(seeds, results):
        row = {"seed": seed, "exit": code}
        for key in ("rmse_position", "rmse_orientation", "thrust_ratio", "violations", "final_displacement", "error"):
            if key in summary:
                row[key] = summary[key]
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2))
    print(json.dumps(rows, indent=2))
    return max(code for code, _ in results)


def _report(summary: dict) -> None:
    brief = {k: v for k, v in summary.items() if k != "events"}
    print(json.dumps(brief, indent=2))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vectorthrust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, out=True):
        p.add_argument("--config", help="scenario JSON (defaults to the bundled scenario)")
        if out:
            p.add_argument("--out", help="output directory")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("fly", help="closed-loop flight through the form sequence")
    common(p)
    p.add_argument("--no-interference", action="store_true", help="drop the downwash constraints")
    p.add_argument("--dump-defaults", action="store_true", help="print the default config and exit")
    p.set_defaults(func=cmd_fly)

    p = sub.add_parser("crawl", help="crawl gait on flat ground")
    common(p)
    p.add_argument("--cycles", type=int)
    p.add_argument("--dump-defaults", action="store_true", help="print the default config and exit")
    p.set_defaults(func=cmd_crawl)

    p = sub.add_parser("ranges", help="vectoring ranges for one joint configuration")
    common(p, seed=False)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--form", type=int, choices=(1, 2, 3), default=3)
    group.add_argument("--q", help="16 comma-separated joint angles in rad")
    p.set_defaults(func=cmd_ranges)

    p = sub.add_parser("sweep", help="run one scenario over several seeds")
    common(p, seed=False)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-interference", action="store_true")
    p.add_argument("--cycles", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
