"""``voxbridge-bench``: run the planner and executor benchmark suites."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .bench import DENSITIES, EXECUTORS, PLANNERS, RunConfig, emit_results, run_benchmark


def _csv_list(allowed):
    def parse(text: str):
        items = tuple(s.strip() for s in text.split(",") if s.strip())
        bad = [s for s in items if s not in allowed]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {','.join(allowed)}")
        return items
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxbridge-bench", description=__doc__)
    p.add_argument("--config", type=Path, help="JSON file with (a subset of) the run configuration")
    p.add_argument("--density", type=_csv_list(DENSITIES), help="comma list, default all")
    p.add_argument("--tasks", type=int, help="tasks per density")
    p.add_argument("--planners", type=_csv_list(PLANNERS), help="comma list, default all")
    p.add_argument("--executors", type=_csv_list(EXECUTORS), help="comma list")
    p.add_argument("--no-planners", action="store_true", help="skip the planner table")
    p.add_argument("--no-executors", action="store_true", help="skip the executor table")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--dump-trajectories", action="store_true", help="write traj/<task_id>-<solver>.txt")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    doc = json.loads(args.config.read_text()) if args.config else {}
    cfg = RunConfig.from_dict(doc)
    over = {}
    if args.density:
        over["densities"] = args.density
    if args.tasks is not None:
        over["tasks_per_density"] = args.tasks
    if args.planners:
        over["planners"] = args.planners
    if args.executors:
        over["executors"] = args.executors
    if args.seed is not None:
        over["base_seed"] = args.seed
    if args.out is not None:
        over["output_dir"] = str(args.out)
    return dataclasses.replace(cfg, **over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"voxbridge-bench: bad configuration: {exc}", file=sys.stderr)
        return 2
    planners = () if args.no_planners else None
    executors = () if args.no_executors else None
    if planners == () and executors == ():
        print("voxbridge-bench: nothing to run", file=sys.stderr)
        return 2
    result = run_benchmark(cfg, planners=planners, executors=executors,
                           keep_trajectories=args.dump_trajectories)
    for path in emit_results(result):
        if path.suffix == ".csv":
            print(path)
            print(path.read_text(), end="")
    skipped = sum(1 for t in result.tasks if t.skipped)
    if skipped:
        print(f"{skipped} task(s) skipped, see meta.txt", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
