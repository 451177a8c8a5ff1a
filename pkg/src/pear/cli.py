"""Command-line front end.

    pear run <scenario> [--mode M] [--seed N] [--until N] [--out DIR]
    pear validate <scenario>
    pear traceback <run_dir> --egress R --origin A
    pear dump-tables <run_dir> [--router R]

`run` writes four artifacts into the output directory: trace.txt (one line
per link crossing), verdicts.txt (one line per injected datagram),
metrics.txt (sorted key=value counters), and run.meta (what exactly ran).
Seed precedence is: --seed flag, then the PEAR_SEED environment variable,
then the scenario's own seed directive.

`traceback` and `dump-tables` never read state from the artifacts; they
re-simulate from the scenario recorded in run.meta (verified by content
hash) and then inspect the resulting tables.  Artifacts stay free of any
router's secret shift that way: there is nothing to leak.

Exit codes: 0 success, 1 validation or input failure, 2 an internal
invariant was violated (a bug, not a bad input).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

from .addressing import parse_address
from .datapath import Mode
from .scenario import Scenario, ScenarioError, load_scenario
from .simnet import (
    InvariantError,
    World,
    build_world,
    check_invariants,
    metrics,
    run,
    serialize_metrics,
    serialize_trace,
    serialize_verdicts,
    traceback,
)

META_NAME = "run.meta"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load(path: str) -> Scenario | None:
    try:
        return load_scenario(path)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
    except ScenarioError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
    return None


def _apply_overrides(sc: Scenario, args: argparse.Namespace) -> None:
    if args.mode is not None:
        sc.mode = Mode(args.mode)
    if args.seed is not None:
        sc.seed = args.seed
    elif os.environ.get("PEAR_SEED"):
        try:
            sc.seed = int(os.environ["PEAR_SEED"])
        except ValueError:
            raise ScenarioError([f"PEAR_SEED={os.environ['PEAR_SEED']!r} is not an integer"])
    if args.until is not None:
        sc.limits.until = args.until


def _simulate(sc: Scenario) -> tuple[World, int]:
    world = build_world(sc)
    try:
        run(world)
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return world, 2
    problems = check_invariants(world)
    if problems:
        for p in problems:
            print(f"invariant violated: {p}", file=sys.stderr)
        return world, 2
    return world, 0


def cmd_run(args: argparse.Namespace) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return 1
    try:
        _apply_overrides(sc, args)
    except ScenarioError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
        return 1
    world, status = _simulate(sc)
    if status:
        return status

    out_dir = Path(args.out) if args.out else Path(Path(args.scenario).stem + ".out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.txt").write_text(serialize_trace(world))
    (out_dir / "verdicts.txt").write_text(serialize_verdicts(world))
    report = serialize_metrics(metrics(world))
    (out_dir / "metrics.txt").write_text(report)
    scenario_path = Path(args.scenario).resolve()
    (out_dir / META_NAME).write_text(
        f"scenario={scenario_path}\n"
        f"sha256={_sha256(scenario_path)}\n"
        f"mode={sc.mode.value}\n"
        f"seed={sc.seed}\n"
        f"until={sc.limits.until}\n"
    )
    print(f"out={out_dir}")
    sys.stdout.write(report)
    if world.truncated:
        print("note: events remained past the horizon; verdicts may be partial")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return 1
    for warning in sc.plan_warnings:
        print(f"warning: {warning}")
    print(f"ok: {len(sc.routers)} routers, {len(sc.links)} links, "
          f"{len(sc.prefixes)} prefixes, {len(sc.hosts)} hosts")
    return 0


def _resimulate(run_dir: str) -> tuple[World, int]:
    meta_path = Path(run_dir) / META_NAME
    try:
        meta = dict(
            line.split("=", 1)
            for line in meta_path.read_text().splitlines()
            if "=" in line
        )
    except OSError as exc:
        print(f"cannot read {meta_path}: {exc}", file=sys.stderr)
        return World(Mode.TFR, 0, None), 1  # type: ignore[arg-type]
    scenario_path = Path(meta["scenario"])
    if not scenario_path.exists():
        print(f"scenario {scenario_path} is gone", file=sys.stderr)
        return World(Mode.TFR, 0, None), 1  # type: ignore[arg-type]
    if _sha256(scenario_path) != meta.get("sha256"):
        print(f"scenario {scenario_path} changed since the run", file=sys.stderr)
        return World(Mode.TFR, 0, None), 1  # type: ignore[arg-type]
    sc = _load(str(scenario_path))
    if sc is None:
        return World(Mode.TFR, 0, None), 1  # type: ignore[arg-type]
    sc.mode = Mode(meta["mode"])
    sc.seed = int(meta["seed"])
    sc.limits.until = int(meta["until"])
    world, status = _simulate(sc)
    return world, status


def cmd_traceback(args: argparse.Namespace) -> int:
    world, status = _resimulate(args.run_dir)
    if status:
        return status
    try:
        origin = parse_address(args.origin)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if args.egress not in world.routers:
        print(f"unknown router {args.egress!r}", file=sys.stderr)
        return 1
    result = traceback(world, args.egress, origin)
    print(f"origin={result.origin} egress={result.egress}")
    print("path=" + " ".join(result.path))
    if result.host is not None:
        print(f"source=host:{result.host}")
        return 0
    if result.untrusted is not None:
        print(f"source=untrusted:{result.untrusted}")
        return 0
    print(f"failed={result.failure}")
    return 1


def cmd_dump_tables(args: argparse.Namespace) -> int:
    world, status = _resimulate(args.run_dir)
    if status:
        return status
    if args.router is not None and args.router not in world.routers:
        print(f"unknown router {args.router!r}", file=sys.stderr)
        return 1
    for rid in sorted(world.routers):
        if args.router is not None and rid != args.router:
            continue
        state = world.routers[rid]
        print(f"router={rid}")
        for fe in state.fib.entries():
            print(f"fib {fe.prefix} next={fe.next_hop} dist={fe.distance}")
        for he in state.hrt.entries():
            print(f"hrt hip={he.hip} next={he.next_hop} map={he.map} last={he.last_used}")
        for de in state.drt.entries():
            print(f"drt origin={de.origin} hip={de.hip} last={de.last_used}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pear",
        description="Simulate a loop-free, address-swapping datagram forwarding plane.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write run artifacts")
    p_run.add_argument("scenario")
    p_run.add_argument("--mode", choices=[m.value for m in Mode])
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--until", type=int)
    p_run.add_argument("--out", help="output directory (default: <scenario stem>.out)")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario without running it")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    p_tb = sub.add_parser("traceback", help="walk a delivered origin ID back to its source")
    p_tb.add_argument("run_dir")
    p_tb.add_argument("--egress", required=True, help="router where the origin ID was seen")
    p_tb.add_argument("--origin", required=True, help="the origin ID (decimal or dotted)")
    p_tb.set_defaults(func=cmd_traceback)

    p_dump = sub.add_parser("dump-tables", help="print per-router FIB/HRT/DRT after a run")
    p_dump.add_argument("run_dir")
    p_dump.add_argument("--router")
    p_dump.set_defaults(func=cmd_dump_tables)

    args = parser.parse_args(argv)
    return args.func(args)


def app() -> None:
    sys.exit(main())


if __name__ == "__main__":
    app()
