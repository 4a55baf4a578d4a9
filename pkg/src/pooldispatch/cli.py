"""Command-line entry point.

Subcommands: generate, simulate, solve, prompt, run, ablate. All artifacts go
under ``--out DIR`` with a ``run_manifest.json`` at its root (written before
long work starts, updated with the outcome at exit). Every command is
deterministic for identical flags and seed, except the remote proposer.

Exit codes: 0 success, 2 usage/missing input, 3 solver aborted on limits,
4 remote proposer failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .core import DispatchInstance, random_instance
from .model import build_model
from .proposer import (
    MockProposer,
    ProposerError,
    RemoteProposer,
    StochasticProposer,
)
from .prompt import render_prompt, write_prompt
from .schedule import SCHEDULE_NAMES, make_schedule, run_schedule
from .sim import (
    RoadNetwork,
    SimConfig,
    generate_synthetic_orders,
    make_fleet,
    run_simulation,
    write_snapshots,
)
from .solver import (
    STATUS_ABORTED,
    STATUS_OPTIMAL,
    SolveLimits,
    first_k_incumbents,
    solve_exact,
)
from . import evaluation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER_ABORT = 3
EXIT_REMOTE_FAILURE = 4

DEFAULT_BOX = (85.0, 101.5, 28.0, 45.0)


class _Manifest:
    def __init__(self, out_dir: Path, args: argparse.Namespace):
        self.path = out_dir / "run_manifest.json"
        self.doc = {
            "command": args.command,
            "argv": sys.argv[1:],
            "config": {k: v for k, v in sorted(vars(args).items())
                       if k != "func" and _is_jsonable(v)},
            "seed": getattr(args, "seed", None),
            "version": __version__,
            "started": _now(),
            "finished": None,
            "outcome": "running",
            "artifacts": [],
        }
        self.write()

    def artifact(self, path: Path) -> Path:
        self.doc["artifacts"].append(str(path))
        return path

    def finish(self, outcome: str) -> None:
        self.doc["finished"] = _now()
        self.doc["outcome"] = outcome
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.doc, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _is_jsonable(value) -> bool:
    return isinstance(value, (str, int, float, bool, type(None), list, tuple))


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_instances(path: Path) -> list[DispatchInstance]:
    if not path.exists():
        raise FileNotFoundError(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return [DispatchInstance.from_json(line) for line in text.splitlines() if line.strip()]
    return [DispatchInstance.from_json(text)]


def _sample_instances(seed: int, count: int, size: int,
                      box=DEFAULT_BOX) -> list[DispatchInstance]:
    rng = random.Random(seed)
    return [random_instance(rng, size, size, size,
                            box=box, instance_id=f"inst-{seed}-{idx:05d}")
            for idx in range(count)]


# -- subcommands -------------------------------------------------------------

def cmd_generate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    manifest = _Manifest(out, args)
    instances = _sample_instances(args.seed, args.count, args.size)
    path = manifest.artifact(out / "instances.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")
    manifest.finish("ok")
    print(f"wrote {len(instances)} instances to {path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    cfg_values = _read_sim_config(args)
    manifest = _Manifest(out, args)
    net = RoadNetwork(width=args.grid_width, height=args.grid_height)
    fleet = make_fleet(net, args.vehicles, seed=args.seed)
    orders = generate_synthetic_orders(
        seed=args.seed + 1, count=args.orders,
        region=(0.0, float(net.width - 1), 0.0, float(net.height - 1)),
        time_span=args.time_span)
    result = run_simulation(net, orders, fleet, cfg_values,
                            run_id=f"sim-{args.seed}")
    path = manifest.artifact(out / "snapshots.jsonl")
    write_snapshots(result.snapshots, path)
    summary = {
        "snapshots": len(result.snapshots),
        "matched_orders": result.matched_orders,
        "completed_orders": result.completed_orders,
        "rejected_orders": result.rejected_orders,
        "infeasible_rounds": result.infeasible_rounds,
    }
    summary_path = manifest.artifact(out / "sim_summary.json")
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n",
                            encoding="utf-8")
    manifest.finish("ok")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _read_sim_config(args: argparse.Namespace) -> SimConfig:
    # config file values, overridden by any explicitly supplied CLI flag
    values = {"batch_window": 30.0, "vehicle_speed": 1.0, "max_time": 100_000.0}
    if args.config:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
        for key in values:
            if key in doc:
                values[key] = float(doc[key])
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return SimConfig(**values)


def cmd_solve(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    manifest = _Manifest(out, args)
    try:
        instances = _load_instances(Path(args.infile))
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc}", file=sys.stderr)
        manifest.finish("missing-input")
        return EXIT_USAGE
    limits = SolveLimits(max_nodes=args.max_nodes, max_seconds=args.max_seconds)
    aborted = False

    def solve_one(inst: DispatchInstance):
        mip, _ = build_model(inst)
        return inst, solve_exact(mip, limits)

    results = _map_jobs(solve_one, instances, args.jobs)
    for inst, result in results:
        path = manifest.artifact(out / f"solve_{inst.instance_id}.json")
        path.write_text(result.to_json() + "\n", encoding="utf-8")
        if result.status == STATUS_ABORTED:
            aborted = True
    manifest.finish("aborted" if aborted else "ok")
    print(f"solved {len(results)} instances "
          f"({sum(1 for _, r in results if r.status == STATUS_OPTIMAL)} optimal)")
    return EXIT_SOLVER_ABORT if aborted else EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    manifest = _Manifest(out, args)
    try:
        instances = _load_instances(Path(args.infile))
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc}", file=sys.stderr)
        manifest.finish("missing-input")
        return EXIT_USAGE
    for inst in instances:
        exemplars = []
        if args.exemplars > 0:
            mip, _ = build_model(inst)
            result = solve_exact(mip)
            for inc in first_k_incumbents(result, args.exemplars):
                exemplars.append((inc.solution, inc.solver_gap, inc.objective))
        bundle = render_prompt(inst, exemplars)
        txt, sidecar = write_prompt(bundle, out / f"prompt_{inst.instance_id}")
        manifest.artifact(txt)
        manifest.artifact(sidecar)
    manifest.finish("ok")
    print(f"wrote {len(instances)} prompts to {out}")
    return EXIT_OK


def _make_proposer(args: argparse.Namespace):
    if args.proposer == "stochastic":
        return StochasticProposer()
    if args.proposer == "mock":
        if not args.mock_fixtures:
            raise ProposerError("--mock-fixtures DIR is required with --proposer mock")
        return MockProposer.from_directory(Path(args.mock_fixtures))
    return RemoteProposer.from_env()


def cmd_run(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    manifest = _Manifest(out, args)
    try:
        instances = _load_instances(Path(args.infile))
        proposer = _make_proposer(args)
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc}", file=sys.stderr)
        manifest.finish("missing-input")
        return EXIT_USAGE
    except ProposerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.finish("proposer-config")
        return EXIT_USAGE
    sched = make_schedule(args.schedule)
    remote_failed = False
    for inst in instances:
        optimal_ref: Optional[float] = None
        if not args.no_optimal:
            mip, _ = build_model(inst)
            solve = solve_exact(mip)
            if solve.status == STATUS_OPTIMAL:
                optimal_ref = solve.optimal_objective
        run = run_schedule(inst, sched, proposer, optimal_ref=optimal_ref,
                           seed=args.seed)
        if run.error and args.proposer == "remote":
            remote_failed = True
        path = manifest.artifact(out / f"run_{inst.instance_id}.json")
        path.write_text(run.to_json() + "\n", encoding="utf-8")
        best = f"{run.best_objective:.2f}" if run.best else "none"
        print(f"{inst.instance_id}: schedule={args.schedule} best={best}")
    manifest.finish("remote-failure" if remote_failed else "ok")
    return EXIT_REMOTE_FAILURE if remote_failed else EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    manifest = _Manifest(out, args)
    if args.infile:
        try:
            instances = _load_instances(Path(args.infile))
        except FileNotFoundError as exc:
            print(f"error: input file not found: {exc}", file=sys.stderr)
            manifest.finish("missing-input")
            return EXIT_USAGE
    else:
        instances = _sample_instances(args.seed, args.count, args.size)

    if args.proposer == "stochastic":
        def factory(schedule_name: str, instance_index: int):
            return StochasticProposer()
    elif args.proposer == "mock":
        fixtures_dir = Path(args.mock_fixtures) if args.mock_fixtures else None
        if fixtures_dir is None:
            print("error: --mock-fixtures DIR is required with --proposer mock",
                  file=sys.stderr)
            manifest.finish("proposer-config")
            return EXIT_USAGE

        def factory(schedule_name: str, instance_index: int):
            return MockProposer.from_directory(fixtures_dir)
    else:
        def factory(schedule_name: str, instance_index: int):
            return RemoteProposer.from_env()

    limits = SolveLimits(max_nodes=args.max_nodes, max_seconds=args.max_seconds)
    result = evaluation.ablation_report(instances, factory, seed=args.seed,
                                        out_dir=out, solve_limits=limits)
    for name in ("ablation.csv", "scale_gaps.csv", "summary.json", "table.txt"):
        manifest.artifact(out / name)
    manifest.finish("errors" if result.errors else "ok")
    print(result.table_text(), end="")
    return EXIT_OK if result.errors == 0 else 1


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pooldispatch",
        description="Ride-pooling dispatch workbench: build and exactly solve "
                    "carpool matching MIPs, simulate dispatch rounds, render "
                    "prompts, and evaluate temperature-schedule refinement.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0, help="master random seed")

    p = sub.add_parser("generate", help="sample synthetic dispatch instances")
    common(p)
    p.add_argument("--count", type=int, default=100, help="number of instances")
    p.add_argument("--size", type=int, default=3,
                   help="set size s; each instance has s empty vehicles, "
                        "s one-order vehicles and s users")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run the grid ride-pooling simulator")
    common(p)
    p.add_argument("--vehicles", type=int, default=20, help="fleet size")
    p.add_argument("--orders", type=int, default=100, help="synthetic order count")
    p.add_argument("--grid-width", type=int, default=20)
    p.add_argument("--grid-height", type=int, default=20)
    p.add_argument("--time-span", type=float, default=600.0,
                   help="order arrival window in seconds")
    p.add_argument("--batch-window", dest="batch_window", type=float, default=None,
                   help="seconds between matching rounds (default 30)")
    p.add_argument("--vehicle-speed", dest="vehicle_speed", type=float, default=None,
                   help="grid edge units per second (default 1)")
    p.add_argument("--max-time", dest="max_time", type=float, default=None,
                   help="hard simulation time cap in seconds")
    p.add_argument("--config", default=None,
                   help="TOML config file; CLI flags override its values")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="exactly solve instances from JSON/JSONL")
    common(p)
    p.add_argument("--in", dest="infile", required=True,
                   help="instance .json or .jsonl file")
    p.add_argument("--max-nodes", type=int, default=10_000_000)
    p.add_argument("--max-seconds", type=float, default=60.0)
    p.add_argument("--jobs", type=int, default=1, help="parallel solves")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("prompt", help="render prompts (optionally with solver "
                                      "incumbents as exemplars)")
    common(p)
    p.add_argument("--in", dest="infile", required=True,
                   help="instance .json or .jsonl file")
    p.add_argument("--exemplars", type=int, default=0,
                   help="number of solver incumbents to embed")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("run", help="run one temperature schedule per instance")
    common(p)
    p.add_argument("--in", dest="infile", required=True,
                   help="instance .json or .jsonl file")
    p.add_argument("--schedule", choices=SCHEDULE_NAMES, default="fall")
    p.add_argument("--proposer", choices=("mock", "stochastic", "remote"),
                   default="stochastic")
    p.add_argument("--mock-fixtures", default=None,
                   help="directory of numbered .txt fixtures for the mock proposer")
    p.add_argument("--no-optimal", action="store_true",
                   help="skip the exact solve used for gap computation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="compare all five temperature schedules")
    common(p)
    p.add_argument("--in", dest="infile", default=None,
                   help="instance .jsonl file (default: sample --count instances)")
    p.add_argument("--count", type=int, default=50, help="sampled instance count")
    p.add_argument("--size", type=int, default=3, help="sampled instance set size")
    p.add_argument("--proposer", choices=("mock", "stochastic", "remote"),
                   default="stochastic")
    p.add_argument("--mock-fixtures", default=None)
    p.add_argument("--max-nodes", type=int, default=10_000_000)
    p.add_argument("--max-seconds", type=float, default=60.0)
    p.add_argument("--jobs", type=int, default=1, help="parallel instances")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProposerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
