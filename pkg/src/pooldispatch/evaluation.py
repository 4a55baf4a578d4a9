"""Gap metric, quality scoring, dataset splitting, and the ablation harness.

The gap of a feasible objective against the known optimum is
``(objective - optimal) / objective`` (0 when objective is 0). A schedule
"wins" an instance when its best gap is *strictly* smaller than the
reference gap: the best gap among the exact solver's first three incumbents.
Ties count as losses, as does producing no feasible solution at all.

The reference here is this package's own branch-and-bound incumbent trail;
report headers name it explicitly so scores are not mistaken for comparisons
against commercial solvers.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .core import DispatchError, DispatchInstance
from .model import build_model
from .schedule import (
    SCHEDULE_NAMES,
    ScheduleRun,
    make_schedule,
    run_schedule,
)
from .solver import (
    STATUS_OPTIMAL,
    SolveLimits,
    SolveResult,
    first_k_incumbents,
    solve_exact,
)

GAP_TOL = 1e-9
REFERENCE_INCUMBENTS = 3
SCALE_BUCKET_WIDTH = 5
REFERENCE_NAME = "in-repo branch-and-bound (first 3 incumbents)"

ABLATION_CSV_HEADER = ["instance_id", "scale", "schedule", "best_objective",
                       "optimal", "gap", "win", "error"]
SCALE_CSV_HEADER = ["scale", "proposer_gap", "reference_gap"]


class GapConsistencyError(DispatchError):
    """Objective below the supposed optimum: a solver or oracle bug."""


def eval_gap(objective: float, optimal: float) -> float:
    """(objective - optimal) / objective, with the zero-objective convention."""
    if objective < 0:
        raise ValueError("objective must be nonnegative")
    if objective < optimal - GAP_TOL:
        raise GapConsistencyError(
            f"objective {objective} is below the optimal value {optimal}")
    if objective == 0.0:
        return 0.0
    return max(0.0, (objective - optimal) / objective)


@dataclass(frozen=True)
class GapRecord:
    instance_ref: str
    proposer_best_gap: Optional[float]
    reference_gap: float
    scale: int


@dataclass(frozen=True)
class ScoreReport:
    schedule_name: str
    wins: tuple[bool, ...]
    average_score: float
    instance_count: int
    reference: str = REFERENCE_NAME


def reference_gap(result: SolveResult, optimal: float,
                  k: int = REFERENCE_INCUMBENTS) -> float:
    """Best gap among the solver's first k incumbents."""
    incumbents = first_k_incumbents(result, k)
    return min(eval_gap(inc.objective, optimal) for inc in incumbents)


def quality_score(runs: Sequence[tuple[ScheduleRun, SolveResult]],
                  schedule_name: str = "") -> ScoreReport:
    """Fraction of instances where the proposer's best gap beats the reference."""
    if not runs:
        raise ValueError("quality_score needs at least one run")
    wins: list[bool] = []
    for run, solve in runs:
        if solve.status != STATUS_OPTIMAL:
            raise ValueError(f"instance {run.instance_ref}: reference solve not optimal")
        optimal = solve.optimal_objective
        assert optimal is not None
        ref = reference_gap(solve, optimal)
        if run.best is None:
            wins.append(False)
            continue
        proposer = eval_gap(run.best[1], optimal)
        wins.append(proposer < ref)  # strict: ties are losses
    name = schedule_name or runs[0][0].schedule.name
    return ScoreReport(schedule_name=name, wins=tuple(wins),
                       average_score=sum(wins) / len(wins),
                       instance_count=len(wins))


def split_dataset(instances: Sequence[DispatchInstance], test_fraction: float,
                  seed: int) -> tuple[list[DispatchInstance], list[DispatchInstance]]:
    """Seeded shuffle, then carve off round(fraction * N) test instances."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    shuffled = list(instances)
    random.Random(seed).shuffle(shuffled)
    n_test = int(round(test_fraction * len(shuffled)))
    return shuffled[n_test:], shuffled[:n_test]


# proposer_factory(schedule_name, instance_index) -> object with .propose()
ProposerFactory = Callable[[str, int], object]


@dataclass(frozen=True)
class AblationRow:
    instance_id: str
    scale: int
    schedule: str
    best_objective: Optional[float]
    optimal: float
    gap: Optional[float]
    win: bool
    error: str = ""


@dataclass
class AblationResult:
    rows: list[AblationRow]
    scores: dict[str, float]          # schedule -> average score
    scale_rows: list[tuple[int, float, float]]  # bucket, mean proposer gap, mean ref gap
    errors: int

    def table_text(self) -> str:
        lines = [f"Average scores vs {REFERENCE_NAME}",
                 f"{'strategy':<16} {'average score':>13}"]
        for name, score in sorted(self.scores.items(), key=lambda kv: kv[1]):
            lines.append(f"{name:<16} {score:>13.3f}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps({"reference": REFERENCE_NAME, "scores": self.scores,
                           "instances": len({r.instance_id for r in self.rows}),
                           "errors": self.errors},
                          sort_keys=True, indent=2) + "\n"


def _derive_run_seed(seed: int, instance_index: int) -> int:
    # schedule-independent on purpose: rounds at equal temperature then share
    # their proposer stream across schedules, keeping comparisons paired
    return (seed * 2_000_003 + instance_index * 104_729 + 7) & 0x7FFFFFFF


def ablation_report(instances: Sequence[DispatchInstance],
                    proposer_factory: ProposerFactory, seed: int,
                    out_dir: Optional[Path] = None,
                    schedules: Sequence[str] = SCHEDULE_NAMES,
                    solve_limits: SolveLimits = SolveLimits(),
                    fig_schedule: str = "fall") -> AblationResult:
    """Run every schedule on every instance against the exact solver reference.

    Writes ``ablation.csv`` (per instance x schedule), ``scale_gaps.csv``
    (mean gaps of ``fig_schedule`` vs reference, bucketed by instance scale),
    ``summary.json`` and ``table.txt`` when ``out_dir`` is given.
    """
    if not instances:
        raise ValueError("ablation_report needs at least one instance")
    rows: list[AblationRow] = []
    per_schedule: dict[str, list[bool]] = {name: [] for name in schedules}
    scale_acc: dict[int, list[tuple[float, float]]] = {}
    errors = 0

    for inst_idx, inst in enumerate(instances):
        scale = inst.m + inst.n + inst.p
        mip, _ = build_model(inst)
        solve = solve_exact(mip, solve_limits)
        if solve.status != STATUS_OPTIMAL:
            errors += 1
            for name in schedules:
                rows.append(AblationRow(inst.instance_id, scale, name, None, 0.0,
                                        None, False, error=f"reference solve {solve.status}"))
            continue
        optimal = solve.optimal_objective
        assert optimal is not None
        ref = reference_gap(solve, optimal)
        for name in schedules:
            sched = make_schedule(name)
            proposer = proposer_factory(name, inst_idx)
            try:
                run = run_schedule(inst, sched, proposer, optimal_ref=optimal,
                                   seed=_derive_run_seed(seed, inst_idx))
            except DispatchError as exc:
                errors += 1
                rows.append(AblationRow(inst.instance_id, scale, name, None, optimal,
                                        None, False, error=str(exc)))
                per_schedule[name].append(False)
                continue
            if run.error:
                errors += 1
            if run.best is None:
                gap = None
                win = False
                best_obj = None
            else:
                best_obj = run.best[1]
                gap = eval_gap(best_obj, optimal)
                win = gap < ref
            per_schedule[name].append(win)
            rows.append(AblationRow(inst.instance_id, scale, name, best_obj,
                                    optimal, gap, win, error=run.error or ""))
            if name == fig_schedule and gap is not None:
                bucket = scale // SCALE_BUCKET_WIDTH * SCALE_BUCKET_WIDTH
                scale_acc.setdefault(bucket, []).append((gap, ref))

    scores = {name: (sum(w) / len(w) if w else 0.0)
              for name, w in per_schedule.items()}
    scale_rows = [
        (bucket,
         sum(g for g, _ in pairs) / len(pairs),
         sum(r for _, r in pairs) / len(pairs))
        for bucket, pairs in sorted(scale_acc.items())
    ]
    result = AblationResult(rows=rows, scores=scores, scale_rows=scale_rows,
                            errors=errors)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_ablation_csv(result, out_dir / "ablation.csv")
        _write_scale_csv(result, out_dir / "scale_gaps.csv")
        (out_dir / "summary.json").write_text(result.summary_json(), encoding="utf-8")
        (out_dir / "table.txt").write_text(result.table_text(), encoding="utf-8")
    return result


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def _write_ablation_csv(result: AblationResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_CSV_HEADER)
        for row in result.rows:
            writer.writerow([row.instance_id, row.scale, row.schedule,
                             _fmt(row.best_objective), _fmt(row.optimal),
                             _fmt(row.gap), int(row.win), row.error])


def _write_scale_csv(result: AblationResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCALE_CSV_HEADER)
        for bucket, pg, rg in result.scale_rows:
            writer.writerow([bucket, f"{pg:.6f}", f"{rg:.6f}"])
