"""Recursive solution refinement with per-round temperature strategies.

A run executes the proposer once per scheduled temperature. Each round's
prompt embeds the best feasible solutions found in earlier rounds as
exemplars, so later (usually colder) rounds refine what earlier rounds
explored. Five named strategies are supported:

    fall            1.0 -> 0.1 -> 0.01
    rise            0.01 -> 0.1 -> 1.0
    rise_then_fall  0.01 -> 1.0 -> 0.01
    constant        0.01 x 3
    single          0.01
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .core import Assignment, DispatchError, DispatchInstance, evaluate_objective, validate
from .prompt import SolutionParseError, render_prompt
from .proposer import ProposerError, ProposerRequest
from . import prompt as prompt_mod


class ScheduleConfigError(DispatchError):
    pass


@dataclass(frozen=True)
class TemperatureSchedule:
    name: str
    temperatures: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.temperatures:
            raise ScheduleConfigError("schedule needs at least one temperature")


SCHEDULES: dict[str, tuple[float, ...]] = {
    "fall": (1.0, 0.1, 0.01),
    "rise": (0.01, 0.1, 1.0),
    "rise_then_fall": (0.01, 1.0, 0.01),
    "constant": (0.01, 0.01, 0.01),
    "single": (0.01,),
}

SCHEDULE_NAMES = tuple(SCHEDULES)


def make_schedule(name: str) -> TemperatureSchedule:
    try:
        return TemperatureSchedule(name, SCHEDULES[name])
    except KeyError:
        raise ScheduleConfigError(
            f"unknown schedule {name!r}; expected one of {', '.join(SCHEDULES)}") from None


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    temperature: float
    prompt_sha256: str
    raw_text: str
    parsed: bool
    parse_error: Optional[str]
    feasible: Optional[bool]
    objective: Optional[float]
    eval_gap: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "temperature": self.temperature,
            "prompt_sha256": self.prompt_sha256,
            "raw_text": self.raw_text,
            "parsed": self.parsed,
            "parse_error": self.parse_error,
            "feasible": self.feasible,
            "objective": self.objective,
            "eval_gap": self.eval_gap,
        }


@dataclass(frozen=True)
class ScheduleRun:
    instance_ref: str
    schedule: TemperatureSchedule
    rounds: tuple[RoundRecord, ...]
    best: Optional[tuple[Assignment, float, Optional[float]]]  # solution, objective, gap
    error: Optional[str] = None

    @property
    def best_objective(self) -> Optional[float]:
        return self.best[1] if self.best else None

    def to_json_dict(self) -> dict:
        doc = {
            "instance_ref": self.instance_ref,
            "schedule": {"name": self.schedule.name,
                         "temperatures": list(self.schedule.temperatures)},
            "rounds": [r.to_json_dict() for r in self.rounds],
            "error": self.error,
        }
        if self.best:
            sol, obj, gap = self.best
            doc["best"] = {**sol.to_json_dict(), "objective": obj, "eval_gap": gap}
        else:
            doc["best"] = None
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def derive_round_seed(seed: int, temperature: float) -> int:
    """Per-round proposer seed, keyed by temperature rather than round index.

    Rounds at the same temperature draw from the same stream across
    schedules, so a longer schedule's candidate pool always contains what a
    shorter schedule at the same temperatures would have produced; repeated
    same-temperature rounds within one run still diverge through the
    exemplar tabu.
    """
    temp_key = int(round(temperature * 1_000_000_000))
    return (seed * 1_000_003 + temp_key) & 0x7FFFFFFF


def _gap_or_trivial(objective: float, optimal_ref: Optional[float]) -> float:
    # without a known optimum, fall back to the trivial lower bound 0
    if objective <= 0:
        return 0.0
    if optimal_ref is None:
        return 1.0
    return max(0.0, (objective - optimal_ref) / objective)


def _pool_key(kv: tuple[Assignment, float]):
    sol, obj = kv
    return (obj, sol.sorted_x(), sol.sorted_y(), sol.sorted_z())


def run_schedule(inst: DispatchInstance, sched: TemperatureSchedule, proposer,
                 optimal_ref: Optional[float] = None, seed: int = 0,
                 max_exemplars: int = 3) -> ScheduleRun:
    """Drive one refinement session; never raises on per-round failures."""
    pool: dict[Assignment, float] = {}  # feasible solutions found so far
    rounds: list[RoundRecord] = []
    error: Optional[str] = None

    for t, temperature in enumerate(sched.temperatures):
        ranked = sorted(pool.items(), key=_pool_key)
        exemplars = [
            (sol, _gap_or_trivial(obj, optimal_ref), obj)
            for sol, obj in ranked[:max_exemplars]
        ]
        bundle = render_prompt(inst, exemplars)
        req = ProposerRequest(prompt=bundle, temperature=temperature,
                              seed=derive_round_seed(seed, temperature), round_index=t)
        try:
            resp = proposer.propose(req)
        except ProposerError as exc:
            error = f"round {t}: {exc}"
            break

        parsed = False
        parse_error: Optional[str] = None
        feasible: Optional[bool] = None
        objective: Optional[float] = None
        gap: Optional[float] = None
        try:
            parsed_solution = prompt_mod.parse_solution(resp.text, inst)
            parsed = True
        except SolutionParseError as exc:
            parse_error = str(exc)
        if parsed:
            report = validate(inst, parsed_solution.assignment)
            feasible = report.feasible
            if feasible:
                objective = evaluate_objective(inst, parsed_solution.assignment)
                if optimal_ref is not None:
                    gap = _gap_or_trivial(objective, optimal_ref)
                pool.setdefault(parsed_solution.assignment, objective)

        rounds.append(RoundRecord(
            round_index=t, temperature=temperature, prompt_sha256=bundle.sha256(),
            raw_text=resp.text, parsed=parsed, parse_error=parse_error,
            feasible=feasible, objective=objective, eval_gap=gap))

    best = None
    if pool:
        best_sol, best_obj = min(pool.items(), key=_pool_key)
        best_gap = _gap_or_trivial(best_obj, optimal_ref) if optimal_ref is not None else None
        best = (best_sol, best_obj, best_gap)
    return ScheduleRun(instance_ref=inst.instance_id, schedule=sched,
                       rounds=tuple(rounds), best=best, error=error)
