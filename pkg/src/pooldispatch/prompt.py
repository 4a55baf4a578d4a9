"""Render dispatch prompts and parse proposer answers back into assignments.

The template lives in ``assets/prompt_template.txt`` so wording edits do not
touch code; rendering only substitutes the ``<<...>>`` slots (model LaTeX,
the three coordinate sections, the exemplar blocks).

Coordinates are displayed rounded to two decimals (Python's round-half-even
float formatting); all arithmetic elsewhere keeps full precision.

Parsing is tolerant of chain-of-thought output: the *last* group of x/y/z
lines in the text wins, index tokens may carry ``EMPTY_`` / ``USER_`` /
``ONE_REQUEST_`` prefixes, and a missing line means an empty set.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .core import Assignment, DispatchError, DispatchInstance, validate

# exemplar entry: (assignment, reported gap, objective value)
Exemplar = tuple[Assignment, float, float]


class RenderError(DispatchError):
    """Prompt rendering refused (e.g. exemplar infeasible for the instance)."""


class SolutionParseError(DispatchError):
    """Proposer text contained no parsable solution lines or bad tokens."""


class SolutionBoundsError(SolutionParseError):
    """Parsed solution references an index outside the instance."""


def _load_asset(name: str) -> str:
    return resources.files("pooldispatch").joinpath("assets", name).read_text(encoding="utf-8")


def _coordinate_section(label: str, points) -> str:
    if not points:
        return f"{label}:"
    items = ", ".join(f"({i}) ({pt.x:.2f}, {pt.y:.2f})" for i, pt in enumerate(points))
    return f"{label}: {items},"


def _format_gap(gap: float) -> str:
    return str(round(gap, 4))


def render_solution_lines(sol: Assignment) -> tuple[str, str, str]:
    """The three answer lines of a solution; an empty set yields an empty line."""
    x_line = "x: " + " ".join(f"({i}, {j})" for i, j in sol.sorted_x()) if sol.x_pairs else ""
    y_line = "y: " + " ".join(f"({i}, {j}, {k})" for i, j, k in sol.sorted_y()) if sol.y_triples else ""
    z_line = "z: " + " ".join(f"({i}, {j})" for i, j in sol.sorted_z()) if sol.z_pairs else ""
    return x_line, y_line, z_line


def render_exemplar_block(sol: Assignment, gap: float, objective: float) -> str:
    x_line, y_line, z_line = render_solution_lines(sol)
    return (
        "one of solutions starts:\n"
        f"{x_line}\n{y_line}\n{z_line}\n"
        f"gap: {_format_gap(gap)}, objective value: {objective:.2f}\n"
        "one of solutions ends"
    )


@dataclass(frozen=True)
class PromptBundle:
    full_text: str
    instance_ref: str
    instance: DispatchInstance
    exemplars_included: tuple[Exemplar, ...]

    def sha256(self) -> str:
        return hashlib.sha256(self.full_text.encode("utf-8")).hexdigest()

    def sidecar_json_dict(self) -> dict:
        return {
            "instance": self.instance.to_json_dict(),
            "prompt_sha256": self.sha256(),
            "exemplars": [
                {**sol.to_json_dict(), "gap": gap, "objective": obj}
                for sol, gap, obj in self.exemplars_included
            ],
        }


@dataclass(frozen=True)
class ParsedSolution:
    assignment: Assignment
    raw_lines: tuple[str, ...]


def render_prompt(inst: DispatchInstance,
                  exemplars: Sequence[Exemplar] = ()) -> PromptBundle:
    """Fill the prompt template for one instance with optional exemplar solutions."""
    for sol, _, _ in exemplars:
        report = validate(inst, sol)
        if not report.feasible:
            raise RenderError(
                f"exemplar invalid for instance {inst.instance_id}: {report.violations[0][2]}")

    template = _load_asset("prompt_template.txt")
    blocks = "\n".join(
        "\n" + render_exemplar_block(sol, gap, obj) for sol, gap, obj in exemplars)
    text = (
        template
        .replace("<<MODEL_LATEX>>", _load_asset("model.tex").rstrip("\n"))
        .replace("<<EMPTY_SECTION>>", _coordinate_section("EMPTY VEHICLES", inst.empty_vehicles))
        .replace("<<ONE_ORDER_SECTION>>", _coordinate_section("ONE ORDER VEHICLES", inst.one_order_vehicles))
        .replace("<<USERS_SECTION>>", _coordinate_section("USERS", inst.users))
        .replace("<<EXEMPLARS>>", blocks)
    )
    return PromptBundle(full_text=text, instance_ref=inst.instance_id,
                        instance=inst, exemplars_included=tuple(exemplars))


def write_prompt(bundle: PromptBundle, path_base: Path) -> tuple[Path, Path]:
    """Persist a prompt as <base>.txt plus a structured <base>.json sidecar."""
    txt = path_base.with_suffix(".txt")
    sidecar = path_base.with_suffix(".json")
    txt.write_text(bundle.full_text, encoding="utf-8")
    sidecar.write_text(
        json.dumps(bundle.sidecar_json_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    return txt, sidecar


_LINE_RE = re.compile(r"^\s*([xyz])\s*:\s*(.*?)\s*$")
_GROUP_RE = re.compile(r"\(([^()]*)\)")
_PREFIX_RE = re.compile(r"^(?:EMPTY_|USER_|ONE_REQUEST_|ONE_ORDER_)", re.IGNORECASE)


def _parse_index(token: str) -> int:
    stripped = _PREFIX_RE.sub("", token.strip())
    try:
        return int(stripped)
    except ValueError:
        raise SolutionParseError(f"non-integer index token: {token.strip()!r}") from None


def _last_solution_group(lines: list[str]) -> dict[str, str]:
    """The final run of x/y/z lines (blank lines inside the run are allowed)."""
    tagged = [_LINE_RE.match(line) for line in lines]
    last = max((idx for idx, match in enumerate(tagged) if match), default=None)
    if last is None:
        raise SolutionParseError("no x/y/z solution lines found")
    start = last
    while start > 0:
        prev = lines[start - 1]
        if tagged[start - 1] or not prev.strip():
            start -= 1
        else:
            break
    group: dict[str, str] = {}
    for idx in range(start, last + 1):
        match = tagged[idx]
        if match:
            group[match.group(1)] = match.group(2)  # later line of same kind wins
    return group


def parse_solution(text: str, inst: DispatchInstance) -> ParsedSolution:
    """Extract the final x/y/z answer from proposer text and bounds-check it."""
    group = _last_solution_group(text.splitlines())
    raw_lines = tuple(f"{kind}: {body}" for kind, body in sorted(group.items()))

    sets: dict[str, list[tuple[int, ...]]] = {"x": [], "y": [], "z": []}
    arity = {"x": 2, "y": 3, "z": 2}
    for kind, body in group.items():
        for inner in _GROUP_RE.findall(body):
            tokens = [t for t in inner.split(",")]
            if len(tokens) != arity[kind]:
                raise SolutionParseError(
                    f"{kind} entry ({inner}) has {len(tokens)} fields, expected {arity[kind]}")
            sets[kind].append(tuple(_parse_index(t) for t in tokens))

    limits = {"x": inst.m, "y": inst.m, "z": inst.n}
    for kind, entries in sets.items():
        for entry in entries:
            i = entry[0]
            if not 0 <= i < limits[kind]:
                raise SolutionBoundsError(
                    f"{kind} entry {entry}: vehicle index {i} out of bounds")
            for u in entry[1:]:
                if not 0 <= u < inst.p:
                    raise SolutionBoundsError(
                        f"{kind} entry {entry}: user index {u} out of bounds")

    for i, j, k in sets["y"]:
        if j == k:
            raise SolutionParseError(f"y entry ({i}, {j}, {k}) repeats user {j}")

    assignment = Assignment(
        x_pairs=frozenset(sets["x"]),
        y_triples=frozenset(sets["y"]),
        z_pairs=frozenset(sets["z"]),
    )
    return ParsedSolution(assignment=assignment, raw_lines=raw_lines)
