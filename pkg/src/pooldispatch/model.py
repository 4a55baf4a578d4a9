"""Build the carpool MIP from a dispatch instance.

Variables are binary: x(i,j) assigns empty vehicle i to user j alone,
y(i,j,k) assigns empty vehicle i to pick up user j then user k (j != k),
z(i,j) assigns one-order vehicle i to user j. The constraint system is

* one equality row per user (covered exactly once),
* one <=1 row per empty vehicle (at most one x/y service),
* one <=1 row per one-order vehicle (at most one z service),

with every nonzero coefficient equal to 1, i.e. a set-partitioning core with
packing side constraints.

The published shape formula for the column count uses the full j x k grid
(m*p + m*p^2 + n*p); since k = j variables are structurally meaningless we
only create k != j columns, giving m*p + m*p*(p-1) + n*p. ``matrix_shape``
reports both counts.
"""

from __future__ import annotations

import csv
import random
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .core import Assignment, DispatchInstance, manhattan, random_instance

ROW_COVERAGE = "coverage"
ROW_EMPTY_CAPACITY = "empty_capacity"
ROW_SHARED_CAPACITY = "shared_capacity"

GROWTH_CSV_HEADER = ["s", "rows", "cols", "nonzeros", "build_ns"]


@dataclass(frozen=True, slots=True)
class VarIndex:
    kind: str  # "x", "y" or "z"
    i: int
    j: int
    k: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind == "y":
            if self.k is None or self.k == self.j:
                raise ValueError(f"y variable needs a distinct second user: {self}")
        elif self.k is not None:
            raise ValueError(f"{self.kind} variable must not carry a second user: {self}")

    def name(self) -> str:
        if self.kind == "y":
            return f"y_{self.i}_{self.j}_{self.k}"
        return f"{self.kind}_{self.i}_{self.j}"


@dataclass(frozen=True, slots=True)
class ConstraintRow:
    kind: str
    sense: str  # "=" or "<="
    rhs: int
    cols: tuple[int, ...]  # all coefficients are 1


@dataclass(frozen=True)
class MipModel:
    instance_ref: str
    m: int
    n: int
    p: int
    variables: tuple[VarIndex, ...]
    objective_coeffs: tuple[float, ...]
    rows: tuple[ConstraintRow, ...]
    sense: str = "minimize"

    def var_position(self, var: VarIndex) -> int:
        return self._index_map()[var]

    def _index_map(self) -> dict[VarIndex, int]:
        # rebuilt on demand; models are small relative to solve work
        return {v: pos for pos, v in enumerate(self.variables)}

    def nonzeros(self) -> int:
        return sum(len(row.cols) for row in self.rows)


@dataclass(frozen=True, slots=True)
class BuildReport:
    m: int
    n: int
    p: int
    rows: int
    cols: int
    nonzeros: int
    build_ns: int


class MatrixShape(NamedTuple):
    rows: int
    nominal_cols: int  # published formula, full j x k grid
    cols: int          # implemented formula, k != j only


def matrix_shape(m: int, n: int, p: int) -> MatrixShape:
    """Constraint matrix shape: rows m+n+p, columns per both count conventions."""
    rows = m + n + p
    nominal = m * p + m * p * p + n * p
    actual = m * p + m * p * (p - 1) + n * p if p > 0 else 0
    return MatrixShape(rows, nominal, actual)


def build_model(inst: DispatchInstance) -> tuple[MipModel, BuildReport]:
    """Construct the MIP; variable order is x, then y, then z, lexicographic."""
    t0 = time.perf_counter_ns()
    m, n, p = inst.m, inst.n, inst.p

    variables: list[VarIndex] = []
    coeffs: list[float] = []
    for i in range(m):
        for j in range(p):
            variables.append(VarIndex("x", i, j))
            coeffs.append(manhattan(inst.empty_vehicles[i], inst.users[j]))
    for i in range(m):
        for j in range(p):
            d_ij = manhattan(inst.empty_vehicles[i], inst.users[j])
            for k in range(p):
                if k == j:
                    continue
                variables.append(VarIndex("y", i, j, k))
                coeffs.append(d_ij + manhattan(inst.users[j], inst.users[k]))
    for i in range(n):
        for j in range(p):
            variables.append(VarIndex("z", i, j))
            coeffs.append(manhattan(inst.one_order_vehicles[i], inst.users[j]))

    pos = {v: idx for idx, v in enumerate(variables)}

    rows: list[ConstraintRow] = []
    for j in range(p):
        cols: list[int] = [pos[VarIndex("x", i, j)] for i in range(m)]
        for i in range(m):
            for k in range(p):
                if k == j:
                    continue
                cols.append(pos[VarIndex("y", i, j, k)])
                cols.append(pos[VarIndex("y", i, k, j)])
        cols.extend(pos[VarIndex("z", i, j)] for i in range(n))
        rows.append(ConstraintRow(ROW_COVERAGE, "=", 1, tuple(sorted(cols))))
    for i in range(m):
        cols = [pos[VarIndex("x", i, j)] for j in range(p)]
        for j in range(p):
            for k in range(p):
                if k != j:
                    cols.append(pos[VarIndex("y", i, j, k)])
        rows.append(ConstraintRow(ROW_EMPTY_CAPACITY, "<=", 1, tuple(sorted(cols))))
    for i in range(n):
        cols = [pos[VarIndex("z", i, j)] for j in range(p)]
        rows.append(ConstraintRow(ROW_SHARED_CAPACITY, "<=", 1, tuple(sorted(cols))))

    model = MipModel(
        instance_ref=inst.instance_id,
        m=m, n=n, p=p,
        variables=tuple(variables),
        objective_coeffs=tuple(coeffs),
        rows=tuple(rows),
    )
    elapsed = time.perf_counter_ns() - t0
    report = BuildReport(m=m, n=n, p=p, rows=len(rows), cols=len(variables),
                         nonzeros=model.nonzeros(), build_ns=elapsed)
    return model, report


def assignment_variables(sol: Assignment) -> list[VarIndex]:
    """The model columns selected by a solution, in variable-kind order."""
    out = [VarIndex("x", i, j) for i, j in sol.sorted_x()]
    out.extend(VarIndex("y", i, j, k) for i, j, k in sol.sorted_y())
    out.extend(VarIndex("z", i, j) for i, j in sol.sorted_z())
    return out


def objective_from_coeffs(model: MipModel, sol: Assignment) -> float:
    """Objective via the stored coefficient vector (cross-check path)."""
    pos = model._index_map()
    return sum(model.objective_coeffs[pos[v]] for v in assignment_variables(sol))


def export_lp(model: MipModel) -> str:
    """Plain-text LP-style export for cross-checking with external solvers.

    Grammar: a Minimize section with one ``obj:`` line, a Subject To section
    with one line per row (name: term [+ term ...] sense rhs), a Binaries
    section listing every variable, then End. Coefficients are printed with
    repr precision.
    """
    names = [v.name() for v in model.variables]
    lines = ["Minimize"]
    terms = " + ".join(f"{coeff!r} {name}" for coeff, name in
                       zip(model.objective_coeffs, names)) or "0"
    lines.append(f" obj: {terms}")
    lines.append("Subject To")
    counters = {ROW_COVERAGE: 0, ROW_EMPTY_CAPACITY: 0, ROW_SHARED_CAPACITY: 0}
    for row in model.rows:
        idx = counters[row.kind]
        counters[row.kind] += 1
        body = " + ".join(names[c] for c in row.cols) or "0"
        lines.append(f" {row.kind}_{idx}: {body} {row.sense} {row.rhs}")
    lines.append("Binaries")
    if names:
        lines.append(" " + " ".join(names))
    lines.append("End")
    return "\n".join(lines) + "\n"


def measure_build_growth(set_sizes: list[int], trials: int = 5, seed: int = 0,
                         csv_path: Optional[str] = None) -> list[BuildReport]:
    """Median build time per size s (m=n=p=s) over ``trials`` random instances."""
    if list(set_sizes) != sorted(set_sizes):
        raise ValueError("set_sizes must be sorted ascending")
    rng = random.Random(seed)
    reports: list[BuildReport] = []
    for s in set_sizes:
        inst = random_instance(rng, s, s, s, instance_id=f"growth-{s}")
        samples: list[BuildReport] = []
        for _ in range(max(1, trials)):
            _, rep = build_model(inst)
            samples.append(rep)
        samples.sort(key=lambda r: r.build_ns)
        median = samples[len(samples) // 2]
        reports.append(median)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(GROWTH_CSV_HEADER)
            for rep in reports:
                writer.writerow([rep.m, rep.rows, rep.cols, rep.nonzeros, rep.build_ns])
    return reports
