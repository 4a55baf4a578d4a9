"""Exact solving of the carpool MIP.

``solve_exact`` runs a depth-first branch-and-bound that branches on "which
service covers the lowest-index uncovered user". The lower bound adds, for
every uncovered user, the cheapest cost attributable to covering that user
while ignoring capacity interactions:

* served alone by an empty vehicle: min_i d(E_i, u)
* served as an add-on by a one-order vehicle: min_i d(O_i, u)
* served as the second rider of a shared pickup: min_{j != u} d(u_j, u)

A shared service y(i,j,k) costs d(E_i, u_j) + d(u_j, u_k); attributing the
first leg to j and the second to k makes the per-user minima admissible, so
the sum never exceeds the cost of any feasible completion.

``brute_force`` enumerates every feasible assignment of a small instance and
is the independent oracle for the branch-and-bound path.

Every improving feasible solution is logged as an incumbent. The incumbent's
``solver_gap`` is measured against the lower bound known at discovery time
(the root bound for branch-and-bound, the trivial bound 0 for brute force,
matching the "gap: 1.0" convention of the bundled exemplar solutions).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Optional

from .core import (
    Assignment,
    DispatchInstance,
    DispatchError,
    OBJECTIVE_TOL,
)
from .model import MipModel, VarIndex, build_model

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_ABORTED = "aborted"


class EnumerationLimitError(DispatchError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True, slots=True)
class SolveLimits:
    max_nodes: int = 10_000_000
    max_seconds: float = 60.0


@dataclass(frozen=True)
class Incumbent:
    solution: Assignment
    objective: float
    found_order: int
    solver_gap: float
    wall_time: float  # seconds since solve start; excluded from serialization
    nodes_at_discovery: int

    def to_json_dict(self) -> dict:
        doc = self.solution.to_json_dict()
        doc.update({
            "objective": self.objective,
            "found_order": self.found_order,
            "solver_gap": self.solver_gap,
            "nodes_at_discovery": self.nodes_at_discovery,
        })
        return doc


@dataclass(frozen=True)
class SolveResult:
    status: str
    incumbents: tuple[Incumbent, ...]
    optimal: Optional[Assignment]
    optimal_objective: Optional[float]
    nodes_explored: int
    proof_gap: float
    root_bound: float

    def to_json_dict(self) -> dict:
        # wall times are intentionally left out so artifacts are reproducible
        doc = {
            "status": self.status,
            "nodes_explored": self.nodes_explored,
            "proof_gap": self.proof_gap,
            "root_bound": self.root_bound,
            "incumbents": [inc.to_json_dict() for inc in self.incumbents],
        }
        if self.optimal is not None:
            doc["optimal"] = self.optimal.to_json_dict()
            doc["optimal"]["objective"] = self.optimal_objective
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def _bound_gap(objective: float, bound: float) -> float:
    if objective <= 0.0:
        return 0.0
    return max(0.0, (objective - bound) / objective)


class _Option:
    """One way to cover the branching user: a variable plus its bookkeeping."""

    __slots__ = ("cost", "order_key", "kind", "i", "covers", "var")

    def __init__(self, cost: float, order_key: int, var: VarIndex, covers: tuple[int, ...]):
        self.cost = cost
        self.order_key = order_key  # variable position: deterministic tie-break
        self.kind = var.kind
        self.i = var.i
        self.covers = covers
        self.var = var


class _Search:
    def __init__(self, model: MipModel, limits: SolveLimits, prune: bool):
        self.model = model
        self.limits = limits
        self.prune = prune
        self.m, self.n, self.p = model.m, model.n, model.p
        self.pos = {v: idx for idx, v in enumerate(model.variables)}
        self.coeff = model.objective_coeffs
        self.nodes = 0
        self.aborted = False
        self.start = time.perf_counter()
        self.best_cost = float("inf")
        self.best_vars: Optional[list[VarIndex]] = None
        self.incumbents: list[Incumbent] = []
        self._index_options()
        self.root_bound = sum(self.user_lb) if prune else 0.0

    def _index_options(self) -> None:
        m, n, p = self.m, self.n, self.p
        pos, coeff = self.pos, self.coeff
        # per-user single-service variables
        self.x_vars: list[list[tuple[float, int, VarIndex]]] = [[] for _ in range(p)]
        self.z_vars: list[list[tuple[float, int, VarIndex]]] = [[] for _ in range(p)]
        for j in range(p):
            for i in range(m):
                v = VarIndex("x", i, j)
                self.x_vars[j].append((coeff[pos[v]], pos[v], v))
            for i in range(n):
                v = VarIndex("z", i, j)
                self.z_vars[j].append((coeff[pos[v]], pos[v], v))
        # admissible per-user bound components
        self.user_lb = [0.0] * p
        second_leg = [float("inf")] * p  # min over j != k of d(u_j, u_k)
        for k in range(p):
            for j in range(p):
                if j == k or m == 0:
                    continue
                v = VarIndex("y", 0, j, k)
                d2 = coeff[pos[v]] - coeff[pos[VarIndex("x", 0, j)]]
                second_leg[k] = min(second_leg[k], d2)
        for u in range(p):
            lb = float("inf")
            if self.x_vars[u]:
                lb = min(lb, min(c for c, _, _ in self.x_vars[u]))
            if self.z_vars[u]:
                lb = min(lb, min(c for c, _, _ in self.z_vars[u]))
            if p >= 2 and m >= 1:
                lb = min(lb, second_leg[u])
            self.user_lb[u] = lb if lb != float("inf") else 0.0

    def _check_limits(self) -> None:
        if self.nodes >= self.limits.max_nodes:
            self.aborted = True
        elif self.nodes % 1024 == 0:
            if time.perf_counter() - self.start > self.limits.max_seconds:
                self.aborted = True

    def _options_for(self, j: int, covered: int, empty_used: int, shared_used: int) -> list[_Option]:
        opts: list[_Option] = []
        for cost, order_key, v in self.x_vars[j]:
            if not empty_used >> v.i & 1:
                opts.append(_Option(cost, order_key, v, (j,)))
        if self.m:
            for k in range(j + 1, self.p):
                if covered >> k & 1:
                    continue
                for i in range(self.m):
                    if empty_used >> i & 1:
                        continue
                    for v in (VarIndex("y", i, j, k), VarIndex("y", i, k, j)):
                        idx = self.pos[v]
                        opts.append(_Option(self.coeff[idx], idx, v, (j, k)))
        for cost, order_key, v in self.z_vars[j]:
            if not shared_used >> v.i & 1:
                opts.append(_Option(cost, order_key, v, (j,)))
        if self.prune:
            opts.sort(key=lambda o: (o.cost, o.order_key))
        else:
            opts.sort(key=lambda o: o.order_key)
        return opts

    def _record_incumbent(self, cost: float, chosen: list[VarIndex]) -> None:
        sol = _assignment_from_vars(chosen)
        bound = self.root_bound
        self.incumbents.append(Incumbent(
            solution=sol,
            objective=cost,
            found_order=len(self.incumbents) + 1,
            solver_gap=_bound_gap(cost, bound),
            wall_time=time.perf_counter() - self.start,
            nodes_at_discovery=self.nodes,
        ))
        self.best_cost = cost
        self.best_vars = list(chosen)

    def search(self, covered: int, empty_used: int, shared_used: int,
               cost: float, chosen: list[VarIndex], remaining_lb: float) -> None:
        if self.aborted:
            return
        self.nodes += 1
        self._check_limits()
        j = 0
        while j < self.p and covered >> j & 1:
            j += 1
        if j == self.p:
            if cost < self.best_cost - OBJECTIVE_TOL:
                self._record_incumbent(cost, chosen)
            return
        for opt in self._options_for(j, covered, empty_used, shared_used):
            new_cost = cost + opt.cost
            new_lb = remaining_lb - sum(self.user_lb[u] for u in opt.covers)
            if self.prune and new_cost + new_lb >= self.best_cost - OBJECTIVE_TOL:
                continue
            new_covered = covered
            for u in opt.covers:
                new_covered |= 1 << u
            new_empty = empty_used | (1 << opt.i if opt.kind in ("x", "y") else 0)
            new_shared = shared_used | (1 << opt.i if opt.kind == "z" else 0)
            chosen.append(opt.var)
            self.search(new_covered, new_empty, new_shared, new_cost, chosen, new_lb)
            chosen.pop()
            if self.aborted:
                return

    def result(self) -> SolveResult:
        if self.best_vars is None:
            status = STATUS_ABORTED if self.aborted else STATUS_INFEASIBLE
            return SolveResult(status=status, incumbents=(), optimal=None,
                               optimal_objective=None, nodes_explored=self.nodes,
                               proof_gap=1.0 if self.aborted else 0.0,
                               root_bound=self.root_bound)
        best = self.incumbents[-1]
        if self.aborted:
            return SolveResult(status=STATUS_ABORTED, incumbents=tuple(self.incumbents),
                               optimal=None, optimal_objective=None,
                               nodes_explored=self.nodes,
                               proof_gap=_bound_gap(best.objective, self.root_bound),
                               root_bound=self.root_bound)
        return SolveResult(status=STATUS_OPTIMAL, incumbents=tuple(self.incumbents),
                           optimal=best.solution, optimal_objective=best.objective,
                           nodes_explored=self.nodes, proof_gap=0.0,
                           root_bound=self.root_bound)


def _assignment_from_vars(chosen: list[VarIndex]) -> Assignment:
    return Assignment(
        x_pairs=frozenset((v.i, v.j) for v in chosen if v.kind == "x"),
        y_triples=frozenset((v.i, v.j, v.k) for v in chosen if v.kind == "y"),
        z_pairs=frozenset((v.i, v.j) for v in chosen if v.kind == "z"),
    )


def solve_exact(model: MipModel, limits: SolveLimits = SolveLimits()) -> SolveResult:
    """Prove the optimum by branch-and-bound, logging improving incumbents."""
    if model.p > 2 * model.m + model.n:
        return SolveResult(status=STATUS_INFEASIBLE, incumbents=(), optimal=None,
                           optimal_objective=None, nodes_explored=0,
                           proof_gap=0.0, root_bound=0.0)
    search = _Search(model, limits, prune=True)
    search.search(0, 0, 0, 0.0, [], sum(search.user_lb))
    return search.result()


def brute_force(inst: DispatchInstance, max_enumeration: int = 2_000_000) -> SolveResult:
    """Exhaustive oracle: enumerate every feasible assignment, no pruning."""
    m, n, p = inst.m, inst.n, inst.p
    per_user = m + 2 * m * max(0, p - 1) + n
    if per_user ** max(1, p) > max_enumeration:
        raise EnumerationLimitError(
            f"instance {inst.instance_id} ({m},{n},{p}) exceeds the enumeration "
            f"bound of {max_enumeration} candidate assignments")
    if p > 2 * m + n:
        return SolveResult(status=STATUS_INFEASIBLE, incumbents=(), optimal=None,
                           optimal_objective=None, nodes_explored=0,
                           proof_gap=0.0, root_bound=0.0)
    model, _ = build_model(inst)
    search = _Search(model, SolveLimits(max_nodes=2**62, max_seconds=float("inf")),
                     prune=False)
    search.search(0, 0, 0, 0.0, [], 0.0)
    return search.result()


def first_k_incumbents(result: SolveResult, k: int) -> list[Incumbent]:
    """The earliest up-to-k incumbents of a solve."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(result.incumbents[:k])
