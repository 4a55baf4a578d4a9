"""Event-driven ride-pooling simulator on a grid road network.

Vehicles move along Dijkstra shortest paths on a 4-connected grid (unit edge
weights). Every ``batch_window`` seconds the pending unmatched orders, the
idle empty vehicles, and the willing-to-share one-passenger vehicles are
assembled into a dispatch instance which is solved exactly; the optimal
assignment is committed to vehicle routes following the three service
scenarios:

* solo (x): pick up the user, drop them off;
* double pickup (y): pick up A, pick up B, drop off A, drop off B;
* add-on (z): pick up B, drop off the current passenger A, drop off B.

The MIP itself uses Manhattan distances on the vehicle/user positions even
though movement follows Dijkstra paths (the modeling simplification this
pipeline is built around).

A vehicle that picked up a solo passenger is willing to share (it appears as
a one-order vehicle in later rounds) until that passenger is dropped off;
vehicles still driving toward a solo pickup, and vehicles with a committed
second pickup, are not re-matchable.
"""

from __future__ import annotations

import csv
import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    DispatchError,
    DispatchInstance,
    Point,
    ProjectionConfig,
    mercator_project,
)
from .model import build_model
from .solver import STATUS_OPTIMAL, SolveLimits, SolveResult, solve_exact

Cell = tuple[int, int]  # (col, row)


class NoPathError(DispatchError):
    pass


class OrderFormatError(DispatchError):
    pass


@dataclass(frozen=True)
class RoadNetwork:
    width: int
    height: int
    blocked_cells: frozenset[Cell] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocked_cells", frozenset(self.blocked_cells))
        if self.width < 1 or self.height < 1:
            raise ValueError("network must have positive dimensions")
        if len(self.blocked_cells) >= self.width * self.height:
            raise ValueError("network must have at least one unblocked cell")

    def in_bounds(self, cell: Cell) -> bool:
        c, r = cell
        return 0 <= c < self.width and 0 <= r < self.height

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked_cells

    def neighbors(self, cell: Cell) -> list[Cell]:
        c, r = cell
        out = []
        for cand in ((c, r - 1), (c - 1, r), (c + 1, r), (c, r + 1)):
            if self.passable(cand):
                out.append(cand)
        return out

    def nearest_unblocked(self, x: float, y: float) -> Cell:
        """Closest unblocked cell by Manhattan distance, ties lexicographic."""
        best: Optional[tuple[float, Cell]] = None
        for c in range(self.width):
            for r in range(self.height):
                if (c, r) in self.blocked_cells:
                    continue
                d = abs(c - x) + abs(r - y)
                key = (d, (c, r))
                if best is None or key < best:
                    best = key
        assert best is not None
        return best[1]


def dijkstra_path(net: RoadNetwork, start: Cell, goal: Cell) -> tuple[list[Cell], int]:
    """Shortest 4-connected path and its edge count; lexicographic tie-break."""
    for cell, name in ((start, "start"), (goal, "goal")):
        if not net.passable(cell):
            raise NoPathError(f"{name} cell {cell} is blocked or out of bounds")
    if start == goal:
        return [start], 0
    dist: dict[Cell, int] = {start: 0}
    parent: dict[Cell, Cell] = {}
    settled: set[Cell] = set()
    heap: list[tuple[int, Cell]] = [(0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in settled:
            continue
        settled.add(cell)
        if cell == goal:
            path = [cell]
            while cell != start:
                cell = parent[cell]
                path.append(cell)
            path.reverse()
            return path, d
        for nxt in net.neighbors(cell):
            nd = d + 1
            if nxt not in dist or nd < dist[nxt] or (nd == dist[nxt] and cell < parent[nxt]):
                if nxt in settled:
                    continue
                dist[nxt] = nd
                parent[nxt] = cell
                heapq.heappush(heap, (nd, nxt))
    raise NoPathError(f"no path from {start} to {goal}")


@dataclass(frozen=True)
class OrderEvent:
    order_id: str
    request_time: float
    pickup: Point
    dropoff: Point

    def __post_init__(self) -> None:
        if self.request_time < 0:
            raise ValueError("request_time must be nonnegative")


def generate_synthetic_orders(seed: int, count: int,
                              region: tuple[float, float, float, float],
                              time_span: float = 3600.0) -> list[OrderEvent]:
    """Uniform pickups/dropoffs in ``region`` with Poisson-spaced request times."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    x_min, x_max, y_min, y_max = region
    rate = count / time_span if time_span > 0 else 1.0
    t = 0.0
    orders: list[OrderEvent] = []
    for idx in range(count):
        t += rng.expovariate(rate) if rate > 0 else 1.0
        pickup = Point(rng.uniform(x_min, x_max), rng.uniform(y_min, y_max))
        dropoff = Point(rng.uniform(x_min, x_max), rng.uniform(y_min, y_max))
        orders.append(OrderEvent(order_id=f"syn-{seed}-{idx:05d}",
                                 request_time=min(t, time_span), pickup=pickup,
                                 dropoff=dropoff))
    return orders


ORDER_CSV_FIELDS = ["order_id", "request_time", "pickup_lat", "pickup_lon",
                    "dropoff_lat", "dropoff_lon"]


def ingest_orders(path: Path, net: Optional[RoadNetwork] = None,
                  projection: ProjectionConfig = ProjectionConfig(),
                  skip_malformed: bool = False) -> list[OrderEvent]:
    """Read the order CSV, project lat/lon, snap to the grid, sort by time."""
    orders: list[OrderEvent] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ORDER_CSV_FIELDS:
            raise OrderFormatError(
                f"unexpected CSV header {reader.fieldnames}; expected {ORDER_CSV_FIELDS}")
        for row in reader:
            line_no = reader.line_num
            try:
                pickup = mercator_project(float(row["pickup_lat"]),
                                          float(row["pickup_lon"]), projection)
                dropoff = mercator_project(float(row["dropoff_lat"]),
                                           float(row["dropoff_lon"]), projection)
                if net is not None:
                    pc = net.nearest_unblocked(pickup.x, pickup.y)
                    dc = net.nearest_unblocked(dropoff.x, dropoff.y)
                    pickup = Point(float(pc[0]), float(pc[1]))
                    dropoff = Point(float(dc[0]), float(dc[1]))
                orders.append(OrderEvent(order_id=row["order_id"],
                                         request_time=float(row["request_time"]),
                                         pickup=pickup, dropoff=dropoff))
            except (TypeError, ValueError, KeyError, DispatchError) as exc:
                if skip_malformed:
                    continue
                raise OrderFormatError(f"line {line_no}: {exc}") from exc
    orders.sort(key=lambda o: (o.request_time, o.order_id))
    return orders


OCC_EMPTY = 0
OCC_ONE = 1
OCC_TWO = 2

# a waypoint is a target cell plus the actions executed on arrival
Waypoint = tuple[Cell, tuple[tuple[str, str], ...]]  # (cell, ((kind, order_id), ...))


@dataclass
class VehicleState:
    vehicle_id: str
    cell: Cell
    occupancy: int = OCC_EMPTY
    waypoints: list[Waypoint] = field(default_factory=list)
    path: list[Cell] = field(default_factory=list)  # cells remaining to next waypoint
    progress: float = 0.0
    committed: bool = False  # True once no further matching is allowed

    def idle(self) -> bool:
        return not self.waypoints and not self.path

    def matchable_empty(self) -> bool:
        return self.occupancy == OCC_EMPTY and self.idle()

    def matchable_one_order(self) -> bool:
        return self.occupancy == OCC_ONE and not self.committed


def make_fleet(net: RoadNetwork, count: int, seed: int = 0) -> list[VehicleState]:
    rng = random.Random(seed)
    cells = [(c, r) for c in range(net.width) for r in range(net.height)
             if (c, r) not in net.blocked_cells]
    return [VehicleState(vehicle_id=f"veh-{idx:03d}", cell=rng.choice(cells))
            for idx in range(count)]


@dataclass(frozen=True)
class SimConfig:
    batch_window: float = 30.0
    vehicle_speed: float = 1.0  # grid edge units per second
    max_time: float = 100_000.0
    solve_limits: SolveLimits = SolveLimits()

    def __post_init__(self) -> None:
        if self.batch_window <= 0:
            raise ValueError("batch_window must be > 0")
        if self.vehicle_speed <= 0:
            raise ValueError("vehicle_speed must be > 0")


@dataclass(frozen=True)
class SnapshotRecord:
    instance: DispatchInstance
    solve: SolveResult
    round_time: float

    def to_json_dict(self) -> dict:
        return {
            "round_time": self.round_time,
            "instance": self.instance.to_json_dict(),
            "solve": self.solve.to_json_dict(),
        }


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str  # "pickup" | "dropoff" | "reject"
    order_id: str
    vehicle_id: Optional[str]


@dataclass
class SimResult:
    snapshots: list[SnapshotRecord]
    events: list[SimEvent]
    rejected_orders: int
    matched_orders: int
    completed_orders: int
    infeasible_rounds: int


@dataclass
class _PendingOrder:
    order: OrderEvent
    pickup_cell: Cell
    dropoff_cell: Cell


class _Simulation:
    def __init__(self, net: RoadNetwork, orders: Sequence[OrderEvent],
                 fleet: Sequence[VehicleState], cfg: SimConfig, run_id: str):
        self.net = net
        self.cfg = cfg
        self.run_id = run_id
        self.incoming = sorted(orders, key=lambda o: (o.request_time, o.order_id))
        self.fleet = list(fleet)
        self.pending: list[_PendingOrder] = []
        self.snapshots: list[SnapshotRecord] = []
        self.events: list[SimEvent] = []
        self.rejected = 0
        self.matched = 0
        self.completed = 0
        self.infeasible_rounds = 0
        self.round_index = 0
        # order_id -> dropoff cell for passengers currently aboard
        self.aboard_dropoff: dict[tuple[str, str], Cell] = {}

    # -- order intake ------------------------------------------------------

    def _ingest_due(self, now: float) -> None:
        while self.incoming and self.incoming[0].request_time <= now:
            order = self.incoming.pop(0)
            if not self.net.in_bounds((round(order.pickup.x), round(order.pickup.y))) or \
               not self.net.in_bounds((round(order.dropoff.x), round(order.dropoff.y))):
                self.rejected += 1
                self.events.append(SimEvent(now, "reject", order.order_id, None))
                continue
            self.pending.append(_PendingOrder(
                order=order,
                pickup_cell=self.net.nearest_unblocked(order.pickup.x, order.pickup.y),
                dropoff_cell=self.net.nearest_unblocked(order.dropoff.x, order.dropoff.y),
            ))

    # -- matching round ----------------------------------------------------

    def _matching_round(self, now: float) -> None:
        self._ingest_due(now)
        if not self.pending:
            return
        empties = [v for v in self.fleet if v.matchable_empty()]
        sharers = [v for v in self.fleet if v.matchable_one_order()]
        self.round_index += 1
        inst = DispatchInstance(
            empty_vehicles=tuple(Point(float(v.cell[0]), float(v.cell[1])) for v in empties),
            one_order_vehicles=tuple(Point(float(v.cell[0]), float(v.cell[1])) for v in sharers),
            users=tuple(Point(float(po.pickup_cell[0]), float(po.pickup_cell[1]))
                        for po in self.pending),
            instance_id=f"{self.run_id}-r{self.round_index:04d}",
        )
        mip, _ = build_model(inst)
        result = solve_exact(mip, self.cfg.solve_limits)
        self.snapshots.append(SnapshotRecord(instance=inst, solve=result, round_time=now))
        if result.status != STATUS_OPTIMAL:
            self.infeasible_rounds += 1
            return  # orders stay pending for the next round
        self._commit(result, empties, sharers)

    def _commit(self, result: SolveResult, empties: list[VehicleState],
                sharers: list[VehicleState]) -> None:
        sol = result.optimal
        assert sol is not None
        matched_users: set[int] = set()
        for i, j in sol.sorted_x():
            veh, po = empties[i], self.pending[j]
            veh.waypoints = [
                (po.pickup_cell, (("pickup", po.order.order_id),)),
                (po.dropoff_cell, (("dropoff", po.order.order_id),)),
            ]
            veh.committed = False  # willing to share once the passenger is aboard
            matched_users.add(j)
        for i, j, k in sol.sorted_y():
            veh = empties[i]
            a, b = self.pending[j], self.pending[k]
            veh.waypoints = [
                (a.pickup_cell, (("pickup", a.order.order_id),)),
                (b.pickup_cell, (("pickup", b.order.order_id),)),
                (a.dropoff_cell, (("dropoff", a.order.order_id),)),
                (b.dropoff_cell, (("dropoff", b.order.order_id),)),
            ]
            veh.committed = True
            matched_users.update((j, k))
        for i, j in sol.sorted_z():
            veh, po = sharers[i], self.pending[j]
            # current route holds the aboard passenger's dropoff
            aboard = [wp for wp in veh.waypoints if wp[1]]
            assert len(aboard) == 1 and aboard[0][1][0][0] == "dropoff"
            veh.waypoints = [
                (po.pickup_cell, (("pickup", po.order.order_id),)),
                aboard[0],
                (po.dropoff_cell, (("dropoff", po.order.order_id),)),
            ]
            veh.path = []  # reroute from current position
            veh.progress = 0.0
            veh.committed = True
            matched_users.add(j)
        self.matched += len(matched_users)
        self.pending = [po for idx, po in enumerate(self.pending)
                        if idx not in matched_users]

    # -- movement ----------------------------------------------------------

    def _advance_vehicle(self, veh: VehicleState, dt: float, now: float) -> None:
        budget = self.cfg.vehicle_speed * dt
        while budget > 0 or (not veh.path and veh.waypoints):
            if not veh.path:
                if not veh.waypoints:
                    return
                target = veh.waypoints[0][0]
                path, _ = dijkstra_path(self.net, veh.cell, target)
                veh.path = path[1:]  # drop the current cell
                if not veh.path:
                    self._arrive(veh, now)
                    continue
            step = min(budget, 1.0 - veh.progress)
            veh.progress += step
            budget -= step
            if veh.progress >= 1.0 - 1e-12:
                veh.cell = veh.path.pop(0)
                veh.progress = 0.0
                if not veh.path:
                    self._arrive(veh, now)
            if budget <= 1e-12:
                return

    def _arrive(self, veh: VehicleState, now: float) -> None:
        _, actions = veh.waypoints.pop(0)
        for kind, order_id in actions:
            if kind == "pickup":
                veh.occupancy += 1
                self.events.append(SimEvent(now, "pickup", order_id, veh.vehicle_id))
            else:
                veh.occupancy -= 1
                self.completed += 1
                self.events.append(SimEvent(now, "dropoff", order_id, veh.vehicle_id))
            assert 0 <= veh.occupancy <= OCC_TWO, "vehicle capacity exceeded"
        if veh.occupancy == OCC_EMPTY and not veh.waypoints:
            veh.committed = False

    # -- main loop ---------------------------------------------------------

    def run(self) -> SimResult:
        now = 0.0
        next_round = 0.0
        while now <= self.cfg.max_time:
            if now >= next_round:
                self._matching_round(now)
                next_round += self.cfg.batch_window
            for veh in self.fleet:
                self._advance_vehicle(veh, 1.0, now + 1.0)
            now += 1.0
            done = (not self.incoming and not self.pending and
                    all(v.idle() for v in self.fleet))
            if done:
                break
            if not self.fleet and not self.incoming:
                break
        return SimResult(snapshots=self.snapshots, events=self.events,
                         rejected_orders=self.rejected, matched_orders=self.matched,
                         completed_orders=self.completed,
                         infeasible_rounds=self.infeasible_rounds)


def run_simulation(net: RoadNetwork, orders: Sequence[OrderEvent],
                   fleet: Sequence[VehicleState], cfg: SimConfig = SimConfig(),
                   run_id: str = "sim") -> SimResult:
    """Run the full matching/movement loop; deterministic for fixed inputs."""
    return _Simulation(net, orders, fleet, cfg, run_id).run()


def write_snapshots(snapshots: Iterable[SnapshotRecord], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for snap in snapshots:
            fh.write(json.dumps(snap.to_json_dict(), sort_keys=True,
                                separators=(",", ":")) + "\n")


def read_snapshot_instances(path: Path) -> list[tuple[DispatchInstance, Optional[float]]]:
    """Instances plus stored optimal objectives from a snapshot JSONL file."""
    out: list[tuple[DispatchInstance, Optional[float]]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            inst = DispatchInstance.from_json_dict(doc["instance"])
            stored = doc["solve"].get("optimal", {}).get("objective") \
                if doc["solve"].get("optimal") else None
            out.append((inst, stored))
    return out
