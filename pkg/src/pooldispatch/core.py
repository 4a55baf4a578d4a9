"""Domain types and geometry for the carpool dispatch problem.

A dispatch instance holds the planar positions of empty vehicles, vehicles
already carrying one passenger, and waiting users. A candidate solution pairs
vehicles with users in one of three service modes:

* ``x`` — an empty vehicle serves a single user,
* ``y`` — an empty vehicle picks up two users in order,
* ``z`` — a one-passenger vehicle picks up one additional user.

All distances are Manhattan distances on projected coordinates. Latitude and
longitude are converted at ingestion time with a spherical Mercator
projection; everything downstream works on the projected plane.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

OBJECTIVE_TOL = 1e-9

# Coordinate box matching the magnitudes of the bundled exemplar instance;
# used by the synthetic instance sampler.
DEFAULT_BOX = (85.0, 101.5, 28.0, 45.0)  # x_min, x_max, y_min, y_max

MERCATOR_MAX_LAT_DEG = 85.06
EARTH_RADIUS_KM = 6371.0088


class DispatchError(Exception):
    """Base class for all errors raised by this package."""


class ProjectionDomainError(DispatchError):
    """Latitude/longitude outside the Mercator projection domain."""


class InvalidSolutionError(DispatchError):
    """A solution references indices outside its instance."""


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinate: ({self.x}, {self.y})")


def manhattan(a: Point, b: Point) -> float:
    """|a.x - b.x| + |a.y - b.y|."""
    return abs(a.x - b.x) + abs(a.y - b.y)


@dataclass(frozen=True, slots=True)
class ProjectionConfig:
    """Spherical Mercator parameters; the plane unit is ``scale``-dependent."""

    lon0_deg: float = 0.0
    scale: float = 1.0
    x_offset: float = 0.0
    y_offset: float = 0.0

    @classmethod
    def km_at_latitude(cls, center_lat_deg: float, lon0_deg: float = 0.0,
                       x_offset: float = 0.0, y_offset: float = 0.0) -> "ProjectionConfig":
        """Config whose plane unit is ~1 km of ground distance at the given latitude."""
        scale = EARTH_RADIUS_KM * math.cos(math.radians(center_lat_deg))
        return cls(lon0_deg=lon0_deg, scale=scale, x_offset=x_offset, y_offset=y_offset)


def mercator_project(lat_deg: float, lon_deg: float,
                     config: ProjectionConfig = ProjectionConfig()) -> Point:
    """Project latitude/longitude (degrees) onto the plane.

    x = scale * (lon - lon0) (radians) + x_offset
    y = scale * ln(tan(pi/4 + lat/2)) + y_offset
    """
    if not abs(lat_deg) < MERCATOR_MAX_LAT_DEG:
        raise ProjectionDomainError(
            f"latitude {lat_deg} outside (-{MERCATOR_MAX_LAT_DEG}, {MERCATOR_MAX_LAT_DEG})")
    if not abs(lon_deg) <= 180.0:
        raise ProjectionDomainError(f"longitude {lon_deg} outside [-180, 180]")
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    lon0 = math.radians(config.lon0_deg)
    x = config.scale * (lon - lon0) + config.x_offset
    y = config.scale * math.log(math.tan(math.pi / 4.0 + lat / 2.0)) + config.y_offset
    return Point(x, y)


@dataclass(frozen=True)
class DispatchInstance:
    """One matching round: vehicle and user positions, indexed by position."""

    empty_vehicles: tuple[Point, ...]
    one_order_vehicles: tuple[Point, ...]
    users: tuple[Point, ...]
    instance_id: str = "unnamed"

    def __post_init__(self) -> None:
        object.__setattr__(self, "empty_vehicles", tuple(self.empty_vehicles))
        object.__setattr__(self, "one_order_vehicles", tuple(self.one_order_vehicles))
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def m(self) -> int:
        return len(self.empty_vehicles)

    @property
    def n(self) -> int:
        return len(self.one_order_vehicles)

    @property
    def p(self) -> int:
        return len(self.users)

    def to_json_dict(self) -> dict:
        return {
            "id": self.instance_id,
            "empty": [[pt.x, pt.y] for pt in self.empty_vehicles],
            "one_order": [[pt.x, pt.y] for pt in self.one_order_vehicles],
            "users": [[pt.x, pt.y] for pt in self.users],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DispatchInstance":
        return cls(
            empty_vehicles=tuple(Point(x, y) for x, y in doc["empty"]),
            one_order_vehicles=tuple(Point(x, y) for x, y in doc["one_order"]),
            users=tuple(Point(x, y) for x, y in doc["users"]),
            instance_id=doc["id"],
        )

    @classmethod
    def from_json(cls, text: str) -> "DispatchInstance":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class Assignment:
    """One candidate solution: x pairs, ordered y triples, z pairs."""

    x_pairs: frozenset[tuple[int, int]] = frozenset()
    y_triples: frozenset[tuple[int, int, int]] = frozenset()
    z_pairs: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_pairs", frozenset(self.x_pairs))
        object.__setattr__(self, "y_triples", frozenset(self.y_triples))
        object.__setattr__(self, "z_pairs", frozenset(self.z_pairs))
        for (_, j, k) in self.y_triples:
            if j == k:
                raise InvalidSolutionError(f"y triple picks up user {j} twice")

    def sorted_x(self) -> list[tuple[int, int]]:
        return sorted(self.x_pairs)

    def sorted_y(self) -> list[tuple[int, int, int]]:
        return sorted(self.y_triples)

    def sorted_z(self) -> list[tuple[int, int]]:
        return sorted(self.z_pairs)

    def covered_users(self) -> list[int]:
        users: list[int] = [j for _, j in self.x_pairs]
        for _, j, k in self.y_triples:
            users.append(j)
            users.append(k)
        users.extend(j for _, j in self.z_pairs)
        return users

    def to_json_dict(self) -> dict:
        return {
            "x": [list(pair) for pair in self.sorted_x()],
            "y": [list(tri) for tri in self.sorted_y()],
            "z": [list(pair) for pair in self.sorted_z()],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Assignment":
        return cls(
            x_pairs=frozenset((i, j) for i, j in doc.get("x", [])),
            y_triples=frozenset((i, j, k) for i, j, k in doc.get("y", [])),
            z_pairs=frozenset((i, j) for i, j in doc.get("z", [])),
        )


@dataclass(frozen=True)
class ValidationReport:
    feasible: bool
    violations: tuple[tuple[str, int, str], ...]


def _check_bounds(inst: DispatchInstance, sol: Assignment) -> list[tuple[str, int, str]]:
    out: list[tuple[str, int, str]] = []
    for i, j in sol.x_pairs:
        if not 0 <= i < inst.m:
            out.append(("index_bounds", i, f"x pair ({i}, {j}): empty vehicle index out of range"))
        if not 0 <= j < inst.p:
            out.append(("index_bounds", j, f"x pair ({i}, {j}): user index out of range"))
    for i, j, k in sol.y_triples:
        if not 0 <= i < inst.m:
            out.append(("index_bounds", i, f"y triple ({i}, {j}, {k}): empty vehicle index out of range"))
        for u in (j, k):
            if not 0 <= u < inst.p:
                out.append(("index_bounds", u, f"y triple ({i}, {j}, {k}): user index out of range"))
    for i, j in sol.z_pairs:
        if not 0 <= i < inst.n:
            out.append(("index_bounds", i, f"z pair ({i}, {j}): one-order vehicle index out of range"))
        if not 0 <= j < inst.p:
            out.append(("index_bounds", j, f"z pair ({i}, {j}): user index out of range"))
    return out


def validate(inst: DispatchInstance, sol: Assignment) -> ValidationReport:
    """Check the four feasibility conditions; violations are reported, not raised."""
    violations = _check_bounds(inst, sol)
    if violations:
        return ValidationReport(False, tuple(violations))

    counts = [0] * inst.p
    for u in sol.covered_users():
        counts[u] += 1
    for j, c in enumerate(counts):
        if c != 1:
            violations.append(("coverage", j, f"user {j} covered {c} times, expected exactly 1"))

    empty_use = [0] * inst.m
    for i, _ in sol.x_pairs:
        empty_use[i] += 1
    for i, _, _ in sol.y_triples:
        empty_use[i] += 1
    for i, c in enumerate(empty_use):
        if c > 1:
            violations.append(("empty_capacity", i, f"empty vehicle {i} used in {c} services"))

    shared_use = [0] * inst.n
    for i, _ in sol.z_pairs:
        shared_use[i] += 1
    for i, c in enumerate(shared_use):
        if c > 1:
            violations.append(("shared_capacity", i, f"one-order vehicle {i} used in {c} services"))

    return ValidationReport(not violations, tuple(violations))


def evaluate_objective(inst: DispatchInstance, sol: Assignment) -> float:
    """Total pickup distance of a solution; raises on out-of-bounds indices."""
    bad = _check_bounds(inst, sol)
    if bad:
        raise InvalidSolutionError(bad[0][2])
    total = 0.0
    for i, j in sol.x_pairs:
        total += manhattan(inst.empty_vehicles[i], inst.users[j])
    for i, j, k in sol.y_triples:
        total += manhattan(inst.empty_vehicles[i], inst.users[j])
        total += manhattan(inst.users[j], inst.users[k])
    for i, j in sol.z_pairs:
        total += manhattan(inst.one_order_vehicles[i], inst.users[j])
    return total


def random_instance(rng: random.Random, m: int, n: int, p: int,
                    box: tuple[float, float, float, float] = DEFAULT_BOX,
                    instance_id: str = "random") -> DispatchInstance:
    """Sample an instance with uniform positions inside ``box``."""
    x_min, x_max, y_min, y_max = box

    def pt() -> Point:
        return Point(rng.uniform(x_min, x_max), rng.uniform(y_min, y_max))

    return DispatchInstance(
        empty_vehicles=tuple(pt() for _ in range(m)),
        one_order_vehicles=tuple(pt() for _ in range(n)),
        users=tuple(pt() for _ in range(p)),
        instance_id=instance_id,
    )


def bundled_exemplar_instance() -> DispatchInstance:
    """The 3/3/3 instance bundled as a worked exemplar throughout the repo."""
    return DispatchInstance(
        empty_vehicles=(Point(86.97, 35.86), Point(85.23, 36.74), Point(95.62, 28.43)),
        one_order_vehicles=(Point(90.55, 35.17), Point(101.43, 44.49), Point(100.56, 44.77)),
        users=(Point(90.33, 35.82), Point(97.04, 41.87), Point(100.91, 42.75)),
        instance_id="exemplar-3-3-3",
    )
