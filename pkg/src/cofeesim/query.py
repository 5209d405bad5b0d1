"""Declarative filter queries over micro-batch metadata.

A query carries up to three predicates (spatial, temporal, domain) that are
ANDed together; absent predicates are vacuously true.  Matching is a pure
function of the metadata, so the same registry can be consulted for every
fog partition.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ConfigError, MicroBatchMeta

EQUALS = "equals"
INTERSECTS = "intersects"
CONTAINS = "contains"

_RANGE_OPS = (EQUALS, INTERSECTS, CONTAINS)

# Two points closer than this (degrees, per axis) count as equal.
POINT_EPS = 1e-6


@dataclass
class SpatialPredicate:
    """Axis-aligned lat/long rectangle test against the micro-batch point.

    A point predicate is a degenerate rectangle (min == max).  `contains`
    and `intersects` both reduce to point-in-rectangle since micro-batches
    are points; `equals` requires the rectangle to be (nearly) a point equal
    to the micro-batch location.
    """

    op: str
    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def __post_init__(self):
        if self.op not in _RANGE_OPS:
            raise ConfigError(f"unknown spatial operator {self.op!r}")
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ConfigError("spatial rectangle has min > max")

    def holds(self, meta: MicroBatchMeta) -> bool:
        if self.op == EQUALS:
            return (
                abs(meta.lat - self.lat_min) <= POINT_EPS
                and abs(meta.lat - self.lat_max) <= POINT_EPS
                and abs(meta.lon - self.lon_min) <= POINT_EPS
                and abs(meta.lon - self.lon_max) <= POINT_EPS
            )
        return (
            self.lat_min <= meta.lat <= self.lat_max
            and self.lon_min <= meta.lon <= self.lon_max
        )


@dataclass
class TemporalPredicate:
    """Closed-interval test against the micro-batch content time range."""

    op: str
    begin: float
    end: float

    def __post_init__(self):
        if self.op not in _RANGE_OPS:
            raise ConfigError(f"unknown temporal operator {self.op!r}")
        if self.begin > self.end:
            raise ConfigError("temporal range has begin > end")

    def holds(self, meta: MicroBatchMeta) -> bool:
        if self.op == EQUALS:
            return meta.t_begin == self.begin and meta.t_end == self.end
        if self.op == INTERSECTS:
            # closed intervals: a shared endpoint counts as overlap
            return self.begin <= meta.t_end and meta.t_begin <= self.end
        return self.begin <= meta.t_begin and meta.t_end <= self.end


@dataclass
class DomainPredicate:
    """Equality on the source id, or on one key-value metadata pair."""

    sid: str | None = None
    kv: tuple | None = None

    def __post_init__(self):
        if (self.sid is None) == (self.kv is None):
            raise ConfigError("domain predicate needs exactly one of sid / kv")

    def holds(self, meta: MicroBatchMeta) -> bool:
        if self.sid is not None:
            return meta.sid == self.sid
        return tuple(self.kv) in meta.kv


@dataclass
class FilterQuery:
    dag_id: str
    spatial: SpatialPredicate | None = None
    temporal: TemporalPredicate | None = None
    domain: DomainPredicate | None = None

    def __post_init__(self):
        if self.spatial is None and self.temporal is None and self.domain is None:
            raise ConfigError(f"query for {self.dag_id}: at least one predicate required")

    def matches(self, meta: MicroBatchMeta) -> bool:
        for pred in (self.spatial, self.temporal, self.domain):
            if pred is not None and not pred.holds(meta):
                return False
        return True


def match(meta: MicroBatchMeta, queries) -> set:
    """Dag ids of every query whose present predicates all hold."""
    return {q.dag_id for q in queries if q.matches(meta)}


class QueryRegistry:
    """Active filter queries, keyed by dag id.

    Conceptually replicated on every fog's matching engine; the simulation
    keeps one copy since registration is global and matching is pure.
    """

    def __init__(self):
        self._queries: dict[str, FilterQuery] = {}
        self._next_reg = 0

    def register(self, query: FilterQuery) -> int:
        if query.dag_id in self._queries:
            raise ConfigError(f"query for dag {query.dag_id} already registered")
        self._queries[query.dag_id] = query
        self._next_reg += 1
        return self._next_reg

    def unregister(self, dag_id: str):
        self._queries.pop(dag_id)

    def match(self, meta: MicroBatchMeta) -> set:
        return match(meta, self._queries.values())

    def __len__(self):
        return len(self._queries)
