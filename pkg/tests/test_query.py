from datetime import datetime, timezone

import pytest

from cofeesim.model import ConfigError, MicroBatchMeta
from cofeesim.query import (
    CONTAINS,
    EQUALS,
    INTERSECTS,
    DomainPredicate,
    FilterQuery,
    QueryRegistry,
    SpatialPredicate,
    TemporalPredicate,
    match,
)


def ts(s):
    return datetime.fromisoformat(s).replace(tzinfo=timezone.utc).timestamp()


def campus_meta():
    # temperature sensor micro-batch: five minutes of readings, known location
    return MicroBatchMeta(
        id="9cdfa00dc01d",
        sid="cds26temp",
        t_begin=ts("2021-11-15T09:00:00"),
        t_end=ts("2021-11-15T09:05:00"),
        lat=13.0165,
        lon=77.5706,
        kv=frozenset({("units", "C"), ("err", "0.05")}),
        size_bytes=39,
        location="e0",
    )


def test_match_time_and_sid_conjunction():
    q = FilterQuery(
        "dagA",
        temporal=TemporalPredicate(INTERSECTS, ts("2021-11-15T09:00:00"), ts("2021-11-15T19:00:00")),
        domain=DomainPredicate(sid="cds26temp"),
    )
    assert q.matches(campus_meta())


def test_no_match_when_any_predicate_fails():
    q = FilterQuery(
        "dagA",
        temporal=TemporalPredicate(INTERSECTS, ts("2021-11-15T20:00:00"), ts("2021-11-15T21:00:00")),
        domain=DomainPredicate(sid="cds26temp"),
    )
    assert not q.matches(campus_meta())


def test_multi_trigger_returns_all_satisfied_dags():
    meta = campus_meta()
    qa = FilterQuery("A", domain=DomainPredicate(sid="cds26temp"))
    qb = FilterQuery("B", temporal=TemporalPredicate(CONTAINS, ts("2021-11-15T08:00:00"), ts("2021-11-15T10:00:00")))
    qc = FilterQuery("C", domain=DomainPredicate(sid="other"))
    queries = [qa, qb, qc]
    # brute force: evaluate each predicate by hand
    expected = {q.dag_id for q in queries if q.matches(meta)}
    assert expected == {"A", "B"}
    assert match(meta, queries) == {"A", "B"}


def test_match_distributes_over_union():
    meta = campus_meta()
    q1 = [FilterQuery("A", domain=DomainPredicate(sid="cds26temp"))]
    q2 = [FilterQuery("B", domain=DomainPredicate(kv=("units", "C"))),
          FilterQuery("C", domain=DomainPredicate(kv=("units", "F")))]
    assert match(meta, q1 + q2) == match(meta, q1) | match(meta, q2)


def test_sid_only_query_binds_to_exact_stream():
    q = FilterQuery("A", domain=DomainPredicate(sid="cds26temp"))
    meta = campus_meta()
    assert q.matches(meta)
    other = campus_meta()
    other.sid = "cds74kwh"
    assert not q.matches(other)


def test_contains_implies_intersects():
    meta = campus_meta()
    ranges = [
        (ts("2021-11-15T08:00:00"), ts("2021-11-15T10:00:00")),
        (ts("2021-11-15T09:01:00"), ts("2021-11-15T09:02:00")),
        (ts("2021-11-15T09:05:00"), ts("2021-11-15T11:00:00")),
    ]
    for b, e in ranges:
        c = TemporalPredicate(CONTAINS, b, e)
        i = TemporalPredicate(INTERSECTS, b, e)
        if c.holds(meta):
            assert i.holds(meta)
    rects = [(13.0, 77.0, 14.0, 78.0), (13.0165, 77.5706, 13.0165, 77.5706), (10.0, 70.0, 11.0, 71.0)]
    for rect in rects:
        c = SpatialPredicate(CONTAINS, *rect)
        i = SpatialPredicate(INTERSECTS, *rect)
        if c.holds(meta):
            assert i.holds(meta)


def test_temporal_intersects_shared_endpoint_counts():
    meta = campus_meta()
    p = TemporalPredicate(INTERSECTS, meta.t_end, meta.t_end + 60)
    assert p.holds(meta)


def test_spatial_point_equality_tolerance():
    meta = campus_meta()
    near = SpatialPredicate(EQUALS, 13.0165 + 5e-7, 77.5706, 13.0165 + 5e-7, 77.5706)
    far = SpatialPredicate(EQUALS, 13.0175, 77.5706, 13.0175, 77.5706)
    assert near.holds(meta)
    assert not far.holds(meta)


def test_kv_pair_must_match_exactly():
    meta = campus_meta()
    assert FilterQuery("A", domain=DomainPredicate(kv=("units", "C"))).matches(meta)
    assert not FilterQuery("B", domain=DomainPredicate(kv=("units", "F"))).matches(meta)


def test_registry_register_and_duplicate_rejection():
    reg = QueryRegistry()
    rid = reg.register(FilterQuery("A", domain=DomainPredicate(sid="cds26temp")))
    assert rid is not None
    assert reg.match(campus_meta()) == {"A"}
    with pytest.raises(ConfigError):
        reg.register(FilterQuery("A", domain=DomainPredicate(sid="x")))


def test_query_requires_at_least_one_predicate():
    with pytest.raises(ConfigError):
        FilterQuery("empty")


def test_predicate_validation():
    with pytest.raises(ConfigError):
        TemporalPredicate(INTERSECTS, 10.0, 5.0)
    with pytest.raises(ConfigError):
        SpatialPredicate(CONTAINS, 2.0, 0.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        DomainPredicate()
