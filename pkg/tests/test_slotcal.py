"""Unit and oracle tests for the reservation calendar.

Both backends are exercised when the compiled one is available.
"""

import itertools
import math
import random

import pytest

from cofeesim.slotcal import BACKUP, INF, PRIMARY, SlotCalendar
from cofeesim.slotcal import _core_py

BACKENDS = [("python", _core_py.CalendarCore)]
try:
    from cofeesim.slotcal import _core_cy

    BACKENDS.append(("cython", _core_cy.CalendarCore))
except ImportError:
    pass


@pytest.fixture(params=BACKENDS, ids=[b[0] for b in BACKENDS])
def core_cls(request):
    return request.param[1]


def cal(core_cls, chi=1.0):
    return SlotCalendar(oversub_ratio=chi, core_cls=core_cls)


def busy_union(snapshot):
    """Merged busy intervals from a snapshot (exclusive view)."""
    ivals = sorted((s, s + d) for _, s, d, *_ in snapshot)
    merged = []
    for s, e in ivals:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def brute_free(snapshot, now):
    """Free intervals computed independently from the snapshot."""
    out = []
    cursor = now
    for s, e in busy_union(snapshot):
        if e <= cursor:
            continue
        if s > cursor:
            out.append((cursor, s))
        cursor = max(cursor, e)
    out.append((cursor, INF))
    return out


# -- worst-fit placement ----------------------------------------------------

def test_reserve_worst_fit_prefers_largest_slot(core_cls):
    c = cal(core_cls)
    # carve free slots [0,10) and [15,40) by pinning busy blocks elsewhere
    a, _ = c.reserve(PRIMARY, 5.0, 10.0, 15.0, 0.0)
    tail, _ = c.reserve(PRIMARY, 60.0, 40.0, 100.0, 0.0)
    assert c.start_of(a.rid) == 10.0 and c.end_of(a.rid) == 15.0
    assert c.start_of(tail.rid) == 40.0
    got = c.reserve(BACKUP, 7.5, 20.0, 35.0, 0.0)
    assert got is not None
    res, moved = got
    assert moved == []
    assert c.start_of(res.rid) == 20.0
    assert c.end_of(res.rid) == 27.5


def test_reserve_empty_calendar_starts_at_earliest(core_cls):
    c = cal(core_cls)
    got = c.reserve(BACKUP, 4.0, 12.0, 16.0, 0.0)
    assert got is not None
    res, _ = got
    assert (c.start_of(res.rid), c.end_of(res.rid)) == (12.0, 16.0)
    assert c.reserve(BACKUP, 4.1, 12.0, 16.0, 0.0) is None


def test_reserve_impossible_window_returns_none(core_cls):
    c = cal(core_cls)
    assert c.reserve(PRIMARY, 10.0, 5.0, 14.9, 0.0) is None
    assert c.reserve(PRIMARY, 1.0, 9.0, 8.0, 0.0) is None


# -- defragmentation ----------------------------------------------------------

def test_defrag_slides_successor_toward_its_deadline(core_cls):
    c = cal(core_cls)
    # free [10,14); successor occupies [14,20) and may end as late as 26
    left, _ = c.reserve(PRIMARY, 10.0, 0.0, 10.0, 0.0)
    succ, _ = c.reserve(PRIMARY, 6.0, 14.0, 26.0, 0.0)
    assert c.start_of(succ.rid) == 14.0
    got = c.reserve(PRIMARY, 8.0, 10.0, 20.0, 0.0)
    assert got is not None
    res, moved = got
    assert (c.start_of(res.rid), c.end_of(res.rid)) == (10.0, 18.0)
    # the successor slid as far future as allowed: [20, 26)
    assert moved == [(succ.rid, 14.0)]
    assert c.start_of(succ.rid) == 20.0


def test_defrag_slides_predecessor_toward_its_release(core_cls):
    c = cal(core_cls)
    # blocker pins [0,4) so the predecessor lands at [4,8) despite omega 0
    blocker, _ = c.reserve(PRIMARY, 4.0, 0.0, 4.0, 0.0)
    pred, _ = c.reserve(PRIMARY, 4.0, 0.0, 8.0, 0.0)
    tail, _ = c.reserve(PRIMARY, 8.0, 12.0, 20.0, 0.0)
    assert c.start_of(pred.rid) == 4.0
    assert c.start_of(tail.rid) == 12.0
    c.release(blocker.rid)
    # nothing fits directly; pred cannot slide right (its latest end is 8)
    # and tail cannot move, so pred must slide left to its earliest start
    got = c.reserve(PRIMARY, 7.0, 0.0, 12.0, 0.0)
    assert got is not None
    res, moved = got
    assert c.start_of(pred.rid) == 0.0
    assert (pred.rid, 4.0) in moved
    assert (c.start_of(res.rid), c.end_of(res.rid)) == (4.0, 11.0)


def test_defrag_respects_slide_bounds(core_cls):
    c = cal(core_cls)
    # successor pinned: its latest end equals its current end -> no slack
    s1, _ = c.reserve(PRIMARY, 6.0, 14.0, 20.0, 0.0)
    s0, _ = c.reserve(PRIMARY, 10.0, 0.0, 10.0, 0.0)
    assert c.reserve(PRIMARY, 8.0, 10.0, 20.0, 0.0) is None
    # calendar untouched after the failed attempt
    assert c.start_of(s1.rid) == 14.0
    assert c.start_of(s0.rid) == 0.0
    assert len(c) == 2


def test_defrag_standalone_returns_clipped_window(core_cls):
    c = cal(core_cls)
    c.reserve(PRIMARY, 10.0, 0.0, 10.0, 0.0)
    succ, _ = c.reserve(PRIMARY, 6.0, 14.0, 26.0, 0.0)
    got = c.defragment(PRIMARY, 8.0, 10.0, 20.0, 0.0)
    assert got is not None
    (ws, we), moved = got
    assert ws == 10.0
    assert we >= 18.0
    assert moved and moved[0][0] == succ.rid


def test_locked_reservations_do_not_slide(core_cls):
    c = cal(core_cls)
    c.reserve(PRIMARY, 10.0, 0.0, 10.0, 0.0)
    succ, _ = c.reserve(PRIMARY, 6.0, 14.0, 26.0, 0.0)
    c.lock(succ.rid)
    assert c.reserve(PRIMARY, 8.0, 10.0, 20.0, 0.0) is None
    assert c.start_of(succ.rid) == 14.0


# -- release ------------------------------------------------------------------

def test_release_coalesces_free_span(core_cls):
    c = cal(core_cls)
    a, _ = c.reserve(PRIMARY, 5.0, 0.0, 5.0, 0.0)
    b, _ = c.reserve(PRIMARY, 5.0, 5.0, 10.0, 0.0)
    d, _ = c.reserve(PRIMARY, 5.0, 10.0, 15.0, 0.0)
    c.release(b.rid)
    free = c.free_slots(PRIMARY, 0.0)
    assert (5.0, 10.0) in free
    c.release(a.rid)
    free = c.free_slots(PRIMARY, 0.0)
    assert (0.0, 10.0) in free


def test_release_then_reserve_same_parameters(core_cls):
    c = cal(core_cls)
    c.reserve(PRIMARY, 3.0, 0.0, 3.0, 0.0)
    r, _ = c.reserve(BACKUP, 7.5, 20.0, 35.0, 0.0)
    start = c.start_of(r.rid)
    c.release(r.rid)
    r2, _ = c.reserve(BACKUP, 7.5, 20.0, 35.0, 0.0)
    assert c.start_of(r2.rid) == start


def test_release_restores_pre_bid_snapshot(core_cls):
    c = cal(core_cls)
    c.reserve(PRIMARY, 4.0, 0.0, 4.0, 0.0)
    before = [row[1:] for row in c.snapshot()]
    r, _ = c.reserve(BACKUP, 2.0, 6.0, 10.0, 0.0)
    c.release(r.rid)
    assert [row[1:] for row in c.snapshot()] == before


def test_release_unknown_id_raises(core_cls):
    c = cal(core_cls)
    with pytest.raises(KeyError):
        c.release(99)


# -- over-subscription ---------------------------------------------------------

def test_backups_share_up_to_cap(core_cls):
    c = cal(core_cls, chi=2.0)
    r1 = c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0)
    r2 = c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0)
    r3 = c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0)
    assert r1 is not None and r2 is not None
    assert c.start_of(r1[0].rid) == c.start_of(r2[0].rid) == 10.0
    assert r3 is None  # third would exceed the cap


def test_primaries_never_share(core_cls):
    c = cal(core_cls, chi=4.0)
    b, _ = c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0)
    p = c.reserve(PRIMARY, 5.0, 10.0, 15.0, 0.0)
    assert p is None  # backup occupies the only feasible window
    p2 = c.reserve(PRIMARY, 5.0, 15.0, 20.0, 0.0)
    assert p2 is not None


def test_chi_one_disables_sharing(core_cls):
    c = cal(core_cls, chi=1.0)
    c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0)
    assert c.reserve(BACKUP, 5.0, 10.0, 15.0, 0.0) is None


def test_backup_can_fill_gap_between_shared_stacks(core_cls):
    c = cal(core_cls, chi=2.0)
    c.reserve(BACKUP, 3.0, 0.0, 3.0, 0.0)
    c.reserve(BACKUP, 3.0, 0.0, 3.0, 0.0)
    got = c.reserve(BACKUP, 3.0, 0.0, 6.0, 0.0)
    assert got is not None
    assert c.start_of(got[0].rid) == 3.0


# -- free-slot reporting --------------------------------------------------------

def test_top_free_orders_by_length(core_cls):
    c = cal(core_cls)
    c.reserve(PRIMARY, 2.0, 5.0, 7.0, 0.0)    # busy [5,7)
    c.reserve(PRIMARY, 3.0, 12.0, 15.0, 0.0)  # busy [12,15)
    top = c.top_free(3, 0.0)
    assert top[0][1] == INF                    # unbounded tail is always longest
    assert top[1] == (0.0, 5.0)
    assert top[2] == (7.0, 12.0)


def test_free_slots_match_bruteforce_scan(core_cls):
    rng = random.Random(5)
    for trial in range(40):
        c = cal(core_cls)
        now = rng.uniform(0, 5)
        for _ in range(rng.randint(0, 12)):
            w0 = rng.uniform(0, 60)
            dur = rng.uniform(0.5, 6)
            c.reserve(PRIMARY, dur, w0, w0 + dur + rng.uniform(0, 20), now)
        assert c.free_slots(PRIMARY, now) == brute_free(c.snapshot(), now)


# -- feasibility oracle ----------------------------------------------------------

def exhaustive_feasible(jobs):
    """Exact single-timeline feasibility: try every ordering, place each job
    greedily at max(prev_end, earliest)."""
    n = len(jobs)
    for order in itertools.permutations(range(n)):
        t = 0.0
        ok = True
        for j in order:
            dur, omega, sigma = jobs[j]
            start = max(t, omega)
            if start + dur > sigma:
                ok = False
                break
            t = start + dur
        if ok:
            return True
    return False


def test_heuristic_success_implies_bruteforce_feasible(core_cls):
    rng = random.Random(13)
    heuristic_wins = 0
    oracle_only = 0
    for trial in range(120):
        jobs = []
        for _ in range(rng.randint(2, 6)):
            dur = rng.uniform(1, 6)
            omega = rng.uniform(0, 18)
            slack = rng.uniform(0, 8)
            jobs.append((dur, omega, omega + dur + slack))
        c = cal(core_cls)
        placed_all = True
        for dur, omega, sigma in jobs:
            if c.reserve(PRIMARY, dur, omega, sigma, 0.0) is None:
                placed_all = False
                break
        feasible = exhaustive_feasible(jobs)
        if placed_all:
            heuristic_wins += 1
            assert feasible, f"heuristic placed an infeasible set: {jobs}"
        elif feasible:
            oracle_only += 1  # allowed: heuristic may fail where search succeeds
    assert heuristic_wins > 20  # sanity: the heuristic is not vacuously failing


def snapshot_valid(snapshot, cap):
    """Independent invariant check: bounds and overlap rules."""
    for rid, s, d, omega, sigma, kind, locked in snapshot:
        assert s >= omega - 1e-9, f"{rid} starts before earliest"
        assert s + d <= sigma + 1e-9, f"{rid} ends after latest"
    events = []
    for rid, s, d, omega, sigma, kind, locked in snapshot:
        events.append((s, 1, kind))
        events.append((s + d, -1, kind))
    points = sorted({t for t, _, _ in events})
    for i in range(len(points) - 1):
        mid = (points[i] + points[i + 1]) / 2
        prim = sum(1 for rid, s, d, *_rest in snapshot
                   if s <= mid < s + d and _rest[2] == PRIMARY)
        back = sum(1 for rid, s, d, *_rest in snapshot
                   if s <= mid < s + d and _rest[2] == BACKUP)
        assert prim <= 1, "primary overlap"
        if prim:
            assert back == 0, "backup under a primary"
        assert back <= cap, "backup stack above cap"


def test_random_sequences_keep_invariants(core_cls):
    rng = random.Random(23)
    for trial in range(30):
        chi = rng.choice([1.0, 1.0, 2.0, 3.0])
        c = cal(core_cls, chi=chi)
        live = []
        now = 0.0
        for step in range(40):
            now += rng.uniform(0, 1.5)
            op = rng.random()
            if op < 0.6 or not live:
                kind = PRIMARY if rng.random() < 0.5 else BACKUP
                dur = rng.uniform(0.5, 5)
                omega = now + rng.uniform(0, 15)
                sigma = omega + dur + rng.uniform(0, 10)
                got = c.reserve(kind, dur, omega, sigma, now)
                if got is not None:
                    live.append(got[0].rid)
            else:
                rid = live.pop(rng.randrange(len(live)))
                c.release(rid)
            snapshot_valid(c.snapshot(), int(chi))
