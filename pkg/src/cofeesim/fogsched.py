"""Fog-side bidding and reservation state for one fog partition.

The scheduler owns the partition's edge pool and the fog's slot calendar.
It computes bids (viability + expected maximum cost over candidate edges,
falling back to direct fog execution), and tracks temporary reservations
and edge holds until the master accepts or rejects.

Methods are time-explicit (`now` passed in) and side-effect only this
object, so the bid arithmetic is unit-testable without the event loop.
"""

from __future__ import annotations

from dataclasses import dataclass

from .master import Bid, Inquiry, empty_bid
from .model import EDGE, FOG, exec_cost, transfer_cost, transfer_time
from .slotcal import BACKUP, PRIMARY, SlotCalendar

IDLE = "idle"
HELD = "held"
BUSY = "busy"


@dataclass
class PendingBid:
    bid: Bid
    edge_id: str | None      # None means a direct fog-execution bid
    rid: int
    latest_edge_completion: float   # backup window start; data-ready time for direct bids
    transfer_estimate: float


class FogScheduler:
    def __init__(self, fog, edges, topology, inquiry_timeout, oversub_ratio=1.0,
                 failure_prob_fn=None):
        self.fog = fog
        self.edges = sorted(edges, key=lambda e: e.id)
        self.topology = topology
        self.inquiry_timeout = inquiry_timeout
        self.calendar = SlotCalendar(oversub_ratio)
        self.failure_prob_fn = failure_prob_fn or (lambda edge, now: edge.failure_prob)
        self.edge_state = {e.id: IDLE for e in edges}
        self.busy_until = 0.0     # fog executor is a single server
        self.pending: dict[int, PendingBid] = {}
        self.assigned: dict[str, object] = {}   # edge id -> TaskRun currently on it

    # -- bidding -------------------------------------------------------------

    def compute_bid(self, inquiry: Inquiry, mb, now: float):
        """Answer an inquiry.  Returns (Bid, moved) where `moved` lists
        reservations repositioned by defragmentation during slot search."""
        topo = self.topology
        src = topo.resources[inquiry.mb_location]
        theta = inquiry.base_time
        sigma = inquiry.sub_deadline
        fog_dur = theta / self.fog.speed
        fog_reexec_cost = exec_cost(theta, self.fog, topo.billing)

        candidates = []
        for edge in self.edges:
            if not edge.alive or self.edge_state[edge.id] != IDLE:
                continue
            d = transfer_time(mb, src, edge, topo.network)
            latest_completion = now + self.inquiry_timeout + d + theta / edge.speed
            if latest_completion + fog_dur > sigma:
                continue
            move_cost = transfer_cost(mb, src, edge, topo.network)
            if src.id == edge.id:
                # input already sits on the edge: the fog cache copy is the
                # only transfer, billed separately
                cache_cost = transfer_cost(mb, edge, self.fog, topo.network)
            else:
                cache_cost = 0.0  # the copy falls out of the transit through the fog
            expected_max = (move_cost + cache_cost
                            + exec_cost(theta, edge, topo.billing)
                            + self.failure_prob_fn(edge, now) * fog_reexec_cost)
            candidates.append((expected_max, edge.id, edge, latest_completion, d))

        candidates.sort(key=lambda c: (c[0], c[1]))
        for expected_max, _, edge, latest_completion, d in candidates:
            got = self.calendar.reserve(BACKUP, fog_dur, latest_completion, sigma,
                                        now, task_key=inquiry.task_key)
            if got is None:
                continue
            res, moved = got
            bid = Bid(inquiry.inquiry_id, self.fog.id, edge.id, EDGE,
                      cost=expected_max, viable=True, reservation_rid=res.rid)
            self.pending[inquiry.inquiry_id] = PendingBid(
                bid, edge.id, res.rid, latest_completion, d)
            self.edge_state[edge.id] = HELD
            return bid, moved

        # no edge works: try to run the task on the fog itself
        d_fog = transfer_time(mb, src, self.fog, topo.network)
        data_ready = now + self.inquiry_timeout + d_fog
        got = self.calendar.reserve(PRIMARY, fog_dur, data_ready, sigma,
                                    now, task_key=inquiry.task_key)
        if got is not None:
            res, moved = got
            cost = transfer_cost(mb, src, self.fog, topo.network) + fog_reexec_cost
            bid = Bid(inquiry.inquiry_id, self.fog.id, self.fog.id, FOG,
                      cost=cost, viable=True, reservation_rid=res.rid)
            self.pending[inquiry.inquiry_id] = PendingBid(bid, None, res.rid, data_ready, d_fog)
            return bid, moved

        return empty_bid(inquiry.inquiry_id, self.fog.id), []

    # -- master responses ------------------------------------------------------

    def on_accept(self, inquiry_id: int, now: float) -> PendingBid:
        state = self.pending.pop(inquiry_id, None)
        if state is None:
            raise KeyError(f"fog {self.fog.id}: accept for unknown bid {inquiry_id}")
        self.calendar.make_permanent(state.rid)
        if state.edge_id is not None:
            self.edge_state[state.edge_id] = BUSY
        return state

    def on_reject(self, inquiry_id: int):
        state = self.pending.pop(inquiry_id, None)
        if state is None:
            raise KeyError(f"fog {self.fog.id}: reject for unknown bid {inquiry_id}")
        self.calendar.release(state.rid)
        if state.edge_id is not None and self.edge_state.get(state.edge_id) == HELD:
            self.edge_state[state.edge_id] = IDLE

    # -- execution bookkeeping ---------------------------------------------------

    def free_edge(self, edge_id: str):
        self.edge_state[edge_id] = IDLE
        self.assigned.pop(edge_id, None)

    def release_backup(self, rid: int):
        if self.calendar.contains(rid):
            self.calendar.release(rid)

    def top_free(self, k: int, now: float):
        return self.calendar.top_free(k, now)
