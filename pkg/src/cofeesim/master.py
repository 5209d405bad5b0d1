"""Master-side scheduling protocol: inquiry construction, candidate fog
selection, the always-available cloud bid, and winner selection.

These are pure functions over small value types so the protocol can be
tested without spinning up the event loop; the engine supplies timing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import CLOUD, EDGE, FOG, ConfigError, exec_cost, transfer_cost, transfer_time

_TIER_RANK = {EDGE: 0, FOG: 1, CLOUD: 2}


@dataclass
class MasterConfig:
    fanout: int = 2              # fogs asked per inquiry
    inquiry_timeout: float = 1.0  # seconds the master waits for bids
    report_top_k: int = 3
    report_period: float = 5.0

    def __post_init__(self):
        if self.fanout < 1:
            raise ConfigError("inquiry fan-out must be >= 1")
        if self.inquiry_timeout <= 0:
            raise ConfigError("inquiry timeout must be positive")
        if self.report_top_k < 1:
            raise ConfigError("report top-k must be >= 1")
        if self.report_period <= 0:
            raise ConfigError("report period must be positive")


@dataclass
class Inquiry:
    """What the master tells candidate fogs about one ready task."""

    inquiry_id: int
    task_key: str
    task_id: str
    base_time: float
    sub_deadline: float
    mb_id: str
    mb_size: int
    mb_location: str
    issue_time: float

    def __post_init__(self):
        if self.sub_deadline <= self.issue_time:
            raise ConfigError("inquiry issued at or after its sub-deadline")


@dataclass
class Bid:
    """A fog's (or the cloud's) answer to an inquiry."""

    inquiry_id: int
    bidder: str | None      # fog id; None for the cloud's implicit bid
    worker: str | None
    worker_tier: str | None
    cost: float = 0.0
    viable: bool = False
    reservation_rid: int | None = None


def empty_bid(inquiry_id: int, bidder: str) -> Bid:
    return Bid(inquiry_id, bidder, None, None, viable=False)


def select_candidate_fogs(inquiry: Inquiry, fog_reports: dict, fogs: dict,
                          now: float, fanout: int) -> list:
    """Fogs worth asking, cheapest first, at most `fanout` of them.

    `fog_reports` maps fog id to its latest reported free slots (start, end)
    with an unbounded tail allowed.  A fog qualifies when any reported slot
    can hold the task's fog-speed duration before the sub-deadline.
    """
    viable = []
    for fog_id, slots in fog_reports.items():
        fog = fogs[fog_id]
        if not fog.alive:
            continue
        need = inquiry.base_time / fog.speed
        for t, t_end in slots:
            start = t if t > now else now
            limit = t_end if t_end < inquiry.sub_deadline else inquiry.sub_deadline
            if start + need <= limit:
                viable.append(fog_id)
                break
    viable.sort(key=lambda fid: (fogs[fid].price, fid))
    return viable[:fanout]


def cloud_bid(inquiry: Inquiry, cloud, mb, topology, now: float,
              control_latency: float = 0.0) -> Bid:
    """The implicit cloud bid: viable iff transfer plus execution fits the
    sub-deadline from `now`; cloud capacity is never a constraint."""
    src = topology.resources[inquiry.mb_location]
    d = transfer_time(mb, src, cloud, topology.network)
    exec_dur = inquiry.base_time / cloud.speed
    viable = now + control_latency + d + exec_dur <= inquiry.sub_deadline
    cost = (transfer_cost(mb, src, cloud, topology.network)
            + exec_cost(inquiry.base_time, cloud, topology.billing))
    return Bid(inquiry.inquiry_id, None, cloud.id, CLOUD, cost=cost, viable=viable)


def pick_winner(bids) -> Bid | None:
    """Cheapest viable bid; ties prefer captive tiers (edge, fog, cloud),
    then the smaller worker id."""
    best = None
    for bid in bids:
        if not bid.viable:
            continue
        key = (bid.cost, _TIER_RANK[bid.worker_tier], bid.worker)
        if best is None or key < best[0]:
            best = (key, bid)
    return best[1] if best else None
