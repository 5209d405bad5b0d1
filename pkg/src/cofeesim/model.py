"""Resources, network paths and billing arithmetic shared by every module.

All times are simulated seconds (floats), data sizes are bytes, bandwidths
are bits/sec and money is in currency-cents.  Costs are kept at full float
precision; rounding happens only when reports are rendered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EDGE = "edge"
FOG = "fog"
CLOUD = "cloud"

TIERS = (EDGE, FOG, CLOUD)


class Unreachable(Exception):
    """Raised when a transfer is requested over a pair with zero bandwidth."""


class ConfigError(ValueError):
    """Raised when a topology / run description fails validation."""


@dataclass
class Resource:
    """One worker: an edge device, a fog node or a cloud VM.

    `speed` is the performance scaling relative to the slowest (base)
    resource class, so a task with base duration `t` runs in `t / speed`.
    `price` is cents charged per billing increment.  `partition` is the id
    of the parent fog for edges, the fog's own id for fogs, and None for
    cloud workers.
    """

    id: str
    tier: str
    speed: float
    price: float
    partition: str | None = None
    failure_prob: float = 0.0
    alive: bool = True

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ConfigError(f"unknown tier {self.tier!r} for resource {self.id}")
        if self.speed < 1.0:
            raise ConfigError(f"resource {self.id}: speed must be >= 1 (base class is 1)")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ConfigError(f"resource {self.id}: failure_prob outside [0, 1]")
        if self.tier != EDGE and self.failure_prob != 0.0:
            raise ConfigError(f"resource {self.id}: only edges may have failure_prob > 0")


@dataclass
class MicroBatchMeta:
    """Metadata tuple for one micro-batch; content itself is never modeled."""

    id: str
    sid: str
    t_begin: float
    t_end: float
    lat: float
    lon: float
    kv: frozenset
    size_bytes: int
    location: str

    def __post_init__(self):
        if self.t_begin > self.t_end:
            raise ConfigError(f"micro-batch {self.id}: t_begin > t_end")
        if self.size_bytes <= 0:
            raise ConfigError(f"micro-batch {self.id}: size must be positive")


@dataclass
class BillingPolicy:
    """Ceiling billing on a fixed increment: cost = ceil(busy / increment) * price."""

    increment: float = 1.0

    def __post_init__(self):
        if self.increment <= 0:
            raise ConfigError("billing increment must be positive")

    def cost(self, busy_seconds: float, resource: Resource) -> float:
        """Cents charged for occupying `resource` for `busy_seconds` wall time."""
        if busy_seconds <= 0:
            return 0.0
        return math.ceil(busy_seconds / self.increment) * resource.price


@dataclass
class LinkSpec:
    """Effective parameters of one network hop."""

    bandwidth_bps: float
    latency_s: float
    price_per_byte: float = 0.0

    def time_for(self, size_bytes: float) -> float:
        if self.bandwidth_bps <= 0:
            raise Unreachable("hop has zero bandwidth")
        return self.latency_s + (size_bytes * 8.0) / self.bandwidth_bps


class NetworkModel:
    """Tier-pair link table plus the routing rule that edge traffic transits
    its parent fog.

    `pairs` maps frozenset tier pairs (e.g. {edge, fog}) to LinkSpec.  A
    missing pair or zero bandwidth means the tiers cannot reach each other.
    """

    def __init__(self, pairs: dict, parent_of: dict):
        self._pairs = {frozenset(k): v for k, v in pairs.items()}
        self._parent_of = parent_of  # edge id -> fog Resource

    def link(self, a: Resource, b: Resource) -> LinkSpec:
        spec = self._pairs.get(frozenset((a.tier, b.tier)))
        if spec is None or spec.bandwidth_bps <= 0:
            raise Unreachable(f"no usable link between {a.id} ({a.tier}) and {b.id} ({b.tier})")
        return spec

    def control_latency(self, a: Resource, b: Resource) -> float:
        """Latency for a small control message (size ignored)."""
        if a.id == b.id:
            return 0.0
        return sum(self.link(x, y).latency_s for x, y in self.route(a, b))

    def tier_latency(self, tier_a: str, tier_b: str) -> float:
        """Control latency between two tiers; used for master traffic (the
        master runs on a cloud VM outside the worker set)."""
        spec = self._pairs.get(frozenset((tier_a, tier_b)))
        if spec is None or spec.bandwidth_bps <= 0:
            raise Unreachable(f"no usable link between tiers {tier_a} and {tier_b}")
        return spec.latency_s

    def rebind(self, resources: dict) -> "NetworkModel":
        """Same link table, parent map rebuilt over another resource set."""
        parent_of = {r.id: resources[r.partition]
                     for r in resources.values() if r.tier == EDGE}
        clone = NetworkModel({}, parent_of)
        clone._pairs = self._pairs
        return clone

    def route(self, src: Resource, dst: Resource) -> list:
        """Hops from src to dst as (from, to) resource pairs.

        Edges talk only through their parent fog, in both directions; all
        fog and cloud resources reach each other directly.
        """
        if src.id == dst.id:
            return []
        head = []
        a = src
        if a.tier == EDGE:
            parent = self._parent_of[a.id]
            head.append((a, parent))
            a = parent
        tail = []
        b = dst
        if b.tier == EDGE:
            parent = self._parent_of[b.id]
            tail.append((parent, b))
            b = parent
        mid = [(a, b)] if a.id != b.id else []
        return head + mid + tail


def transfer_time(mb: MicroBatchMeta, src: Resource, dst: Resource, net: NetworkModel) -> float:
    """Seconds to move a micro-batch from src to dst, summed over route hops."""
    total = 0.0
    for a, b in net.route(src, dst):
        total += net.link(a, b).time_for(mb.size_bytes)
    return total


def transfer_cost(mb: MicroBatchMeta, src: Resource, dst: Resource, net: NetworkModel) -> float:
    """Cents charged for moving a micro-batch from src to dst."""
    total = 0.0
    for a, b in net.route(src, dst):
        link = net.link(a, b)  # raises Unreachable even though price may be 0
        total += mb.size_bytes * link.price_per_byte
    return total


def exec_cost(base_time: float, resource: Resource, billing: BillingPolicy) -> float:
    """Cents to run a task with the given base duration on `resource`."""
    if base_time <= 0:
        raise ValueError("base_time must be positive")
    return billing.cost(base_time / resource.speed, resource)


@dataclass
class Topology:
    """All resources of one deployment plus the network between them."""

    resources: dict = field(default_factory=dict)
    network: NetworkModel | None = None
    billing: BillingPolicy = field(default_factory=BillingPolicy)

    def __post_init__(self):
        self._children: dict[str, list] = {}
        for r in self.resources.values():
            if r.tier == EDGE:
                self._children.setdefault(r.partition, []).append(r)

    @property
    def edges(self) -> list:
        return [r for r in self.resources.values() if r.tier == EDGE]

    @property
    def fogs(self) -> list:
        return [r for r in self.resources.values() if r.tier == FOG]

    @property
    def clouds(self) -> list:
        return [r for r in self.resources.values() if r.tier == CLOUD]

    def children(self, fog_id: str) -> list:
        """Edge children of a fog partition."""
        return self._children.get(fog_id, [])

    def parent(self, edge_id: str) -> Resource:
        return self.resources[self.resources[edge_id].partition]

    def validate(self):
        fog_ids = {r.id for r in self.fogs}
        for r in self.resources.values():
            if r.tier == EDGE:
                if r.partition not in fog_ids:
                    raise ConfigError(f"edge {r.id} references unknown fog {r.partition!r}")
            elif r.tier == FOG:
                if r.partition != r.id:
                    raise ConfigError(f"fog {r.id} must be its own partition")
            elif r.partition is not None:
                raise ConfigError(f"cloud {r.id} must not belong to a partition")
        if not self.clouds:
            raise ConfigError("topology needs at least one cloud worker")
        return self

    def clone(self) -> "Topology":
        """Independent copy; runs mutate liveness, so each run gets its own."""
        resources = {
            rid: Resource(r.id, r.tier, r.speed, r.price, r.partition,
                          r.failure_prob, r.alive)
            for rid, r in self.resources.items()
        }
        return Topology(resources=resources,
                        network=self.network.rebind(resources),
                        billing=BillingPolicy(self.billing.increment))


def build_network(pair_params: dict, topology_resources: dict) -> NetworkModel:
    """Make a NetworkModel from tier-pair parameter dicts.

    `pair_params` keys are (tier, tier) tuples; values are dicts with
    bandwidth_bps / latency_s / price_per_byte entries.
    """
    parent_of = {}
    for r in topology_resources.values():
        if r.tier == EDGE:
            parent_of[r.id] = topology_resources[r.partition]
    pairs = {
        k: LinkSpec(
            bandwidth_bps=v["bandwidth_bps"],
            latency_s=v["latency_s"],
            price_per_byte=v.get("price_per_byte", 0.0),
        )
        for k, v in pair_params.items()
    }
    return NetworkModel(pairs, parent_of)
