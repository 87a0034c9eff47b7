"""Message records passed between nodes.

These are plain payload carriers: routing logic owns their semantics and
the medium only needs a wire class (for byte accounting) and a size.
Sizes derive from the configured header constants; path-carrying
messages grow with their recorded hop lists.

Unicast messages that follow an explicit path carry `remaining`: the hop
sequence still ahead of the current holder.  Forwarders send a copy with
the head consumed, so the message itself is the traversal state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import ClassVar

from meshsim.config import ScenarioConfig

# bytes per recorded hop entry in a request/reply: node id + link quality
HOP_ENTRY_BYTES = 8


@dataclass(frozen=True, slots=True)
class Hello:
    """One-hop beacon: announces presence, neighbor set and relay selectors."""

    kind: ClassVar[str] = "hello"
    sender: int
    neighbors: tuple[int, ...]
    relay_selectors: tuple[int, ...]
    is_gateway: bool = False

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.hello_bytes


@dataclass(frozen=True, slots=True)
class GwInfo:
    """Gateway advertisement, rebroadcast hop by hop inside one subnet.

    `hops` is the forwarder's own distance to the gateway (0 for the
    gateway itself); `subnet_id` is stamped by the first mesh receiver so
    each copy floods exactly one subnet.
    """

    kind: ClassVar[str] = "gw_info"
    gateway_id: int
    seq: int
    hops: int
    forwarder: int
    subnet_id: int | None = None

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.gw_info_bytes


@dataclass(frozen=True, slots=True)
class Rreq:
    """Route request flooded inside the scope of the two endpoint subnets.

    hop_list accumulates the traversed nodes (source first); link_quality
    accumulates the measured reliability of each traversed link, so the
    destination can score the discovered path.  gw_id/gw_hops describe
    the source's gateway attachment (gw_id < 0 when it knows none) for
    the destination's routing-domain decision.  reply_to redirects the
    reply for local repair requests; ttl is None for scope-bounded floods
    and a small hop budget for repairs.
    """

    kind: ClassVar[str] = "rreq"
    flow_id: int
    request_id: int
    source: int
    dest: int
    scope: frozenset[int]
    gw_id: int
    gw_hops: int
    hop_list: tuple[int, ...]
    link_quality: tuple[float, ...]
    reply_to: int | None = None
    ttl: int | None = None

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.rreq_bytes + HOP_ENTRY_BYTES * len(self.hop_list)

    def extended(self, node: int, quality: float) -> "Rreq":
        """Copy with this forwarder appended and the hop budget consumed."""
        return dataclasses.replace(
            self,
            hop_list=self.hop_list + (node,),
            link_quality=self.link_quality + (quality,),
            ttl=None if self.ttl is None else self.ttl - 1,
        )


@dataclass(frozen=True, slots=True)
class Rrep:
    """Route reply travelling back to the requester.

    Mesh domain: `route` is the complete forward path source..dest and
    `remaining` walks it backwards.  Wired domain: the reply leaves the
    destination towards its gateway (remaining=None, chain routing), every
    transmitter appends itself to `route`, the wire crosses between
    via_gateways, and the source gateway switches to explicit traversal
    using its registered reverse path; the requester reconstructs the
    forward route by reversing the recorded travel.  reverse_route carries
    the mesh return path (dest..source) a circular flow will use.
    """

    kind: ClassVar[str] = "rrep"
    flow_id: int
    request_id: int
    source: int
    dest: int
    domain: str
    candidate_index: int
    path_reliability: float
    route: tuple[int, ...]
    reverse_route: tuple[int, ...] = ()
    via_gateways: tuple[int, ...] = ()
    remaining: tuple[int, ...] | None = None
    reply_to: int | None = None

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        entries = len(self.route) + len(self.reverse_route)
        return cfg.rrep_bytes + HOP_ENTRY_BYTES * entries

    def advanced(self, **changes) -> "Rrep":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, slots=True)
class Probe:
    """Data-sized probe sent along a candidate route before admission."""

    kind: ClassVar[str] = "probe"
    flow_id: int
    request_id: int
    candidate_index: int
    seq: int
    expected: int
    route: tuple[int, ...]
    remaining: tuple[int, ...]
    direction: str  # "forward" (src->dst) or "reverse" (dst->src)
    sent_at: float
    reverse_hint: tuple[int, ...] = ()  # dst's return path for the report

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.packet_size_bytes

    def advanced(self) -> "Probe":
        return dataclasses.replace(self, remaining=self.remaining[1:])


@dataclass(frozen=True, slots=True)
class ProbeReport:
    """Destination's measurement summary, returned to the source."""

    kind: ClassVar[str] = "probe_report"
    flow_id: int
    request_id: int
    candidate_index: int
    delays: tuple[float, ...]
    remaining: tuple[int, ...]

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.rrep_bytes + 4 * len(self.delays)

    def advanced(self) -> "ProbeReport":
        return dataclasses.replace(self, remaining=self.remaining[1:])


@dataclass(frozen=True, slots=True)
class RouteError:
    """Broken-link notice sent back to the flow source."""

    kind: ClassVar[str] = "rerr"
    flow_id: int
    broken_from: int
    broken_to: int
    remaining: tuple[int, ...]

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.rerr_bytes

    def advanced(self) -> "RouteError":
        return dataclasses.replace(self, remaining=self.remaining[1:])


@dataclass(frozen=True, slots=True)
class RouteUpdate:
    """Patch distributed after a successful local repair: the detour
    segment replacing the broken tail for one flow."""

    kind: ClassVar[str] = "route_update"
    flow_id: int
    repaired_at: int
    segment: tuple[int, ...]
    remaining: tuple[int, ...]

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.rerr_bytes + HOP_ENTRY_BYTES * len(self.segment)

    def advanced(self) -> "RouteUpdate":
        return dataclasses.replace(self, remaining=self.remaining[1:])


@dataclass(frozen=True, slots=True)
class DataPacket:
    """Source-routed payload packet.

    `route` is the full forward path (static header) and `remaining` the
    suffix still ahead; scope rides along so a relay can run a local
    repair flood without asking the source.
    """

    kind: ClassVar[str] = "data"
    flow_id: int
    seq: int
    source: int
    dest: int
    route: tuple[int, ...]
    remaining: tuple[int, ...]
    scope: frozenset[int]
    sent_at: float

    def size_bytes(self, cfg: ScenarioConfig) -> int:
        return cfg.packet_size_bytes

    def advanced(self) -> "DataPacket":
        return dataclasses.replace(self, remaining=self.remaining[1:])


Message = (
    Hello
    | GwInfo
    | Rreq
    | Rrep
    | Probe
    | ProbeReport
    | RouteError
    | RouteUpdate
    | DataPacket
)

# wire classes whose bytes count as routing control overhead; beacons and
# probe traffic are tracked in their own buckets
CONTROL_KINDS = frozenset({"rreq", "rrep", "rerr", "route_update", "probe_report"})
BEACON_KINDS = frozenset({"hello", "gw_info"})
