"""Node beacon plane: hellos, link bookkeeping, relay sets, gateway info.

Each node runs a periodic hello advertising its usable neighbor set and
its chosen relays; receivers feed every heard control packet into the
link reliability table, whose windows close for all nodes at shared
ticks.  Gateways additionally beacon reachability announcements that
flood one subnet per stamped copy, giving every member a next hop and a
hop count towards its nearest gateway.

Routing (discovery, probing, data) is layered on top: the node object
dispatches non-beacon traffic to the router attached to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import TYPE_CHECKING

from meshsim.config import ScenarioConfig, VariantFeatures
from meshsim.engine import Simulator
from meshsim.linkmetrics import LinkReliabilityTable
from meshsim.medium import MediumModel
from meshsim.messages import GwInfo, Hello, Message
from meshsim.mpr import MprState, check_bidirectional, select_mprs
from meshsim.topology import Topology

if TYPE_CHECKING:
    from meshsim.routing import Router

# gateway table entries go stale after this many announcement intervals
GW_STALE_INTERVALS = 3.0
# dedup caches forget entries older than this horizon, seconds
DEDUP_HORIZON_S = 30.0


@dataclass(slots=True)
class GatewayRecord:
    hops: int
    next_hop: int
    seq: int
    heard_at: float
    # best of the previous advertisement generation; one flood's partial
    # propagation must not flap the gradient
    prev_hops: int = 1 << 30
    prev_next_hop: int = -1


class MeshNode:
    """Beacon-plane state for one node (router, client or gateway)."""

    def __init__(
        self,
        node_id: int,
        role: str,
        subnet_id: int | None,
        net: "Network",
        selfish: bool = False,
    ) -> None:
        self.node_id = node_id
        self.role = role
        self.subnet_id = subnet_id
        self.net = net
        self.selfish = selfish
        cfg = net.cfg
        self.links = LinkReliabilityTable(alpha=cfg.reliability_alpha, window=cfg.reliability_window_s)
        self.heard: dict[int, Hello] = {}
        self.mpr_state = MprState(self_id=node_id)
        self.selector_sources: set[int] = set()
        self.gw_table: dict[int, GatewayRecord] = {}
        self._gwinfo_seen: dict[tuple[int, int], float] = {}
        self.router: "Router | None" = None

    # -- beaconing -------------------------------------------------------

    @property
    def hello_interval(self) -> float:
        return self.net.cfg.igw_hello_interval_s if self.role == "IGW" else self.net.cfg.hello_interval_s

    def eligible_neighbors(self) -> list[int]:
        """Bidirectional neighbors whose link reliability clears the bar."""
        threshold = self.net.cfg.reliability_threshold
        out = []
        for neighbor, hello in self.heard.items():
            if not check_bidirectional(self.node_id, hello.neighbors):
                continue
            if self.links.get(neighbor) >= threshold:
                out.append(neighbor)
        return sorted(out)

    def refresh_relays(self) -> None:
        """Recompute the relay set from the current one/two-hop view.

        Floods are scoped to at most two subnets and only in-scope nodes
        retransmit, so a single global cover is not enough: coverage that
        leans on a relay from a third subnet silently breaks inside a
        scope that excludes it.  Instead the two-hop set is covered once
        per flooding domain (own subnet paired with each subnet present
        nearby) using only that domain's nodes, and the announced relay
        set is the union.  Subnet membership is association state fixed
        at join time, so reading it from the deployment record is fair.
        Gateways never retransmit floods and never need covering, which
        the domain restriction expresses by itself (their subnet is None).
        """
        subnet = self.net.topo.subnet_of
        one_hop = set(self.eligible_neighbors())
        two_hop: dict[int, set[int]] = {}
        for neighbor in one_hop:
            hello = self.heard.get(neighbor)
            if hello is not None:
                two_hop[neighbor] = set(hello.neighbors)

        present: set[int] = {s for s in (subnet(n) for n in one_hop) if s is not None}
        for advertised in two_hop.values():
            present.update(
                s for s in (subnet(z) for z in advertised) if s is not None
            )
        if self.subnet_id is not None:
            present.add(self.subnet_id)

        selected: set[int] = set()
        uncoverable: set[int] = set()
        for other in sorted(present):
            domain = {self.subnet_id, other}
            sub_one = {n for n in one_hop if subnet(n) in domain}
            sub_two = {
                n: {z for z in two_hop.get(n, ()) if subnet(z) in domain}
                for n in sub_one
            }
            state = MprState(self_id=self.node_id, one_hop=sub_one, two_hop=sub_two)
            sel, unc = select_mprs(state)
            selected |= sel
            uncoverable |= unc

        self.mpr_state.one_hop = one_hop
        self.mpr_state.two_hop = two_hop
        self.mpr_state.selected = selected
        self.mpr_state.uncoverable = uncoverable

    def compose_hello(self) -> Hello:
        if self.net.features.mpr:
            self.refresh_relays()
            selectors = tuple(sorted(self.mpr_state.selected))
        else:
            selectors = ()
        return Hello(
            sender=self.node_id,
            neighbors=tuple(self.eligible_neighbors()) or tuple(sorted(self.heard)),
            relay_selectors=selectors,
            is_gateway=self.role == "IGW",
        )

    def send_hello(self) -> None:
        self.net.broadcast(self.node_id, self.compose_hello())

    # -- gateway announcements --------------------------------------------

    def _gateway_view(self, rec: GatewayRecord) -> tuple[int, int] | None:
        """Best usable (hops, next_hop) over the last two flood generations."""
        views = [(rec.hops, rec.next_hop)]
        if rec.prev_next_hop >= 0:
            views.append((rec.prev_hops, rec.prev_next_hop))
        views.sort()
        threshold = self.net.cfg.reliability_threshold
        for hops, next_hop in views:
            if self.links.eligible(next_hop, threshold):
                return hops, next_hop
        return None

    def best_gateway(self) -> tuple[int, int, int] | None:
        """Nearest fresh gateway as (gateway_id, hops, next_hop); ties: lower id."""
        cfg = self.net.cfg
        horizon = GW_STALE_INTERVALS * cfg.gw_info_interval_s
        best: tuple[int, int, int] | None = None
        for gw_id in sorted(self.gw_table):
            rec = self.gw_table[gw_id]
            if self.net.sim.now - rec.heard_at > horizon:
                continue
            view = self._gateway_view(rec)
            if view is None:
                continue
            if best is None or view[0] < best[1]:
                best = (gw_id, view[0], view[1])
        return best

    def gateway_next_hop(self, gateway_id: int) -> int | None:
        """Usable next hop towards one specific gateway, if known."""
        rec = self.gw_table.get(gateway_id)
        if rec is None:
            return None
        if self.net.sim.now - rec.heard_at > GW_STALE_INTERVALS * self.net.cfg.gw_info_interval_s:
            return None
        view = self._gateway_view(rec)
        return None if view is None else view[1]

    def _on_gw_info(self, msg: GwInfo) -> None:
        now = self.net.sim.now
        rec = self.gw_table.get(msg.gateway_id)
        hops = msg.hops + 1
        if rec is None:
            self.gw_table[msg.gateway_id] = GatewayRecord(hops, msg.forwarder, msg.seq, now)
        elif msg.seq > rec.seq:
            # new flood generation: keep the old best around so one badly
            # routed first copy cannot flap the gradient
            rec.prev_hops, rec.prev_next_hop = rec.hops, rec.next_hop
            rec.hops, rec.next_hop, rec.seq = hops, msg.forwarder, msg.seq
            rec.heard_at = now
        elif msg.seq == rec.seq and hops < rec.hops:
            rec.hops, rec.next_hop = hops, msg.forwarder
            rec.heard_at = now
        else:
            rec.heard_at = now

        if self.role == "IGW" or self.selfish:
            return
        key = (msg.gateway_id, msg.seq)
        if key in self._gwinfo_seen:
            return
        self._gwinfo_seen[key] = now
        self._trim(self._gwinfo_seen)

        # gateway gradients are infrastructure state: every dependable
        # in-subnet link relays them once, independent of relay election,
        # so gradient quality never hinges on the discovery optimization
        stamped = msg.subnet_id if msg.subnet_id is not None else self.subnet_id
        if stamped != self.subnet_id:
            return
        reliability = self.links.get(msg.forwarder)
        if reliability < self.net.cfg.reliability_threshold:
            return
        fwd = GwInfo(
            gateway_id=msg.gateway_id,
            seq=msg.seq,
            hops=hops,
            forwarder=self.node_id,
            subnet_id=stamped,
        )
        self.net.broadcast(self.node_id, fwd)

    def _trim(self, cache: dict) -> None:
        if len(cache) > 512:
            cutoff = self.net.sim.now - DEDUP_HORIZON_S
            for key in [k for k, t in cache.items() if t < cutoff]:
                del cache[key]

    # -- receive dispatch --------------------------------------------------

    def receive(self, msg: Message, prev_hop: int) -> None:
        kind = msg.kind
        if kind in ("hello", "gw_info", "rreq", "rrep"):
            self.links.record_control_packet(prev_hop)
        if kind == "hello":
            self.heard[prev_hop] = msg
            interval = (
                self.net.cfg.igw_hello_interval_s if msg.is_gateway else self.net.cfg.hello_interval_s
            )
            self.links.note_interval(prev_hop, interval)
            if self.node_id in msg.relay_selectors:
                self.selector_sources.add(prev_hop)
            else:
                self.selector_sources.discard(prev_hop)
            return
        if kind == "gw_info":
            self._on_gw_info(msg)
            return
        if self.router is not None:
            self.router.receive(msg, prev_hop)


class Network:
    """Wires the node set to the medium and runs the shared timers."""

    def __init__(
        self,
        sim: Simulator,
        topo: Topology,
        cfg: ScenarioConfig,
        medium: MediumModel,
        features: VariantFeatures,
        selfish: frozenset[int],
        rng: Random,
    ) -> None:
        self.sim = sim
        self.topo = topo
        self.cfg = cfg
        self.medium = medium
        self.features = features
        self._rng = rng
        self.nodes: dict[int, MeshNode] = {
            nid: MeshNode(nid, rec.role, rec.subnet_id, self, selfish=nid in selfish)
            for nid, rec in sorted(topo.nodes.items())
        }
        self._gw_seq: dict[int, int] = {gid: 0 for gid in topo.igw_ids}

    # -- transport adapters ------------------------------------------------

    def broadcast(self, sender: int, msg: Message) -> None:
        self.medium.send_broadcast(
            sender, msg, on_delivered=lambda r, m=msg, s=sender: self.nodes[r].receive(m, s)
        )

    def unicast(self, sender: int, receiver: int, msg: Message, on_failed=None) -> None:
        self.medium.send_unicast(
            sender,
            receiver,
            msg,
            on_delivered=lambda m=msg, s=sender, r=receiver: self.nodes[r].receive(m, s),
            on_failed=on_failed,
        )

    def wired(self, sender: int, receiver: int, msg: Message) -> None:
        self.medium.send_wired(
            sender, receiver, msg, on_delivered=lambda m=msg, s=sender, r=receiver: self.nodes[r].receive(m, s)
        )

    # -- timers --------------------------------------------------------------

    def start(self) -> None:
        cfg = self.cfg
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.selfish:
                continue  # selfish clients stay silent on the beacon plane
            offset = self._rng.uniform(0.0, node.hello_interval)
            self.sim.schedule(offset, lambda n=node: self._hello_tick(n), "hello")
        if self.features.gw_info:
            for gid in sorted(self._gw_seq):
                offset = self._rng.uniform(0.0, cfg.gw_info_interval_s)
                self.sim.schedule(offset, lambda g=gid: self._gwinfo_tick(g), "gw_info")
        self.sim.schedule(cfg.reliability_window_s, self._window_tick, "window")

    def _hello_tick(self, node: MeshNode) -> None:
        node.send_hello()
        self.sim.schedule_in(node.hello_interval, lambda: self._hello_tick(node), "hello")

    def _gwinfo_tick(self, gateway_id: int) -> None:
        self._gw_seq[gateway_id] += 1
        msg = GwInfo(
            gateway_id=gateway_id,
            seq=self._gw_seq[gateway_id],
            hops=0,
            forwarder=gateway_id,
            subnet_id=None,
        )
        self.broadcast(gateway_id, msg)
        self.sim.schedule_in(
            self.cfg.gw_info_interval_s, lambda: self._gwinfo_tick(gateway_id), "gw_info"
        )

    def _window_tick(self) -> None:
        for nid in sorted(self.nodes):
            self.nodes[nid].links.close_window()
        self.sim.schedule_in(self.cfg.reliability_window_s, self._window_tick, "window")
