"""Route discovery, QoS admission and the data plane.

One Router is attached to every node.  Flow sources run the discovery
state machine: scope-bounded request flood, reply collection, a probe
phase per candidate path, bandwidth/delay admission, then paced data.
Destinations score request copies, decide the routing domain (mesh or
through the wired gateway backbone), answer with replies and measure
probes.  Relays forward source-routed traffic, attempt local repair on
broken links and report what they cannot fix.

Domain choice: a reply goes "wired" when the two endpoints' gateway hop
counts sum to less than the discovered mesh path length.  Such a flow is
circular: data rides the wire forward while reports and reverse probes
use the discovered mesh path backwards, and the two wireless node sets
must stay disjoint outside the endpoints.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from meshsim import qos
from meshsim.config import ScenarioConfig, VariantFeatures
from meshsim.linkmetrics import path_reliability
from meshsim.messages import (
    DataPacket,
    Probe,
    ProbeReport,
    RouteError,
    RouteUpdate,
    Rrep,
    Rreq,
)
from meshsim.mpr import should_forward_broadcast

if TYPE_CHECKING:
    from meshsim.network import MeshNode, Network

# hop caps keep chain-routed messages from looping on stale tables
MAX_CHAIN_HOPS = 32
# guard around a probe phase: floor seconds, and a multiple of the bound
PROBE_GUARD_FLOOR_S = 1.0
PROBE_GUARD_BOUND_FACTOR = 6.0
# registrations and dedup entries expire after this horizon
STATE_HORIZON_S = 30.0


@dataclass(slots=True)
class Candidate:
    index: int
    domain: str
    forward_route: tuple[int, ...]
    reverse_route: tuple[int, ...]
    path_reliability: float
    via_gateways: tuple[int, ...] = ()

    @property
    def forward_hops(self) -> int:
        return len(self.forward_route) - 1


@dataclass(slots=True)
class FlowStats:
    offered: int = 0
    sent: int = 0
    delivered: int = 0
    lost: int = 0
    buffer_drops: int = 0
    delay_sum: float = 0.0
    delay_count: int = 0
    first_rreq_at: float | None = None
    first_rrep_at: float | None = None
    rrep_estimate: float | None = None
    probe_estimate: float | None = None
    admitted_at: float | None = None
    admissions: int = 0
    rejections: int = 0
    breaks: int = 0
    repairs_ok: int = 0
    rediscoveries: int = 0
    rreqs_sent: int = 0
    disjoint_rejects: int = 0

    @property
    def mean_delay(self) -> float | None:
        if self.delay_count == 0:
            return None
        return self.delay_sum / self.delay_count


@dataclass(slots=True)
class Flow:
    flow_id: int
    src: int
    dst: int
    scope: frozenset[int]
    start_at: float
    state: str = "waiting"
    epoch: int = 0
    buffer: deque = field(default_factory=deque)
    seq: int = 0
    request_id: int | None = None
    attempts_left: int = 0
    candidates: list[Candidate] = field(default_factory=list)
    probe_queue: list[int] = field(default_factory=list)
    probing: int | None = None
    report: ProbeReport | None = None
    reverse_session: qos.ProbeSession | None = None
    reverse_done: bool = False
    current: Candidate | None = None
    domain: str = ""
    last_rreq_at: float = -1.0e9
    failed_rounds: int = 0
    stats: FlowStats = field(default_factory=FlowStats)

    def bump(self) -> int:
        self.epoch += 1
        return self.epoch


@dataclass
class SharedState:
    """Run-level registries shared by the routers of one simulation.

    The probe ledgers stand in for the destination's loss classification:
    the channel knows why each probe died, and the admission logic reads
    those causes instead of re-inferring them from packet gaps.
    """

    flows: dict[int, Flow] = field(default_factory=dict)
    probe_ledgers: dict[tuple[int, int, int], qos.LossLedger] = field(default_factory=dict)
    trace: list[tuple] = field(default_factory=list)

    def ledger(self, key: tuple[int, int, int]) -> qos.LossLedger:
        """Loss ledger for one probe cycle: (flow, request, candidate)."""
        entry = self.probe_ledgers.get(key)
        if entry is None:
            entry = self.probe_ledgers[key] = qos.LossLedger()
        return entry


def _count_probe_loss(ledger: qos.LossLedger, cause: str) -> None:
    if cause == "congestion":
        ledger.lost_congestion += 1
    else:
        ledger.lost_link += 1


class Router:
    """Per-node routing agent layered over the beacon plane."""

    def __init__(self, node: "MeshNode", net: "Network", shared: SharedState) -> None:
        self.node = node
        self.net = net
        self.shared = shared
        self.cfg: ScenarioConfig = net.cfg
        self.features: VariantFeatures = net.features
        self._request_seq = 0
        # forwarder-side dedup of flooded requests
        self._rreq_seen: dict[tuple[int, int], float] = {}
        # destination-side reply bookkeeping per (source, request_id)
        self._replied_paths: dict[tuple[int, int], list[tuple[tuple[int, ...], str]]] = {}
        # destination-side probe sessions per (flow, request, candidate)
        self._sessions: dict[tuple[int, int, int], qos.ProbeSession] = {}
        self._session_reverse: dict[tuple[int, int, int], tuple[int, ...]] = {}
        self._session_wired: dict[tuple[int, int, int], bool] = {}
        # gateway-side reverse-path registrations per (source, request_id)
        self._registrations: dict[int, tuple[tuple[int, ...], int, float]] = {}
        # relay-side pending local repairs: (flow, broken next hop) -> prefix
        self._repairs: dict[tuple[int, int], tuple[int, ...]] = {}
        self._repair_requests: dict[int, tuple[int, int]] = {}
        node.router = self

    # ------------------------------------------------------------------ util

    @property
    def node_id(self) -> int:
        return self.node.node_id

    @property
    def now(self) -> float:
        return self.net.sim.now

    def _next_request_id(self) -> int:
        self._request_seq += 1
        return (self.node_id << 16) | self._request_seq

    def _probe_guard_delay(self) -> float:
        return max(PROBE_GUARD_FLOOR_S, PROBE_GUARD_BOUND_FACTOR * self.cfg.delay_bound_s)

    def _trace(self, event: str, *detail) -> None:
        if self.cfg.record_events:
            self.shared.trace.append((self.now, event, self.node_id, *detail))

    def _expire(self, cache: dict) -> None:
        if len(cache) > 512:
            cutoff = self.now - STATE_HORIZON_S
            stale = [k for k, v in cache.items() if (v if isinstance(v, float) else v[-1]) < cutoff]
            for key in stale:
                del cache[key]

    def _relay_unicast(self, next_hop: int, msg, on_failed=None) -> None:
        """One forwarding step; gateway-to-gateway pairs take the wire."""
        if self.node.role == "IGW" and next_hop in self.net.topo.igw_ids:
            self.net.wired(self.node_id, next_hop, msg)
        else:
            self.net.unicast(self.node_id, next_hop, msg, on_failed=on_failed)

    def _route_is_wired(self, route: tuple[int, ...]) -> bool:
        igws = self.net.topo.igw_ids
        return any(a in igws and b in igws for a, b in zip(route, route[1:]))

    # ------------------------------------------------------------- dispatch

    def receive(self, msg, prev_hop: int) -> None:
        kind = msg.kind
        if kind == "rreq":
            self._handle_rreq(msg, prev_hop)
        elif kind == "rrep":
            self._handle_rrep(msg)
        elif kind == "probe":
            self._handle_probe(msg)
        elif kind == "probe_report":
            self._handle_probe_report(msg)
        elif kind == "rerr":
            self._handle_rerr(msg)
        elif kind == "route_update":
            self._handle_route_update(msg)
        elif kind == "data":
            self._handle_data(msg)

    # ------------------------------------------------------ request flooding

    def _handle_rreq(self, msg: Rreq, prev_hop: int) -> None:
        if self.node.role == "IGW":
            # a request naming this gateway IS the registration: the flood
            # already carries a reverse path, so no separate exchange is
            # needed; every heard copy competes and the shortest wins
            if msg.gw_id == self.node_id and msg.hop_list:
                forwarder = msg.hop_list[-1]
                if self.node.links.eligible(forwarder, self.cfg.reliability_threshold):
                    path = tuple(reversed(msg.hop_list + (self.node_id,)))
                    held = self._registrations.get(msg.source)
                    if held is None or held[1] != msg.request_id or len(path) < len(held[0]):
                        self._registrations[msg.source] = (path, msg.request_id, self.now)
                        self._expire(self._registrations)
            return  # gateways neither answer nor relay mesh floods
        if self.features.scoped_flooding and self.node.subnet_id not in msg.scope:
            return
        self._trace("rreq_handled", self.node.subnet_id, msg.source, msg.request_id)

        if msg.dest == self.node_id:
            self._destination_rreq(msg)
            return
        requester = msg.reply_to if msg.reply_to is not None else msg.source
        if self.node_id == requester or self.node_id in msg.hop_list:
            return
        key = (msg.source, msg.request_id)
        if key in self._rreq_seen:
            return
        self._rreq_seen[key] = self.now
        self._expire(self._rreq_seen)

        if self.node.selfish:
            return
        if msg.ttl is not None and msg.ttl <= 0:
            return
        gate = should_forward_broadcast(
            is_relay_for_prev=(not self.features.mpr) or prev_hop in self.node.selector_sources,
            prev_hop_reliability=self.node.links.get(prev_hop)
            if self.features.reliability_filter
            else 1.0,
            in_scope=True,  # scope verified above
            threshold=self.cfg.reliability_threshold,
        )
        if not gate:
            return
        self.net.broadcast(self.node_id, msg.extended(self.node_id, self.node.links.get(prev_hop)))

    def _destination_rreq(self, msg: Rreq) -> None:
        key = (msg.source, msg.request_id)
        path = msg.hop_list + (self.node_id,)
        qualities = msg.link_quality + (self.node.links.get(msg.hop_list[-1]),)
        reliability = path_reliability(qualities)

        replied = self._replied_paths.setdefault(key, [])
        if any(p == path for p, _ in replied):
            return
        if self.features.reliability_filter and reliability < self.cfg.reliability_threshold:
            return
        single_reply = msg.reply_to is not None or not self.features.probe_phase
        max_mesh = 1 if single_reply else self.cfg.rrep_candidates_max
        mesh_sent = sum(1 for _, d in replied if d == "mesh")
        wired_sent = sum(1 for _, d in replied if d == "wired")

        if msg.reply_to is not None:
            if replied:
                return
            replied.append((path, "mesh"))
            # local repair answer: one mesh patch back to the repairer
            reply = Rrep(
                flow_id=msg.flow_id,
                request_id=msg.request_id,
                source=msg.source,
                dest=self.node_id,
                domain="mesh",
                candidate_index=-1,
                path_reliability=reliability,
                route=path,
                remaining=tuple(reversed(path))[1:],
                reply_to=msg.reply_to,
            )
            self._forward_rrep(reply)
            return

        # the backbone detour gets its own reply slot: it must never displace
        # a mesh candidate, only extend the choice set
        mesh_hops = len(path) - 1
        my_gw = self.node.best_gateway() if self.features.circular else None
        if (
            not single_reply
            and wired_sent == 0
            and my_gw is not None
            and msg.gw_id >= 0
            and my_gw[0] != msg.gw_id  # shared gateway means no wire to cross
            and msg.gw_hops + my_gw[1] < mesh_hops
        ):
            gw_id, _, next_hop = my_gw
            replied.append((path, "wired"))
            reply = Rrep(
                flow_id=msg.flow_id,
                request_id=msg.request_id,
                source=msg.source,
                dest=self.node_id,
                domain="wired",
                candidate_index=len(replied) - 1,
                path_reliability=reliability,
                route=(self.node_id,),
                reverse_route=tuple(reversed(path)),
                via_gateways=(gw_id, msg.gw_id),
                remaining=None,
            )
            self._relay_unicast(next_hop, reply)
            return
        if mesh_sent >= max_mesh:
            return
        replied.append((path, "mesh"))
        reply = Rrep(
            flow_id=msg.flow_id,
            request_id=msg.request_id,
            source=msg.source,
            dest=self.node_id,
            domain="mesh",
            candidate_index=len(replied) - 1,
            path_reliability=reliability,
            route=path,
            remaining=tuple(reversed(path))[1:],
        )
        self._forward_rrep(reply)

    # ----------------------------------------------------------- reply travel

    def _forward_rrep(self, msg: Rrep) -> None:
        """Send an explicit-traversal reply one hop ahead (head consumed)."""
        next_hop = msg.remaining[0]
        self._relay_unicast(next_hop, msg.advanced(remaining=msg.remaining[1:]))

    def _handle_rrep(self, msg: Rrep) -> None:
        if msg.reply_to is not None and msg.reply_to == self.node_id:
            self._repair_reply(msg)
            return

        if msg.remaining is None:
            # wired reply, gateway-chain stage (destination side)
            if self.node_id == msg.via_gateways[0] and self.node.role == "IGW":
                self.net.wired(
                    self.node_id,
                    msg.via_gateways[1],
                    msg.advanced(route=msg.route + (self.node_id,)),
                )
                return
            if self.node_id == msg.via_gateways[1] and self.node.role == "IGW":
                # crossed the wire: continue along the registered reverse path
                reg = self._registrations.get(msg.source)
                if reg is None or len(reg[0]) < 2:
                    return
                path = reg[0]
                staged = msg.advanced(route=msg.route + (self.node_id,), remaining=path[1:])
                self._forward_rrep(staged)
                return
            if self.node.selfish or len(msg.route) >= MAX_CHAIN_HOPS:
                return
            next_hop = self.node.gateway_next_hop(msg.via_gateways[0])
            if next_hop is None:
                return
            self._relay_unicast(next_hop, msg.advanced(route=msg.route + (self.node_id,)))
            return

        if not msg.remaining:
            if msg.source == self.node_id:
                self._source_rrep(msg)
            return
        if self.node.selfish:
            return
        staged = msg if msg.domain != "wired" else msg.advanced(route=msg.route + (self.node_id,))
        self._forward_rrep(staged)

    def _source_rrep(self, msg: Rrep) -> None:
        flow = self.shared.flows.get(msg.flow_id)
        if flow is None or flow.src != self.node_id:
            return
        if flow.request_id != msg.request_id:
            return  # stale reply from an abandoned attempt
        stats = flow.stats
        if stats.first_rrep_at is None:
            stats.first_rrep_at = self.now
            if stats.first_rreq_at is not None:
                stats.rrep_estimate = (self.now - stats.first_rreq_at) / 2.0

        if msg.domain == "wired":
            forward = (self.node_id,) + tuple(reversed(msg.route))
            reverse = msg.reverse_route
            wireless_fwd = set(forward) - set(msg.via_gateways)
            if (wireless_fwd & set(reverse)) - {flow.src, flow.dst}:
                stats.disjoint_rejects += 1
                return  # circular legs must not share wireless relays
        else:
            forward = msg.route
            reverse = tuple(reversed(msg.route))
        candidate = Candidate(
            index=msg.candidate_index,
            domain=msg.domain,
            forward_route=forward,
            reverse_route=reverse,
            path_reliability=msg.path_reliability,
            via_gateways=msg.via_gateways,
        )

        if not self.features.probe_phase:
            if flow.state == "discovering":
                self._admit(flow, candidate)
            return
        flow.candidates.append(candidate)
        flow.probe_queue.append(len(flow.candidates) - 1)
        if flow.state == "discovering":
            self._begin_probe(flow)

    # ------------------------------------------------------------ probe phase

    def _begin_probe(self, flow: Flow) -> None:
        if not flow.probe_queue:
            return
        # mesh candidates first: the backbone detour is a relief valve,
        # probed only when every mesh candidate has failed
        pick = next(
            (i for i, s in enumerate(flow.probe_queue) if flow.candidates[s].domain == "mesh"),
            0,
        )
        slot = flow.probe_queue.pop(pick)
        candidate = flow.candidates[slot]
        flow.state = "probing"
        flow.probing = slot
        flow.report = None
        flow.reverse_session = None
        flow.reverse_done = candidate.domain != "wired"
        epoch = flow.bump()

        count = qos.probe_count(candidate.forward_hops)
        for j in range(count):
            self.net.sim.schedule_in(
                j * self.cfg.data_interval_s,
                lambda f=flow, e=epoch, c=candidate, s=j: self._send_probe(f, e, c, s),
                "probe-tx",
            )
        guard = count * self.cfg.data_interval_s + self._probe_guard_delay()
        self.net.sim.schedule_in(guard, lambda f=flow, e=epoch: self._probe_guard(f, e), "probe-guard")

    def _send_probe(self, flow: Flow, epoch: int, candidate: Candidate, seq: int) -> None:
        if flow.epoch != epoch or flow.state != "probing":
            return
        probe = Probe(
            flow_id=flow.flow_id,
            request_id=flow.request_id,
            candidate_index=candidate.index,
            seq=seq,
            expected=qos.probe_count(candidate.forward_hops),
            route=candidate.forward_route,
            remaining=candidate.forward_route[1:],
            direction="forward",
            sent_at=self.now,
            reverse_hint=candidate.reverse_route,
        )
        self._send_probe_hop(probe)

    def _send_probe_hop(self, probe: Probe) -> None:
        next_hop = probe.remaining[0]
        ledger = self.shared.ledger((probe.flow_id, probe.request_id, probe.candidate_index))
        self._relay_unicast(
            next_hop,
            probe.advanced(),
            on_failed=lambda cause: _count_probe_loss(ledger, cause),
        )

    def _handle_probe(self, msg: Probe) -> None:
        if msg.remaining:
            if self.node.selfish:
                return
            self._send_probe_hop(msg)
            return
        if msg.direction == "forward":
            self._destination_probe(msg)
        else:
            self._source_reverse_probe(msg)

    def _destination_probe(self, msg: Probe) -> None:
        key = (msg.flow_id, msg.request_id, msg.candidate_index)
        delay = self.now - msg.sent_at
        self.shared.ledger(key).delivered += 1
        session = self._sessions.get(key)
        if session is None:
            session = qos.ProbeSession(
                flow_id=msg.flow_id,
                candidate_key=key,
                hops=len(msg.route) - 1,
                expected=msg.expected,
            )
            self._sessions[key] = session
            self._session_reverse[key] = msg.reverse_hint
            self._session_wired[key] = self._route_is_wired(msg.route)
            self._trim_sessions()
            deadline = session.arm_timer(delay, self.now)
            self.net.sim.schedule(deadline, lambda k=key: self._conclude_session(k), "probe-window")
        session.record(delay)
        if session.complete:
            self._conclude_session(key)

    def _trim_sessions(self) -> None:
        if len(self._sessions) <= 256:
            return
        for key in [k for k, s in self._sessions.items() if s.closed]:
            del self._sessions[key]
            self._session_reverse.pop(key, None)
            self._session_wired.pop(key, None)

    def _conclude_session(self, key: tuple[int, int, int]) -> None:
        session = self._sessions.get(key)
        if session is None or session.closed:
            return
        session.closed = True
        reverse = self._session_reverse.get(key, ())
        if len(reverse) < 2:
            return
        report = ProbeReport(
            flow_id=key[0],
            request_id=key[1],
            candidate_index=key[2],
            delays=tuple(session.delays),
            remaining=reverse[1:],
        )
        self._relay_unicast(reverse[1], report.advanced())
        # circular candidates: measure the mesh return leg as well
        if self._session_wired.get(key, False):
            self._send_reverse_probes(key, reverse)

    def _send_reverse_probes(self, key: tuple[int, int, int], reverse_route: tuple[int, ...]) -> None:
        count = qos.probe_count(len(reverse_route) - 1)
        for j in range(count):
            self.net.sim.schedule_in(
                j * self.cfg.data_interval_s,
                lambda k=key, r=reverse_route, c=count, s=j: self._emit_reverse_probe(k, r, c, s),
                "probe-rev-tx",
            )

    def _emit_reverse_probe(self, key, route, count, seq) -> None:
        probe = Probe(
            flow_id=key[0],
            request_id=key[1],
            candidate_index=key[2],
            seq=seq,
            expected=count,
            route=route,
            remaining=route[1:],
            direction="reverse",
            sent_at=self.now,
        )
        self._send_probe_hop(probe)

    def _source_reverse_probe(self, msg: Probe) -> None:
        flow = self.shared.flows.get(msg.flow_id)
        if flow is None or flow.src != self.node_id or flow.state != "probing":
            return
        if flow.request_id != msg.request_id:
            return
        if flow.probing is None or flow.candidates[flow.probing].index != msg.candidate_index:
            return
        delay = self.now - msg.sent_at
        if flow.reverse_session is None:
            flow.reverse_session = qos.ProbeSession(
                flow_id=msg.flow_id,
                candidate_key=(msg.flow_id, msg.candidate_index),
                hops=len(msg.route) - 1,
                expected=msg.expected,
            )
            epoch = flow.epoch
            deadline = flow.reverse_session.arm_timer(delay, self.now)
            self.net.sim.schedule(
                deadline, lambda f=flow, e=epoch: self._reverse_deadline(f, e), "probe-rev-window"
            )
        flow.reverse_session.record(delay)
        if flow.reverse_session.complete:
            flow.reverse_done = True
            self._evaluate(flow)

    def _reverse_deadline(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "probing":
            return
        flow.reverse_done = True
        self._evaluate(flow)

    def _handle_probe_report(self, msg: ProbeReport) -> None:
        if msg.remaining:
            if self.node.selfish:
                return
            self._relay_unicast(msg.remaining[0], msg.advanced())
            return
        flow = self.shared.flows.get(msg.flow_id)
        if flow is None or flow.src != self.node_id or flow.state != "probing":
            return
        if flow.request_id != msg.request_id:
            return
        if flow.probing is None or flow.candidates[flow.probing].index != msg.candidate_index:
            return
        flow.report = msg
        self._evaluate(flow)

    def _probe_guard(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "probing":
            return
        # nothing conclusive arrived in time: treat as a failed candidate
        self._candidate_failed(flow)

    def _evaluate(self, flow: Flow) -> None:
        if flow.state != "probing" or flow.report is None or not flow.reverse_done:
            return
        candidate = flow.candidates[flow.probing]
        delays = flow.report.delays
        if not delays:
            self._candidate_failed(flow)
            return
        avg_delay = sum(delays) / len(delays)
        mad = sum(abs(d - avg_delay) for d in delays) / len(delays)
        ledger = self.shared.ledger((flow.flow_id, flow.request_id, candidate.index))
        inputs = qos.BandwidthInputs(
            packet_size_bits=8.0 * self.cfg.packet_size_bytes,
            rtt_mean_s=2.0 * avg_delay,
            rtt_var_s=2.0 * mad,
            p_congestion=qos.congestion_loss_ratio(ledger),
            raw_bandwidth_bps=self.cfg.raw_bandwidth_bps,
        )
        estimate = qos.estimate_bandwidth(inputs)
        decision = qos.admit_flow(
            avg_delay,
            self.cfg.delay_bound_s,
            estimate,
            self.cfg.bw_min_bps,
            more_candidates=bool(flow.probe_queue),
        )
        if decision is qos.AdmitDecision.ADMIT and candidate.domain == "wired":
            session = flow.reverse_session
            reverse_ok = session is not None and session.delays and (
                sum(session.delays) / len(session.delays) <= self.cfg.delay_bound_s
            )
            if not reverse_ok:
                decision = (
                    qos.AdmitDecision.TRY_NEXT if flow.probe_queue else qos.AdmitDecision.REJECT
                )
        if decision is qos.AdmitDecision.ADMIT:
            if flow.stats.probe_estimate is None:
                flow.stats.probe_estimate = avg_delay
            self._admit(flow, candidate)
        elif decision is qos.AdmitDecision.TRY_NEXT:
            self._begin_probe(flow)
        else:
            flow.stats.rejections += 1
            self._enter_cooldown(flow)

    def _candidate_failed(self, flow: Flow) -> None:
        if flow.probe_queue:
            self._begin_probe(flow)
        else:
            self._retry_or_cooldown(flow)

    # ------------------------------------------------------------- admission

    def _admit(self, flow: Flow, candidate: Candidate) -> None:
        flow.state = "active"
        flow.current = candidate
        flow.domain = candidate.domain
        flow.probing = None
        flow.failed_rounds = 0
        flow.bump()
        stats = flow.stats
        stats.admissions += 1
        if stats.admitted_at is None:
            stats.admitted_at = self.now

    # ------------------------------------------------------------- discovery

    def start_flow(self, flow: Flow) -> None:
        self.shared.flows[flow.flow_id] = flow
        self.net.sim.schedule(flow.start_at, lambda: self._flow_tick(flow), "flow-tick")

    def _flow_tick(self, flow: Flow) -> None:
        if self.now >= self.cfg.duration_s:
            return
        stats = flow.stats
        stats.offered += 1
        if len(flow.buffer) >= self.cfg.buffer_packets:
            stats.buffer_drops += 1
        else:
            flow.buffer.append(self.now)
        if flow.state == "waiting":
            self._begin_discovery(flow, fresh_attempts=True)
        elif flow.state == "active" and flow.buffer:
            flow.buffer.popleft()
            self._send_data(flow)
            if flow.buffer:
                # backlog from the discovery window drains at twice the
                # offered rate, otherwise it would trail the flow forever
                self.net.sim.schedule_in(
                    self.cfg.data_interval_s / 2.0,
                    lambda f=flow, e=flow.epoch: self._drain_backlog(f, e),
                    "flow-drain",
                )
        self.net.sim.schedule_in(self.cfg.data_interval_s, lambda: self._flow_tick(flow), "flow-tick")

    def _drain_backlog(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "active" or not flow.buffer:
            return
        if self.now >= self.cfg.duration_s:
            return
        flow.buffer.popleft()
        self._send_data(flow)

    def _begin_discovery(self, flow: Flow, fresh_attempts: bool) -> None:
        flow.state = "discovering"
        flow.current = None
        flow.candidates = []
        flow.probe_queue = []
        flow.probing = None
        flow.report = None
        if fresh_attempts:
            flow.attempts_left = 1 + self.cfg.rreq_retries
        self._send_rreq(flow)

    def _send_rreq(self, flow: Flow) -> None:
        flow.attempts_left -= 1
        flow.request_id = self._next_request_id()
        flow.last_rreq_at = self.now
        epoch = flow.bump()
        stats = flow.stats
        stats.rreqs_sent += 1
        if stats.first_rreq_at is None:
            stats.first_rreq_at = self.now

        gw_id, gw_hops = -1, -1
        if self.features.circular:
            gw = self.node.best_gateway()
            if gw is not None:
                gw_id, gw_hops = gw[0], gw[1]
        msg = Rreq(
            flow_id=flow.flow_id,
            request_id=flow.request_id,
            source=self.node_id,
            dest=flow.dst,
            scope=flow.scope,
            gw_id=gw_id,
            gw_hops=gw_hops,
            hop_list=(self.node_id,),
            link_quality=(),
        )
        self.net.broadcast(self.node_id, msg)
        self.net.sim.schedule_in(
            self.cfg.rreq_timeout_s, lambda f=flow, e=epoch: self._discovery_guard(f, e), "rreq-guard"
        )

    def _discovery_guard(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "discovering":
            return
        self._retry_or_cooldown(flow)

    def _retry_or_cooldown(self, flow: Flow) -> None:
        if flow.attempts_left <= 0:
            self._enter_cooldown(flow)
            return
        flow.state = "discovering"
        # space repeated floods out even when a probe cycle failed fast
        wait = flow.last_rreq_at + self.cfg.min_discovery_gap_s - self.now
        if wait <= 0:
            self._send_rreq(flow)
            return
        epoch = flow.bump()
        self.net.sim.schedule_in(
            wait, lambda f=flow, e=epoch: self._delayed_rreq(f, e), "rreq-gap"
        )

    def _delayed_rreq(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "discovering":
            return
        self._send_rreq(flow)

    def _enter_cooldown(self, flow: Flow) -> None:
        flow.state = "cooldown"
        epoch = flow.bump()
        # failed rounds back off exponentially; a flow the network cannot
        # serve must not keep reflooding at a fixed beat
        wait = self.cfg.retry_cooldown_s * (2 ** min(flow.failed_rounds, 3))
        flow.failed_rounds += 1
        self.net.sim.schedule_in(
            wait,
            lambda f=flow, e=epoch: self._cooldown_over(f, e),
            "flow-cooldown",
        )

    def _cooldown_over(self, flow: Flow, epoch: int) -> None:
        if flow.epoch != epoch or flow.state != "cooldown":
            return
        self._begin_discovery(flow, fresh_attempts=True)

    # ------------------------------------------------------------- data plane

    def _send_data(self, flow: Flow) -> None:
        route = flow.current.forward_route
        packet = DataPacket(
            flow_id=flow.flow_id,
            seq=flow.seq,
            source=flow.src,
            dest=flow.dst,
            route=route,
            remaining=route[1:],
            scope=flow.scope,
            sent_at=self.now,
        )
        flow.seq += 1
        flow.stats.sent += 1
        self.net.unicast(
            self.node_id,
            route[1],
            packet.advanced(),
            on_failed=lambda cause, f=flow: self._source_send_failed(f, cause),
        )

    def _source_send_failed(self, flow: Flow, cause: str) -> None:
        flow.stats.lost += 1
        if cause != "link" or flow.state != "active":
            return
        flow.stats.breaks += 1
        flow.stats.rediscoveries += 1
        self._begin_discovery(flow, fresh_attempts=True)

    def _handle_data(self, msg: DataPacket) -> None:
        if msg.dest == self.node_id:
            flow = self.shared.flows.get(msg.flow_id)
            if flow is not None:
                flow.stats.delivered += 1
                flow.stats.delay_sum += self.now - msg.sent_at
                flow.stats.delay_count += 1
            return
        if self.node.selfish or not msg.remaining:
            self._count_data_loss(msg)
            return
        self._forward_data(msg)

    def _count_data_loss(self, msg: DataPacket) -> None:
        # losses are charged back to the source flow so a delivery ratio
        # can be taken over resolved packets only; packets still in queues
        # or on the air when the run ends stay out of both tallies
        flow = self.shared.flows.get(msg.flow_id)
        if flow is not None:
            flow.stats.lost += 1

    def _forward_data(self, msg: DataPacket) -> None:
        next_hop = msg.remaining[0]
        if (msg.flow_id, next_hop) in self._repairs:
            self._count_data_loss(msg)
            return  # link under repair: nothing usable yet, drop
        advanced = msg.advanced()
        if self.node.role == "IGW" and next_hop in self.net.topo.igw_ids:
            self.net.wired(self.node_id, next_hop, advanced)
            return
        self.net.unicast(
            self.node_id,
            next_hop,
            advanced,
            on_failed=lambda cause, m=msg: self._data_hop_failed(m, cause),
        )

    def _data_hop_failed(self, msg: DataPacket, cause: str) -> None:
        self._count_data_loss(msg)
        if cause != "link":
            return  # congestion drops are transient, not breaks
        self._link_broken(msg)

    # ------------------------------------------------------------ local repair

    def _link_broken(self, msg: DataPacket) -> None:
        next_hop = msg.remaining[0]
        key = (msg.flow_id, next_hop)
        if key in self._repairs:
            return
        if self.node_id not in msg.route:
            return  # packet from a superseded route revision
        prefix = msg.route[: msg.route.index(self.node_id) + 1]
        if not self.features.local_repair:
            self._send_rerr(msg.flow_id, next_hop, prefix)
            return
        self._repairs[key] = prefix
        request_id = self._next_request_id()
        self._repair_requests[request_id] = key
        repair = Rreq(
            flow_id=msg.flow_id,
            request_id=request_id,
            source=self.node_id,
            dest=msg.dest,
            scope=msg.scope,
            gw_id=-1,
            gw_hops=-1,
            hop_list=(self.node_id,),
            link_quality=(),
            reply_to=self.node_id,
            ttl=self.cfg.repair_ttl,
        )
        self.net.broadcast(self.node_id, repair)
        self.net.sim.schedule_in(
            self.cfg.repair_timeout_s,
            lambda k=key, r=request_id: self._repair_guard(k, r),
            "repair-guard",
        )

    def _repair_reply(self, msg: Rrep) -> None:
        key = self._repair_requests.pop(msg.request_id, None)
        if key is None or key not in self._repairs:
            return
        prefix = self._repairs.pop(key)
        flow = self.shared.flows.get(msg.flow_id)
        if flow is not None:
            flow.stats.repairs_ok += 1
        update = RouteUpdate(
            flow_id=msg.flow_id,
            repaired_at=self.node_id,
            segment=msg.route,
            remaining=tuple(reversed(prefix))[1:],
        )
        if update.remaining:
            self._relay_unicast(update.remaining[0], update.advanced())
        else:
            self._apply_route_update(update)

    def _repair_guard(self, key: tuple[int, int], request_id: int) -> None:
        if self._repair_requests.get(request_id) != key or key not in self._repairs:
            return
        prefix = self._repairs.pop(key)
        self._repair_requests.pop(request_id, None)
        self._send_rerr(key[0], key[1], prefix)

    def _send_rerr(self, flow_id: int, broken_to: int, prefix: tuple[int, ...]) -> None:
        rerr = RouteError(
            flow_id=flow_id,
            broken_from=self.node_id,
            broken_to=broken_to,
            remaining=tuple(reversed(prefix))[1:],
        )
        if rerr.remaining:
            self._relay_unicast(rerr.remaining[0], rerr.advanced())
        else:
            self._rerr_at_source(rerr)

    def _handle_rerr(self, msg: RouteError) -> None:
        if msg.remaining:
            if self.node.selfish:
                return
            self._relay_unicast(msg.remaining[0], msg.advanced())
            return
        self._rerr_at_source(msg)

    def _rerr_at_source(self, msg: RouteError) -> None:
        flow = self.shared.flows.get(msg.flow_id)
        if flow is None or flow.src != self.node_id or flow.state != "active":
            return
        flow.stats.breaks += 1
        flow.stats.rediscoveries += 1
        self._begin_discovery(flow, fresh_attempts=True)

    def _handle_route_update(self, msg: RouteUpdate) -> None:
        if msg.remaining:
            if self.node.selfish:
                return
            self._relay_unicast(msg.remaining[0], msg.advanced())
            return
        self._apply_route_update(msg)

    def _apply_route_update(self, msg: RouteUpdate) -> None:
        flow = self.shared.flows.get(msg.flow_id)
        if flow is None or flow.src != self.node_id or flow.state != "active":
            return
        candidate = flow.current
        if candidate is None or msg.repaired_at not in candidate.forward_route:
            return
        cut = candidate.forward_route.index(msg.repaired_at)
        candidate.forward_route = candidate.forward_route[:cut] + msg.segment
