"""Shared-radio channel model and the gateway wire.

The channel is a single collision domain per neighborhood: an emission
occupies the sender and everything in its radio range until it ends, and
later sends queue behind that reservation.  A send that would have to
wait longer than the queue limit is dropped as congestion.  Per-link
packet loss is Bernoulli with a distance-driven probability, drawn
independently per transmission attempt; unicast gets a small fixed
number of attempts (link-layer retries) and reports a broken link when
they are exhausted.  Broadcast is one emission with an independent draw
per receiver and no retries.

The wired gateway backbone is a lossless pipe with fixed latency plus
serialization delay.

Byte counters are attempt-level (channel load); the delivery ledgers are
request-level, one unit per (packet, receiver), so for every wire class
sent == delivered + lost_link + lost_congestion + lost_no_link.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random
from typing import Callable

from meshsim.config import ScenarioConfig
from meshsim.engine import Simulator
from meshsim.messages import Message
from meshsim.topology import Topology

# spacing jitter added to every emission, seconds
EMISSION_JITTER_S = 0.0002


@dataclass(slots=True)
class DeliveryLedger:
    """Request-level accounting for one wire class."""

    sent: int = 0
    delivered: int = 0
    lost_link: int = 0
    lost_congestion: int = 0
    lost_collision: int = 0
    lost_no_link: int = 0
    # awaiting a scheduled link-layer retry or reception decision; nonzero
    # at shutdown is a packet caught mid-flight, not a leak
    pending: int = 0

    def conserved(self) -> bool:
        return self.sent == (
            self.delivered
            + self.lost_link
            + self.lost_congestion
            + self.lost_collision
            + self.lost_no_link
            + self.pending
        )


@dataclass(slots=True)
class ChannelCounters:
    bytes_by_kind: dict[str, int] = field(default_factory=dict)
    wired_bytes: int = 0
    emissions: int = 0

    def count(self, kind: str, size: int) -> None:
        self.bytes_by_kind[kind] = self.bytes_by_kind.get(kind, 0) + size
        self.emissions += 1


class MediumModel:
    """Radio + wire transport bound to one simulator run."""

    def __init__(self, sim: Simulator, topo: Topology, cfg: ScenarioConfig, rng: Random) -> None:
        self.sim = sim
        self.topo = topo
        self.cfg = cfg
        self._rng = rng
        self._busy_until: dict[int, float] = {}
        self.counters = ChannelCounters()
        self.ledgers: dict[str, DeliveryLedger] = {}
        self._loss = self._build_loss_table(rng)
        self._interferers = self._build_interference_table()
        # recent emissions, for hidden-terminal collision checks
        self._emissions: list[tuple[float, float, int]] = []

    def _build_interference_table(self) -> dict[int, tuple[int, ...]]:
        # carrier sense reaches past decode range: an emission blocks every
        # radio within interference_factor * radio_range, not just neighbors
        radius = self.cfg.radio_range * self.cfg.interference_factor
        ids = sorted(self.topo.adjacency)
        return {
            a: tuple(b for b in ids if b != a and self.topo.distance(a, b) <= radius)
            for a in ids
        }

    # -- loss model ----------------------------------------------------

    def _build_loss_table(self, rng: Random) -> dict[tuple[int, int], float]:
        cfg = self.cfg
        table: dict[tuple[int, int], float] = {}
        for a in sorted(self.topo.adjacency):
            for b in self.topo.adjacency[a]:
                if b < a:
                    continue
                d = self.topo.distance(a, b)
                base = cfg.loss_base + cfg.loss_range_factor * (d / cfg.radio_range) ** cfg.loss_exponent
                skew = cfg.loss_asymmetry * rng.uniform(-1.0, 1.0)
                table[(a, b)] = min(cfg.loss_cap, max(0.0, base * (1.0 + skew)))
                table[(b, a)] = min(cfg.loss_cap, max(0.0, base * (1.0 - skew)))
        return table

    def loss_probability(self, sender: int, receiver: int) -> float:
        try:
            return self._loss[(sender, receiver)]
        except KeyError:
            raise ValueError(f"no radio link {sender}->{receiver}") from None

    # -- channel occupancy ---------------------------------------------

    def _ledger(self, kind: str) -> DeliveryLedger:
        ledger = self.ledgers.get(kind)
        if ledger is None:
            ledger = self.ledgers[kind] = DeliveryLedger()
        return ledger

    def _airtime(self, size: int, broadcast: bool) -> float:
        cfg = self.cfg
        access = cfg.access_overhead_broadcast_s if broadcast else cfg.access_overhead_unicast_s
        return access + self._rng.uniform(0.0, EMISSION_JITTER_S) + size * 8.0 / cfg.raw_bandwidth_bps

    def _reserve(self, sender: int, airtime: float) -> tuple[float, float] | None:
        """Claim the channel around `sender`.  Returns (start, end), or
        None when the wait would exceed the queue limit (congestion)."""
        now = self.sim.now
        start = max(now, self._busy_until.get(sender, 0.0))
        if start - now > self.cfg.queue_limit_s:
            return None
        end = start + airtime
        busy = self._busy_until
        busy[sender] = end
        for other in self._interferers[sender]:
            if busy.get(other, 0.0) < end:
                busy[other] = end
        self._note_emission(start, end, sender)
        return start, end

    def _note_emission(self, start: float, end: float, sender: int) -> None:
        live = self._emissions
        now = self.sim.now
        if len(live) > 32:
            self._emissions = live = [e for e in live if e[1] > now]
        live.append((start, end, sender))

    def _collided(self, receiver: int, start: float, end: float, sender: int) -> bool:
        """Hidden-terminal check: a concurrent emission from a transmitter
        the carrier sense could not hear garbles reception at `receiver`."""
        radius = self.cfg.radio_range * self.cfg.interference_factor
        for s0, e0, other in self._emissions:
            if other == sender or e0 <= start or s0 >= end:
                continue
            if self.topo.distance(other, receiver) <= radius:
                return True
        return False

    # -- transports ----------------------------------------------------

    def send_unicast(
        self,
        sender: int,
        receiver: int,
        message: Message,
        on_delivered: Callable[[], None] | None = None,
        on_failed: Callable[[str], None] | None = None,
    ) -> None:
        """One hop with link-layer retries; exactly one outcome callback."""
        kind = message.kind
        size = message.size_bytes(self.cfg)
        ledger = self._ledger(kind)
        ledger.sent += 1

        if receiver not in self.topo.adjacency[sender]:
            ledger.lost_no_link += 1
            if on_failed is not None:
                self.sim.schedule(self.sim.now, lambda: on_failed("no_link"), f"{kind}-nolink")
            return

        loss_p = self._loss[(sender, receiver)]

        def attempt(remaining: int) -> None:
            slot = self._reserve(sender, self._airtime(size, broadcast=False))
            if slot is None:
                ledger.lost_congestion += 1
                if on_failed is not None:
                    self.sim.schedule(self.sim.now, lambda: on_failed("congestion"), f"{kind}-drop")
                return
            _, end = slot
            self.counters.count(kind, size)
            if self._rng.random() >= loss_p:
                ledger.delivered += 1
                if on_delivered is not None:
                    self.sim.schedule(end, on_delivered, f"{kind}-rx")
                return
            if remaining > 1:
                ledger.pending += 1

                def retry() -> None:
                    ledger.pending -= 1
                    attempt(remaining - 1)

                self.sim.schedule(end, retry, f"{kind}-retry")
                return
            ledger.lost_link += 1
            if on_failed is not None:
                self.sim.schedule(end, lambda: on_failed("link"), f"{kind}-break")

        attempt(self.cfg.mac_attempts)

    def send_broadcast(
        self,
        sender: int,
        message: Message,
        on_delivered: Callable[[int], None],
    ) -> None:
        """Single emission, independent delivery draw per neighbor."""
        kind = message.kind
        size = message.size_bytes(self.cfg)
        ledger = self._ledger(kind)
        receivers = self.topo.adjacency[sender]

        slot = self._reserve(sender, self._airtime(size, broadcast=True))
        if slot is None:
            ledger.sent += len(receivers)
            ledger.lost_congestion += len(receivers)
            return
        start, end = slot
        self.counters.count(kind, size)
        for receiver in receivers:  # adjacency is stored sorted
            ledger.sent += 1
            # channel-noise draw now; the collision verdict must wait until
            # the emission ends, when every overlapping transmitter is known
            noise_lost = self._rng.random() < self._loss[(sender, receiver)]
            ledger.pending += 1

            def finish(r: int = receiver, lost: bool = noise_lost) -> None:
                ledger.pending -= 1
                if lost:
                    ledger.lost_link += 1
                elif self._collided(r, start, end, sender):
                    ledger.lost_collision += 1
                else:
                    ledger.delivered += 1
                    on_delivered(r)

            self.sim.schedule(end, finish, f"{kind}-rx")

    def send_wired(
        self,
        sender: int,
        receiver: int,
        message: Message,
        on_delivered: Callable[[], None],
    ) -> None:
        """Gateway backbone: lossless, latency + serialization, no radio."""
        size = message.size_bytes(self.cfg)
        self.counters.wired_bytes += size
        delay = self.cfg.wired_delay_s + size * 8.0 / self.cfg.wired_bandwidth_bps
        self.sim.schedule_in(delay, on_delivered, f"{message.kind}-wire")

    # -- reporting -----------------------------------------------------

    def bytes_of(self, kinds: frozenset[str] | set[str]) -> int:
        return sum(self.counters.bytes_by_kind.get(k, 0) for k in kinds)

    def all_conserved(self) -> bool:
        return all(ledger.conserved() for ledger in self.ledgers.values())
