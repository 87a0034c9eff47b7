"""Admission-time QoS estimation: probe delays, loss ratios, bandwidth.

A newly discovered path is exercised with probe packets shaped like the
data traffic; the destination averages their one-way delays and reports
back.  The source combines that delay figure with a TCP-style throughput
bound (driven by round-trip statistics of the control exchange and the
congestion-caused loss ratio on the path) and admits, tries the next
candidate path, or rejects the flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

RTO_K_FACTOR = 4


class ProbeFailure(Exception):
    """No probe reached the destination before its timer expired."""


def probe_count(hops: int) -> int:
    """Number of probes sent on a candidate path: twice the hop count."""
    if hops < 1:
        raise ValueError(f"path must have at least one hop, got {hops}")
    return 2 * hops


@dataclass
class ProbeSession:
    """Destination-side record of one probe phase."""

    flow_id: int
    candidate_key: tuple
    hops: int
    expected: int
    delays: list[float] = field(default_factory=list)
    deadline: float | None = None
    closed: bool = False

    def arm_timer(self, first_delay: float, now: float, minimum: float = 0.1) -> float:
        """Timer armed on the first probe: twice the first one-way delay per
        expected probe, floored at `minimum` seconds.  Returns the deadline."""
        self.deadline = now + max(minimum, 2.0 * first_delay * self.expected)
        return self.deadline

    def record(self, delay: float) -> None:
        if not self.closed:
            self.delays.append(delay)

    @property
    def complete(self) -> bool:
        return len(self.delays) >= self.expected


def destination_average_delay(session: ProbeSession) -> float:
    """Mean one-way delay over the probes that arrived.

    Valid once the timer has expired or every probe was received; with no
    probes at all the phase failed and the caller must fall back to the
    next candidate path.
    """
    if not session.delays:
        raise ProbeFailure(f"no probes received for flow {session.flow_id}")
    return sum(session.delays) / len(session.delays)


@dataclass(slots=True)
class LossLedger:
    """Counts of per-packet outcomes attributed to a link or a probe stream."""

    delivered: int = 0
    lost_link: int = 0
    lost_congestion: int = 0

    @property
    def total(self) -> int:
        return self.delivered + self.lost_link + self.lost_congestion


def congestion_loss_ratio(ledger: LossLedger) -> float:
    """Fraction of packets lost to congestion among all accounted packets.

    An empty ledger carries no information and reads as 0.
    """
    total = ledger.total
    if total == 0:
        return 0.0
    return ledger.lost_congestion / total


def compute_rto(rtt_mean: float, rtt_var: float, k: int = RTO_K_FACTOR) -> float:
    """Retransmission timeout: mean RTT plus k times its mean deviation."""
    if rtt_mean < 0 or rtt_var < 0:
        raise ValueError("rtt statistics must be nonnegative")
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    return rtt_mean + k * rtt_var


@dataclass(slots=True)
class BandwidthInputs:
    packet_size_bits: float
    rtt_mean_s: float
    rtt_var_s: float
    p_congestion: float
    raw_bandwidth_bps: float
    k_factor: int = RTO_K_FACTOR


def estimate_bandwidth(inputs: BandwidthInputs) -> float:
    """Steady-state bandwidth estimate for a path, in bits/second.

    With loss ratio p, round-trip time rtt and the derived timeout rto:

        X = rtt * sqrt(2p / 3)
        Y = rto * min(1, 3 * sqrt(3p / 8)) * p * (1 + 32 p^2)
        estimate = packet_size / (X + Y)

    clamped to the raw link bandwidth.  A zero loss ratio means the model
    denominator vanishes; the raw bandwidth is returned directly.
    """
    p = inputs.p_congestion
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"loss ratio out of range [0,1]: {p}")
    if inputs.packet_size_bits <= 0:
        raise ValueError("packet size must be positive")
    if inputs.raw_bandwidth_bps <= 0:
        raise ValueError("raw bandwidth must be positive")
    if inputs.rtt_mean_s <= 0:
        raise ValueError("rtt must be positive")
    if p == 0.0:
        return inputs.raw_bandwidth_bps
    rto = compute_rto(inputs.rtt_mean_s, inputs.rtt_var_s, inputs.k_factor)
    x = inputs.rtt_mean_s * math.sqrt(2.0 * p / 3.0)
    y = rto * min(1.0, 3.0 * math.sqrt(3.0 * p / 8.0)) * p * (1.0 + 32.0 * p * p)
    return min(inputs.packet_size_bits / (x + y), inputs.raw_bandwidth_bps)


class AdmitDecision(Enum):
    ADMIT = "admit"
    TRY_NEXT = "try_next"
    REJECT = "reject"


def admit_flow(
    avg_delay: float,
    delay_bound: float,
    est_bandwidth: float,
    bw_min: float,
    more_candidates: bool = False,
) -> AdmitDecision:
    """Admission check for one candidate path.

    Admit when the measured delay meets the bound and the bandwidth
    estimate covers the requested floor; otherwise move on to the next
    candidate if one exists, else reject the flow.
    """
    if avg_delay <= delay_bound and est_bandwidth >= bw_min:
        return AdmitDecision.ADMIT
    return AdmitDecision.TRY_NEXT if more_candidates else AdmitDecision.REJECT
