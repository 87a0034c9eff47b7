"""Run measurement: aggregate counters into a flat metric table.

Everything a finished run reports lives in one ``{name: number}`` mapping.
Flat keys keep the CSV emitter trivial and make cross-run comparison a
string join away.  Byte counts come straight from the channel counters and
are per-emission: a unicast that needed three MAC attempts contributes
three times its size, because that is what the air actually carried.
"""

from __future__ import annotations

from collections.abc import Mapping

from meshsim.config import ScenarioConfig
from meshsim.medium import MediumModel
from meshsim.messages import BEACON_KINDS, CONTROL_KINDS
from meshsim.routing import Flow, SharedState

MetricValue = int | float


def flow_throughput_bps(cfg: ScenarioConfig, flow: Flow) -> float:
    """Offered rate scaled by the flow's delivery ratio over resolved packets.

    A packet is resolved once it was delivered, dropped somewhere along the
    path, or shed at the source buffer.  Packets still queued or in flight
    when the run ends are left out of the ratio: counting them as misses
    would make the score depend on where the horizon happens to cut the
    last packet's flight, which is noise, not protocol behaviour.
    """
    s = flow.stats
    resolved = s.delivered + s.lost + s.buffer_drops
    if resolved <= 0:
        return 0.0
    return cfg.data_rate_bps * s.delivered / resolved


def _mean(values: list[float]) -> float | None:
    if not values:
        return None
    return sum(values) / len(values)


def collect_metrics(
    cfg: ScenarioConfig,
    shared: SharedState,
    medium: MediumModel,
    selfish: frozenset[int] = frozenset(),
) -> dict[str, MetricValue]:
    """Flatten one finished run into a sorted-key metric mapping.

    `control_bytes` covers route discovery, replies, error reports and
    probe reports on the wireless channel; beacons and probe payloads are
    tracked separately so overhead comparisons do not get diluted by the
    measurement traffic itself.
    """
    counters = medium.counters
    metrics: dict[str, MetricValue] = {
        "control_bytes": medium.bytes_of(CONTROL_KINDS),
        "beacon_bytes": medium.bytes_of(BEACON_KINDS),
        "probe_bytes": counters.bytes_by_kind.get("probe", 0),
        "data_bytes": counters.bytes_by_kind.get("data", 0),
        "wired_bytes": counters.wired_bytes,
        "emissions": counters.emissions,
    }

    flows = [shared.flows[fid] for fid in sorted(shared.flows)]
    window = max(cfg.duration_s - cfg.warmup_s, 1e-9)

    delivered = sum(f.stats.delivered for f in flows)
    sent = sum(f.stats.sent for f in flows)
    offered = sum(f.stats.offered for f in flows)
    metrics["flows"] = len(flows)
    metrics["offered_packets"] = offered
    metrics["sent_packets"] = sent
    metrics["delivered_packets"] = delivered
    metrics["goodput_bps"] = delivered * cfg.packet_size_bytes * 8.0 / window
    metrics["delivery_ratio"] = delivered / sent if sent else 0.0

    delay_sum = sum(f.stats.delay_sum for f in flows)
    delay_count = sum(f.stats.delay_count for f in flows)
    metrics["mean_delay_s"] = delay_sum / delay_count if delay_count else 0.0

    metrics["admitted_flows"] = sum(1 for f in flows if f.stats.admissions > 0)
    metrics["active_flows"] = sum(1 for f in flows if f.state == "active")
    metrics["wired_flows"] = sum(
        1 for f in flows if f.stats.admissions > 0 and f.domain == "wired"
    )
    metrics["breaks"] = sum(f.stats.breaks for f in flows)
    metrics["repairs_ok"] = sum(f.stats.repairs_ok for f in flows)
    metrics["rediscoveries"] = sum(f.stats.rediscoveries for f in flows)
    metrics["rreqs_sent"] = sum(f.stats.rreqs_sent for f in flows)
    metrics["rejections"] = sum(f.stats.rejections for f in flows)
    metrics["buffer_drops"] = sum(f.stats.buffer_drops for f in flows)

    throughputs = sorted(flow_throughput_bps(cfg, f) for f in flows)
    mean_tp = _mean(throughputs)
    metrics["mean_flow_throughput_bps"] = mean_tp if mean_tp is not None else 0.0
    if throughputs:
        mid = len(throughputs) // 2
        if len(throughputs) % 2:
            metrics["median_flow_throughput_bps"] = throughputs[mid]
        else:
            metrics["median_flow_throughput_bps"] = (
                throughputs[mid - 1] + throughputs[mid]
            ) / 2.0
    else:
        metrics["median_flow_throughput_bps"] = 0.0

    # delay estimator comparison, restricted to flows where all three exist
    rrep_est, probe_est, actual = [], [], []
    for f in flows:
        s = f.stats
        if s.rrep_estimate is None or s.probe_estimate is None or s.delay_count == 0:
            continue
        rrep_est.append(s.rrep_estimate)
        probe_est.append(s.probe_estimate)
        actual.append(s.delay_sum / s.delay_count)
    if actual:
        metrics["mean_rrep_estimate_s"] = _mean(rrep_est)
        metrics["mean_probe_estimate_s"] = _mean(probe_est)
        metrics["mean_actual_delay_s"] = _mean(actual)

    if selfish:
        selfish_tp = [
            flow_throughput_bps(cfg, f) for f in flows if f.src in selfish
        ]
        honest_tp = [
            flow_throughput_bps(cfg, f)
            for f in flows
            if f.src not in selfish and f.dst not in selfish
        ]
        if selfish_tp:
            metrics["selfish_throughput_bps"] = _mean(selfish_tp)
        if honest_tp:
            metrics["honest_throughput_bps"] = _mean(honest_tp)

    for f in flows:
        prefix = f"flow.{f.flow_id:03d}"
        s = f.stats
        metrics[f"{prefix}.offered"] = s.offered
        metrics[f"{prefix}.delivered"] = s.delivered
        metrics[f"{prefix}.throughput_bps"] = flow_throughput_bps(cfg, f)
        metrics[f"{prefix}.mean_delay_s"] = s.mean_delay if s.mean_delay is not None else 0.0
        metrics[f"{prefix}.admitted"] = 1 if s.admissions > 0 else 0
        metrics[f"{prefix}.wired"] = 1 if (s.admissions > 0 and f.domain == "wired") else 0
        metrics[f"{prefix}.breaks"] = s.breaks

    return metrics


def format_value(value: MetricValue) -> str:
    # repr() round-trips floats exactly, so identical runs emit identical text
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def metrics_csv(metrics: Mapping[str, MetricValue]) -> str:
    """Long-format `metric,value` CSV, keys sorted, LF line endings."""
    lines = ["metric,value"]
    for key in sorted(metrics):
        lines.append(f"{key},{format_value(metrics[key])}")
    return "\n".join(lines) + "\n"
