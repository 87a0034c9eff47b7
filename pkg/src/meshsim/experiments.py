"""Scenario assembly: seeded runs, flow sampling, and parameter sweeps.

A run is fully determined by its config (seed included).  Every random
stream is derived from the config seed by hashing a purpose label, so
adding a new consumer later never shifts the draws of an existing one.
Sweeps reuse the same derived seed for every protocol variant in a cell:
variants then face identical topology, loss tables, and flow workload,
and differ only in behavior, which turns cross-variant comparisons into
paired measurements.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from random import Random

from meshsim.config import VARIANTS, ConfigError, ScenarioConfig
from meshsim.engine import Simulator
from meshsim.medium import MediumModel
from meshsim.metrics import MetricValue, collect_metrics
from meshsim.network import Network
from meshsim.routing import Flow, Router, SharedState
from meshsim.topology import (
    Topology,
    build_topology,
    dependable_range,
    feasible_destinations,
    feasible_flow_sources,
    pick_selfish,
)

# sweep axis name -> config field; n_flows is the everyday alias
SWEEP_AXES: dict[str, str] = {
    "n_sources": "n_sources",
    "n_flows": "n_sources",
    "data_rate_bps": "data_rate_bps",
    "selfish_fraction": "selfish_fraction",
}

ALL_VARIANTS: tuple[str, ...] = tuple(VARIANTS)


def derive_seed(*parts: object) -> int:
    """Stable 63-bit stream seed from heterogeneous labels."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(slots=True)
class ScenarioResult:
    cfg: ScenarioConfig
    metrics: dict[str, MetricValue]
    flows: dict[int, Flow]
    selfish: frozenset[int]
    trace: list[tuple]
    conserved: bool


def sample_flows(
    cfg: ScenarioConfig, topo: Topology, rng: Random
) -> tuple[list[Flow], frozenset[int]]:
    """Draw the selfish set and the flow workload for one run.

    Sources come from the feasible pool (a dependable in-scope path to at
    least one destination exists).  When a selfish fraction is configured,
    the flow list is stratified: a proportional share of flows originate
    at selfish clients, the rest run between honest endpoints, so both
    populations are always represented and per-category throughput means
    are comparable across runs.  Destinations are never selfish; a selfish
    sink would measure the sink, not the protocol.
    """
    cut = dependable_range(cfg)
    selfish = pick_selfish(topo, cfg.selfish_fraction, rng)

    def usable(src: int) -> tuple[int, ...]:
        return tuple(
            d for d in feasible_destinations(topo, src, cut) if d not in selfish
        )

    pool = [s for s in feasible_flow_sources(topo, cut) if usable(s)]
    honest_pool = [s for s in pool if s not in selfish]
    selfish_pool = [s for s in pool if s in selfish]

    n_flows = cfg.n_sources
    k_selfish = 0
    if selfish:
        k_selfish = max(1, round(cfg.selfish_fraction * n_flows))
        k_selfish = min(k_selfish, len(selfish_pool), n_flows)
        if k_selfish == 0:
            raise ConfigError(
                "selfish fraction requested but no selfish client has a feasible flow"
            )
    k_honest = n_flows - k_selfish
    if k_honest > len(honest_pool):
        raise ConfigError(
            f"need {k_honest} honest sources, layout offers {len(honest_pool)}"
        )

    sources = rng.sample(selfish_pool, k_selfish) + rng.sample(honest_pool, k_honest)
    flows: list[Flow] = []
    for flow_id, src in enumerate(sources):
        dst = rng.choice(usable(src))
        scope = frozenset({topo.subnet_of(src), topo.subnet_of(dst)})
        start_at = cfg.warmup_s + rng.uniform(0.0, cfg.flow_start_spread_s)
        flows.append(Flow(flow_id=flow_id, src=src, dst=dst, scope=scope, start_at=start_at))
    return flows, selfish


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Build, run, and measure one scenario end to end."""
    cfg.validate()
    topo = build_topology(cfg, Random(derive_seed(cfg.seed, "topology")))
    flows, selfish = sample_flows(cfg, topo, Random(derive_seed(cfg.seed, "flows")))

    sim = Simulator()
    medium = MediumModel(sim, topo, cfg, Random(derive_seed(cfg.seed, "medium")))
    net = Network(sim, topo, cfg, medium, cfg.features, selfish, Random(derive_seed(cfg.seed, "events")))
    shared = SharedState()
    routers = {nid: Router(node, net, shared) for nid, node in net.nodes.items()}
    net.start()
    for flow in flows:
        routers[flow.src].start_flow(flow)
    sim.run_until(cfg.duration_s)

    conserved = medium.all_conserved()
    metrics = collect_metrics(cfg, shared, medium, selfish)
    return ScenarioResult(
        cfg=cfg,
        metrics=metrics,
        flows=dict(shared.flows),
        selfish=selfish,
        trace=list(shared.trace),
        conserved=conserved,
    )


@dataclass(slots=True)
class SweepRow:
    variant: str
    axis: str
    value: float
    seed: int
    metric: str
    metric_value: MetricValue


def run_sweep(
    base_cfg: ScenarioConfig,
    axis: str,
    values: tuple[float, ...] | list[float],
    variants: tuple[str, ...] = ALL_VARIANTS,
    n_seeds: int = 10,
) -> list[SweepRow]:
    """Grid of runs over one axis, all variants paired per cell.

    The cell seed hashes (base seed, axis, value, repeat index) and
    deliberately not the variant: each variant replays the same world.
    Per-flow metric keys are dropped from sweep rows; sweeps are for
    run-level comparison.
    """
    field = SWEEP_AXES.get(axis)
    if field is None:
        raise ConfigError(f"unknown sweep axis {axis!r}, expected one of {sorted(SWEEP_AXES)}")
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown protocol variant {variant!r}")

    rows: list[SweepRow] = []
    for value in values:
        for index in range(n_seeds):
            cell_seed = derive_seed(base_cfg.seed, axis, value, index)
            for variant in variants:
                cfg = base_cfg.with_overrides(
                    **{field: value}, protocol_variant=variant, seed=cell_seed
                )
                result = run_scenario(cfg)
                for metric in sorted(result.metrics):
                    if metric.startswith("flow."):
                        continue
                    rows.append(
                        SweepRow(
                            variant=variant,
                            axis=axis,
                            value=float(value),
                            seed=cell_seed,
                            metric=metric,
                            metric_value=result.metrics[metric],
                        )
                    )
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    from meshsim.metrics import format_value

    lines = ["variant,axis,value,seed,metric,metric_value"]
    for row in rows:
        lines.append(
            f"{row.variant},{row.axis},{format_value(row.value)},{row.seed},"
            f"{row.metric},{format_value(row.metric_value)}"
        )
    return "\n".join(lines) + "\n"


def sweep_metric(
    rows: list[SweepRow], variant: str, value: float, metric: str
) -> list[MetricValue]:
    """Pull one metric's per-seed series out of a sweep row list."""
    return [
        r.metric_value
        for r in rows
        if r.variant == variant and r.value == value and r.metric == metric
    ]
