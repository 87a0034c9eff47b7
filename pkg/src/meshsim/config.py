"""Scenario configuration, protocol variants, and config-file loading."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any

import yaml

# gateways sit beside the router clusters (wired uplinks are deployed at
# the infrastructure points), offset enough to not shadow the router
DEFAULT_IGW_POSITIONS = (
    (370.0, 370.0),
    (370.0, 1130.0),
    (1130.0, 370.0),
    (1130.0, 1130.0),
    (820.0, 820.0),
)

DEFAULT_MR_POSITIONS = (
    (300.0, 300.0),
    (300.0, 1200.0),
    (1200.0, 300.0),
    (1200.0, 1200.0),
    (750.0, 750.0),
)


class ConfigError(ValueError):
    """A configuration field failed validation; message names the field."""


@dataclass(frozen=True, slots=True)
class VariantFeatures:
    """Feature switches distinguishing the protocol variants under study."""

    mpr: bool = True
    circular: bool = True
    reliability_filter: bool = True
    probe_phase: bool = True
    scoped_flooding: bool = True
    gw_info: bool = True
    local_repair: bool = True


VARIANTS: dict[str, VariantFeatures] = {
    "proposed": VariantFeatures(),
    "no-mpr": VariantFeatures(mpr=False),
    "no-circular": VariantFeatures(circular=False),
    "flood-baseline": VariantFeatures(
        mpr=False,
        circular=False,
        reliability_filter=False,
        probe_phase=False,
        scoped_flooding=False,
        gw_info=False,
        local_repair=False,
    ),
}


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """Full parameter set for one simulation run.

    Defaults reflect the published evaluation setup: 1500 x 1500 m area,
    5 mesh routers each governing 9 clients, 5 gateways, 2 Mbps radio,
    512-byte packets at 32 kbps per flow, 900 s duration.
    """

    area: tuple[float, float] = (1500.0, 1500.0)
    n_mr: int = 5
    n_mc: int = 45
    n_igw: int = 5
    mcs_per_mr: int = 9
    mr_positions: tuple[tuple[float, float], ...] = DEFAULT_MR_POSITIONS
    igw_positions: tuple[tuple[float, float], ...] = DEFAULT_IGW_POSITIONS
    radio_range: float = 250.0

    raw_bandwidth_bps: float = 2.0e6
    wired_bandwidth_bps: float = 1.0e8
    wired_delay_s: float = 0.0118

    packet_size_bytes: int = 512
    data_rate_bps: float = 32000.0
    n_sources: int = 15
    duration_s: float = 900.0
    seed: int = 1
    protocol_variant: str = "proposed"
    selfish_fraction: float = 0.0

    bw_min_bps: float = 50000.0
    delay_bound_s: float = 0.3

    hello_interval_s: float = 0.25
    igw_hello_interval_s: float = 0.2
    gw_info_interval_s: float = 2.0
    reliability_window_s: float = 1.0
    reliability_alpha: float = 0.5
    reliability_threshold: float = 0.5

    queue_limit_s: float = 0.05
    mac_attempts: int = 4
    # unicast pays the full handshake (RTS/CTS, SIFS gaps, ACK, DIFS and
    # mean backoff at the 2 Mb/s base rate); broadcast skips RTS and ACK
    access_overhead_unicast_s: float = 0.002
    access_overhead_broadcast_s: float = 0.0012
    # carrier sense blocks transmitters well past decode range
    interference_factor: float = 1.6
    loss_base: float = 0.02
    loss_range_factor: float = 0.9
    loss_exponent: float = 6.0
    loss_asymmetry: float = 0.15
    loss_cap: float = 0.92

    warmup_s: float = 10.0
    flow_start_spread_s: float = 5.0
    rrep_candidates_max: int = 3
    rreq_retries: int = 3
    rreq_timeout_s: float = 0.5
    repair_ttl: int = 2
    repair_timeout_s: float = 0.5
    buffer_packets: int = 20
    retry_cooldown_s: float = 10.0
    min_discovery_gap_s: float = 0.5

    hello_bytes: int = 64
    gw_info_bytes: int = 48
    rreq_bytes: int = 48
    rrep_bytes: int = 64
    rerr_bytes: int = 32

    record_events: bool = False

    @property
    def features(self) -> VariantFeatures:
        return VARIANTS[self.protocol_variant]

    @property
    def data_interval_s(self) -> float:
        return self.packet_size_bytes * 8 / self.data_rate_bps

    def validate(self) -> None:
        def bad(name: str, why: str) -> ConfigError:
            return ConfigError(f"{name}: {why}")

        if len(self.area) != 2 or self.area[0] <= 0 or self.area[1] <= 0:
            raise bad("area", "must be two positive dimensions")
        if self.n_mr < 1:
            raise bad("n_mr", "need at least one mesh router")
        if self.n_mc != self.n_mr * self.mcs_per_mr:
            raise bad("n_mc", f"must equal n_mr * mcs_per_mr = {self.n_mr * self.mcs_per_mr}")
        if len(self.mr_positions) != self.n_mr:
            raise bad("mr_positions", f"need exactly {self.n_mr} positions")
        if len(self.igw_positions) != self.n_igw:
            raise bad("igw_positions", f"need exactly {self.n_igw} positions")
        for name, positions in (("mr_positions", self.mr_positions), ("igw_positions", self.igw_positions)):
            for x, y in positions:
                if not (0 <= x <= self.area[0] and 0 <= y <= self.area[1]):
                    raise bad(name, f"({x}, {y}) lies outside the area")
        if self.radio_range <= 0:
            raise bad("radio_range", "must be positive")
        for name in (
            "raw_bandwidth_bps", "wired_bandwidth_bps", "data_rate_bps",
            "hello_interval_s", "igw_hello_interval_s", "gw_info_interval_s",
            "reliability_window_s", "queue_limit_s", "rreq_timeout_s",
            "repair_timeout_s", "bw_min_bps", "delay_bound_s",
        ):
            if getattr(self, name) <= 0:
                raise bad(name, "must be positive")
        for name in (
            "wired_delay_s", "duration_s", "warmup_s", "flow_start_spread_s",
            "retry_cooldown_s", "min_discovery_gap_s",
            "access_overhead_unicast_s", "access_overhead_broadcast_s",
        ):
            if getattr(self, name) < 0:
                raise bad(name, "must be nonnegative")
        if self.packet_size_bytes < 1:
            raise bad("packet_size_bytes", "must be at least 1")
        if not 0 <= self.n_sources <= self.n_mc:
            raise bad("n_sources", f"must be between 0 and n_mc = {self.n_mc}")
        if self.protocol_variant not in VARIANTS:
            raise bad("protocol_variant", f"unknown variant; valid: {', '.join(sorted(VARIANTS))}")
        if not 0.0 <= self.selfish_fraction <= 1.0:
            raise bad("selfish_fraction", "must lie in [0, 1]")
        if not 0.0 < self.reliability_alpha < 1.0:
            raise bad("reliability_alpha", "must lie in (0, 1)")
        if not 0.0 <= self.reliability_threshold <= 1.0:
            raise bad("reliability_threshold", "must lie in [0, 1]")
        if self.mac_attempts < 1:
            raise bad("mac_attempts", "must be at least 1")
        if self.interference_factor < 1.0:
            raise bad("interference_factor", "must be at least 1 (covers decode range)")
        if not 0.0 <= self.loss_base <= 1.0:
            raise bad("loss_base", "must lie in [0, 1]")
        if not 0.0 <= self.loss_cap <= 1.0:
            raise bad("loss_cap", "must lie in [0, 1]")
        if self.loss_exponent <= 0:
            raise bad("loss_exponent", "must be positive")
        if self.loss_asymmetry < 0 or self.loss_asymmetry >= 1:
            raise bad("loss_asymmetry", "must lie in [0, 1)")
        if self.rrep_candidates_max < 1:
            raise bad("rrep_candidates_max", "must be at least 1")
        if self.rreq_retries < 0:
            raise bad("rreq_retries", "must be nonnegative")
        if self.repair_ttl < 1:
            raise bad("repair_ttl", "must be at least 1")
        if self.buffer_packets < 0:
            raise bad("buffer_packets", "must be nonnegative")
        for name in ("hello_bytes", "gw_info_bytes", "rreq_bytes", "rrep_bytes", "rerr_bytes"):
            if getattr(self, name) < 1:
                raise bad(name, "must be at least 1")

    def with_overrides(self, **kwargs: Any) -> "ScenarioConfig":
        cfg = replace(self, **kwargs)
        cfg.validate()
        return cfg


_TUPLE_FIELDS = {"mr_positions", "igw_positions"}


def config_from_mapping(mapping: dict[str, Any]) -> ScenarioConfig:
    """Build a validated config from a parsed key/value mapping.

    Unknown keys are rejected by name so typos surface immediately.
    """
    if not isinstance(mapping, dict):
        raise ConfigError("top level: expected a mapping of field names to values")
    known = {f.name for f in fields(ScenarioConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in mapping.items():
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
        if key == "area":
            value = tuple(float(v) for v in value)
            if len(value) != 2:
                raise ConfigError("area: expected [width, height]")
        elif key in _TUPLE_FIELDS:
            try:
                value = tuple((float(x), float(y)) for x, y in value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: expected a list of [x, y] pairs") from exc
        kwargs[key] = value
    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path: str) -> ScenarioConfig:
    """Load and validate a scenario config from a structured text file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_mapping(raw)
