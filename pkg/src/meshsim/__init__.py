"""Wireless mesh network routing simulator with anonymous user authentication."""

from meshsim.engine import CausalityError, SimEvent, Simulator
from meshsim.linkmetrics import (
    DEFAULT_ALPHA,
    DEFAULT_WINDOW,
    ELIGIBILITY_THRESHOLD,
    LinkReliabilityTable,
    is_eligible,
    path_reliability,
    update_reliability,
)
from meshsim.mpr import MprState, check_bidirectional, select_mprs, should_forward_broadcast
from meshsim.qos import (
    AdmitDecision,
    BandwidthInputs,
    LossLedger,
    ProbeFailure,
    ProbeSession,
    admit_flow,
    compute_rto,
    congestion_loss_ratio,
    destination_average_delay,
    estimate_bandwidth,
    probe_count,
)

__version__ = "0.1.0"

__all__ = [
    "AdmitDecision",
    "BandwidthInputs",
    "CausalityError",
    "DEFAULT_ALPHA",
    "DEFAULT_WINDOW",
    "ELIGIBILITY_THRESHOLD",
    "LinkReliabilityTable",
    "LossLedger",
    "MprState",
    "ProbeFailure",
    "ProbeSession",
    "SimEvent",
    "Simulator",
    "admit_flow",
    "check_bidirectional",
    "compute_rto",
    "congestion_loss_ratio",
    "destination_average_delay",
    "estimate_bandwidth",
    "is_eligible",
    "path_reliability",
    "probe_count",
    "select_mprs",
    "should_forward_broadcast",
    "update_reliability",
    "__version__",
]
