"""Bandwidth estimation, probe bookkeeping and admission tests.

The estimator reference values were computed separately with mpmath at
50 decimal digits by substituting into

    T = s / (RTT*sqrt(2p/3) + RTO*min(1, 3*sqrt(3p/8))*p*(1+32p^2))

for s = 4096 bits, RTT = 0.1 s, RTO = 0.14 s:
    p = 0.01  ->  486288.39694772907748  bits/s
    p = 0.05  ->  191733.32155723104014  bits/s
"""

import pytest
from hypothesis import given, strategies as st

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


def _inputs(p, rtt=0.1, var=0.01, raw=2e6, size=4096):
    return BandwidthInputs(
        packet_size_bits=size,
        rtt_mean_s=rtt,
        rtt_var_s=var,
        p_congestion=p,
        raw_bandwidth_bps=raw,
    )


def test_estimator_frozen_oracle_point():
    assert estimate_bandwidth(_inputs(0.01)) == pytest.approx(486288.39694772907748, rel=1e-12)


def test_estimator_second_oracle_point():
    assert estimate_bandwidth(_inputs(0.05)) == pytest.approx(191733.32155723104014, rel=1e-12)


def test_zero_loss_returns_raw_bandwidth():
    assert estimate_bandwidth(_inputs(0.0)) == 2e6


def test_estimate_clamped_to_raw_bandwidth():
    # tiny loss over a fast link would exceed the channel rate without the clamp
    assert estimate_bandwidth(_inputs(1e-9, rtt=0.001, var=0.0)) == 2e6


def test_estimator_monotone_in_loss():
    grid = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9]
    values = [estimate_bandwidth(_inputs(p)) for p in grid]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_estimator_monotone_in_rtt():
    values = [estimate_bandwidth(_inputs(0.02, rtt=r)) for r in (0.02, 0.05, 0.1, 0.3)]
    assert all(a > b for a, b in zip(values, values[1:]))


@given(
    p=st.floats(min_value=0.0, max_value=1.0),
    rtt=st.floats(min_value=1e-4, max_value=5.0),
    var=st.floats(min_value=0.0, max_value=1.0),
)
def test_estimate_positive_and_bounded(p, rtt, var):
    est = estimate_bandwidth(_inputs(p, rtt=rtt, var=var))
    assert 0.0 < est <= 2e6


def test_estimator_rejects_bad_inputs():
    with pytest.raises(ValueError):
        estimate_bandwidth(_inputs(1.5))
    with pytest.raises(ValueError):
        estimate_bandwidth(_inputs(-0.1))
    with pytest.raises(ValueError):
        estimate_bandwidth(_inputs(0.1, rtt=0.0))
    with pytest.raises(ValueError):
        estimate_bandwidth(_inputs(0.1, size=0))


def test_rto_frozen_value():
    assert compute_rto(0.1, 0.025) == pytest.approx(0.2)


def test_rto_requires_nonnegative_variation():
    with pytest.raises(ValueError):
        compute_rto(0.1, -0.001)


def test_probe_count_doubles_hops():
    assert probe_count(1) == 2
    assert probe_count(4) == 8
    with pytest.raises(ValueError):
        probe_count(0)


def test_probe_session_timer_scales_with_first_delay():
    session = ProbeSession(flow_id=1, candidate_key=("a",), hops=3, expected=6)
    deadline = session.arm_timer(first_delay=0.05, now=10.0)
    assert deadline == pytest.approx(10.0 + 2 * 0.05 * 6)


def test_probe_session_timer_floor():
    session = ProbeSession(flow_id=1, candidate_key=("a",), hops=2, expected=4)
    # 2 * 0.001 * 4 = 0.008 is below the floor
    assert session.arm_timer(first_delay=0.001, now=0.0) == pytest.approx(0.1)


def test_probe_session_records_until_complete():
    session = ProbeSession(flow_id=9, candidate_key=("k",), hops=1, expected=2)
    session.record(0.01)
    assert not session.complete
    session.record(0.03)
    assert session.complete
    assert destination_average_delay(session) == pytest.approx(0.02)


def test_average_delay_with_no_probes_fails():
    session = ProbeSession(flow_id=9, candidate_key=("k",), hops=1, expected=2)
    with pytest.raises(ProbeFailure):
        destination_average_delay(session)


def test_congestion_ratio_counts_only_congestion_losses():
    ledger = LossLedger(delivered=90, lost_link=6, lost_congestion=4)
    assert congestion_loss_ratio(ledger) == pytest.approx(0.04)
    assert congestion_loss_ratio(LossLedger()) == 0.0


def test_admission_decisions():
    ok = dict(avg_delay=0.1, delay_bound=0.3, est_bandwidth=80_000.0, bw_min=50_000.0)
    assert admit_flow(**ok) is AdmitDecision.ADMIT
    late = dict(ok, avg_delay=0.4)
    assert admit_flow(**late) is AdmitDecision.REJECT
    assert admit_flow(**late, more_candidates=True) is AdmitDecision.TRY_NEXT
    thin = dict(ok, est_bandwidth=10_000.0)
    assert admit_flow(**thin, more_candidates=True) is AdmitDecision.TRY_NEXT
    assert admit_flow(**thin) is AdmitDecision.REJECT


def test_admission_boundaries_inclusive():
    # meeting the bound exactly is acceptance, not rejection
    assert (
        admit_flow(avg_delay=0.3, delay_bound=0.3, est_bandwidth=50_000.0, bw_min=50_000.0)
        is AdmitDecision.ADMIT
    )
