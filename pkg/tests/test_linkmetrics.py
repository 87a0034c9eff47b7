"""Link reliability estimator tests.

Frozen reference values below were worked out by direct substitution
into the exponentially weighted update R = a*N + (1-a)*R_prev with
a = 0.5 and hand-reduced fractions, independently of the code.
"""

import pytest
from hypothesis import given, strategies as st

from meshsim.linkmetrics import (
    LinkReliabilityTable,
    is_eligible,
    path_reliability,
    update_reliability,
)


def test_first_window_seeds_the_estimate():
    table = LinkReliabilityTable()
    table.note_interval(7, 0.25)  # 4 expected per 1 s window
    for _ in range(3):
        table.record_control_packet(7)
    table.close_window()
    assert table.get(7) == pytest.approx(0.75)


def test_frozen_ewma_sequence():
    # hand substitution: 0.75 -> 0.5*1 + 0.5*0.75 = 0.875
    #                        -> 0.5*0.25 + 0.5*0.875 = 0.5625
    table = LinkReliabilityTable()
    table.note_interval(3, 0.25)
    for received in (3, 4, 1):
        for _ in range(received):
            table.record_control_packet(3)
        table.close_window()
    assert table.get(3) == pytest.approx(0.5625)


def test_update_reliability_frozen_points():
    assert update_reliability(1.0, 0.5) == pytest.approx(0.75)
    assert update_reliability(0.0, 1.0) == pytest.approx(0.5)
    assert update_reliability(0.6, 0.2, alpha=0.25) == pytest.approx(0.3)


def test_sample_saturates_at_one():
    # more control packets than expected (e.g. after an interval change)
    # must not push the sample above 1
    table = LinkReliabilityTable()
    table.note_interval(1, 0.25)
    for _ in range(9):
        table.record_control_packet(1)
    table.close_window()
    assert table.get(1) == 1.0


def test_silent_neighbor_decays_toward_zero():
    table = LinkReliabilityTable()
    table.note_interval(2, 0.25)
    for _ in range(4):
        table.record_control_packet(2)
    table.close_window()
    assert table.get(2) == 1.0
    for _ in range(10):
        table.close_window()
    assert table.get(2) < 0.001


def test_unknown_neighbor_reads_zero_and_is_ineligible():
    table = LinkReliabilityTable()
    assert table.get(99) == 0.0
    assert not table.eligible(99)


def test_eligibility_threshold_inclusive():
    assert is_eligible(0.5)
    assert not is_eligible(0.4999)
    table = LinkReliabilityTable()
    table.note_interval(5, 0.25)
    for _ in range(2):
        table.record_control_packet(5)
    table.close_window()
    assert table.get(5) == 0.5
    assert table.eligible(5)


def test_path_reliability_is_arithmetic_mean():
    assert path_reliability([1.0, 0.5, 0.75]) == pytest.approx(0.75)
    assert path_reliability([0.6]) == 0.6
    with pytest.raises(ValueError):
        path_reliability([])
    with pytest.raises(ValueError):
        path_reliability([1.2])


@given(
    n=st.floats(min_value=0.0, max_value=1.0),
    prev=st.floats(min_value=0.0, max_value=1.0),
    alpha=st.floats(min_value=0.0, max_value=1.0, exclude_min=True, exclude_max=True),
)
def test_update_stays_in_unit_interval(n, prev, alpha):
    r = update_reliability(n, prev, alpha=alpha)
    assert 0.0 <= r <= 1.0


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=12))
def test_path_reliability_bounded_by_extremes(values):
    r = path_reliability(values)
    assert min(values) - 1e-12 <= r <= max(values) + 1e-12


@given(st.integers(min_value=0, max_value=4))
def test_window_sample_matches_ratio(received):
    table = LinkReliabilityTable()
    table.note_interval(0, 0.25)
    for _ in range(received):
        table.record_control_packet(0)
    table.close_window()
    assert table.get(0) == pytest.approx(min(1.0, received / 4))


def test_remove_forgets_neighbor():
    table = LinkReliabilityTable()
    table.note_interval(4, 0.25)
    for _ in range(4):
        table.record_control_packet(4)
    table.close_window()
    table.remove(4)
    assert table.get(4) == 0.0
