"""Event engine ordering, determinism and causality checks."""

import pytest

from meshsim.engine import CausalityError, Simulator


def test_events_run_in_time_order():
    sim = Simulator()
    seen = []
    sim.schedule(3.0, lambda: seen.append("c"))
    sim.schedule(1.0, lambda: seen.append("a"))
    sim.schedule(2.0, lambda: seen.append("b"))
    sim.run_until(10.0)
    assert seen == ["a", "b", "c"]
    assert sim.now == 10.0


def test_ties_break_by_scheduling_order():
    # two events at the same instant must fire in the order they were
    # scheduled, not in heap-internal order
    sim = Simulator()
    seen = []
    for tag in range(8):
        sim.schedule(1.0, lambda t=tag: seen.append(t))
    sim.run_until(1.0)
    assert seen == list(range(8))


def test_event_scheduled_during_run_executes():
    sim = Simulator()
    seen = []

    def first():
        seen.append("first")
        sim.schedule(sim.now + 0.5, lambda: seen.append("second"))

    sim.schedule(1.0, first)
    sim.run_until(2.0)
    assert seen == ["first", "second"]


def test_schedule_in_past_raises():
    sim = Simulator()
    sim.schedule(1.0, lambda: None)
    sim.run_until(5.0)
    with pytest.raises(CausalityError):
        sim.schedule(4.0, lambda: None)


def test_run_until_backwards_raises():
    sim = Simulator()
    sim.run_until(5.0)
    with pytest.raises(CausalityError):
        sim.run_until(1.0)


def test_run_until_is_resumable_and_idempotent():
    sim = Simulator()
    seen = []
    sim.schedule(1.0, lambda: seen.append(1))
    sim.schedule(2.0, lambda: seen.append(2))
    assert sim.run_until(1.5) == 1
    assert seen == [1]
    assert sim.run_until(1.5) == 0
    assert sim.run_until(3.0) == 1
    assert seen == [1, 2]


def test_boundary_event_fires():
    sim = Simulator()
    seen = []
    sim.schedule(2.0, lambda: seen.append("edge"))
    sim.run_until(2.0)
    assert seen == ["edge"]


def test_cancelled_events_are_skipped():
    sim = Simulator()
    seen = []
    keep = sim.schedule(1.0, lambda: seen.append("keep"))
    drop = sim.schedule(1.0, lambda: seen.append("drop"))
    drop.cancelled = True
    sim.run_until(2.0)
    assert seen == ["keep"]
    assert not keep.cancelled


def test_identical_schedules_identical_trace():
    def build():
        sim = Simulator()
        trace = []
        for i in range(50):
            sim.schedule((i * 7 % 13) / 10.0, lambda i=i: trace.append(i))
        sim.run_until(2.0)
        return trace

    assert build() == build()
