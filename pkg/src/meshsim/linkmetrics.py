"""Link reliability estimation from received control traffic.

Each node scores its neighbors once per measurement window with an
exponentially weighted moving average of the fraction of expected
control packets actually received.  A link whose score falls below the
eligibility threshold is not used for routing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_ALPHA = 0.5
DEFAULT_WINDOW = 1.0
ELIGIBILITY_THRESHOLD = 0.5


def update_reliability(n_t: float, n_prev: float, alpha: float = DEFAULT_ALPHA) -> float:
    """One EWMA step: alpha * n_t + (1 - alpha) * n_prev.

    n_t is the observed delivery fraction for the window just closed and
    n_prev the running reliability before it.  Both must lie in [0, 1],
    alpha in (0, 1); the result is again in [0, 1].
    """
    if not 0.0 <= n_t <= 1.0:
        raise ValueError(f"n_t out of range [0,1]: {n_t}")
    if not 0.0 <= n_prev <= 1.0:
        raise ValueError(f"n_prev out of range [0,1]: {n_prev}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha out of range (0,1): {alpha}")
    return alpha * n_t + (1.0 - alpha) * n_prev


def path_reliability(link_values: list[float] | tuple[float, ...]) -> float:
    """Arithmetic mean of per-link reliability values along a path."""
    if not link_values:
        raise ValueError("empty path")
    for value in link_values:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"link value out of range [0,1]: {value}")
    return sum(link_values) / len(link_values)


def is_eligible(r: float, threshold: float = ELIGIBILITY_THRESHOLD) -> bool:
    """A link is usable for routing when its reliability reaches the threshold."""
    return r >= threshold


@dataclass(slots=True)
class _NeighborEntry:
    reliability: float = 0.0
    window_count: int = 0
    expected_per_window: float = 1.0
    has_history: bool = False


@dataclass
class LinkReliabilityTable:
    """Per-neighbor reliability state for one node.

    Entries exist only for neighbors that have been heard; a neighbor
    without an entry reads as reliability 0.  `expected_per_window` is
    derived from the neighbor's advertised control-packet interval, so
    gateways announcing more often are held to a higher count.
    """

    alpha: float = DEFAULT_ALPHA
    window: float = DEFAULT_WINDOW
    entries: dict[int, _NeighborEntry] = field(default_factory=dict)

    def note_interval(self, neighbor: int, interval: float) -> None:
        """Record the neighbor's announcement interval (sets the expected count)."""
        if interval <= 0:
            raise ValueError(f"interval must be positive: {interval}")
        entry = self.entries.get(neighbor)
        if entry is None:
            entry = _NeighborEntry()
            self.entries[neighbor] = entry
        entry.expected_per_window = max(1.0, self.window / interval)

    def record_control_packet(self, neighbor: int) -> None:
        """Count one received control packet from `neighbor` in the open window."""
        entry = self.entries.get(neighbor)
        if entry is None:
            entry = _NeighborEntry()
            self.entries[neighbor] = entry
        entry.window_count += 1

    def close_window(self) -> None:
        """Fold the window counts into each neighbor's running reliability.

        The first window observed for a neighbor seeds the average with the
        raw fraction instead of blending with the implicit zero history.
        """
        for entry in self.entries.values():
            n_t = min(1.0, entry.window_count / entry.expected_per_window)
            if entry.has_history:
                entry.reliability = update_reliability(n_t, entry.reliability, self.alpha)
            else:
                entry.reliability = n_t
                entry.has_history = True
            entry.window_count = 0

    def get(self, neighbor: int) -> float:
        entry = self.entries.get(neighbor)
        return entry.reliability if entry is not None else 0.0

    def eligible(self, neighbor: int, threshold: float = ELIGIBILITY_THRESHOLD) -> bool:
        return is_eligible(self.get(neighbor), threshold)

    def remove(self, neighbor: int) -> None:
        self.entries.pop(neighbor, None)
