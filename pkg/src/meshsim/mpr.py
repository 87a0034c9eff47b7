"""Multipoint relay selection and broadcast forwarding rules.

Every node picks, among its one-hop neighbors, a minimal greedy set of
relays that together reach its entire strict two-hop neighborhood.  A
broadcast is re-forwarded only by nodes the previous hop selected as
relays, and only when the previous hop's link is reliable enough and the
message is inside its flooding scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .linkmetrics import ELIGIBILITY_THRESHOLD


def check_bidirectional(self_id: int, advertised_neighbors) -> bool:
    """The link to a beacon's sender is bidirectional when the sender
    lists us among its own neighbors."""
    return self_id in advertised_neighbors


@dataclass
class MprState:
    """Selector-side view used to compute the relay set."""

    self_id: int
    one_hop: set[int] = field(default_factory=set)
    two_hop: dict[int, set[int]] = field(default_factory=dict)
    selected: set[int] = field(default_factory=set)
    uncoverable: set[int] = field(default_factory=set)


def select_mprs(state: MprState) -> tuple[set[int], set[int]]:
    """Greedy cover of the strict two-hop neighborhood.

    Repeatedly picks the one-hop neighbor covering the most still-uncovered
    two-hop nodes, breaking ties by lower node id.  Returns the relay set
    and the set of advertised nodes nothing can reach any more (entries
    left behind by neighbors that dropped out of the one-hop set).
    """
    coverage: dict[int, set[int]] = {}
    universe: set[int] = set()
    for neighbor in sorted(state.one_hop):
        advertised = state.two_hop.get(neighbor, set())
        reach = {n for n in advertised if n != state.self_id and n not in state.one_hop}
        coverage[neighbor] = reach
        universe |= reach

    uncoverable: set[int] = set()
    for via, advertised in state.two_hop.items():
        if via not in state.one_hop:
            uncoverable |= {n for n in advertised if n != state.self_id and n not in state.one_hop}
    uncoverable -= universe

    selected: set[int] = set()
    uncovered = set(universe)
    while uncovered:
        best = None
        best_gain = -1
        for neighbor in sorted(coverage):
            gain = len(coverage[neighbor] & uncovered)
            if gain > best_gain:
                best = neighbor
                best_gain = gain
        if best is None or best_gain <= 0:
            # defensive: nothing can make progress, surface what is left
            uncoverable |= uncovered
            break
        selected.add(best)
        uncovered -= coverage.pop(best)

    state.selected = selected
    state.uncoverable = uncoverable
    return selected, uncoverable


def should_forward_broadcast(
    is_relay_for_prev: bool,
    prev_hop_reliability: float,
    in_scope: bool,
    threshold: float = ELIGIBILITY_THRESHOLD,
) -> bool:
    """Forwarding gate applied by a node receiving a flooded message.

    True only when the previous hop selected this node as a relay, the
    previous hop's link reliability clears the threshold, and the message
    has not left its flooding scope.
    """
    return is_relay_for_prev and prev_hop_reliability >= threshold and in_scope
