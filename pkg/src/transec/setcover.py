"""Brute-force set cover and the cover-derived gadget attack.

The brute-force solver is the independent oracle used to cross-check the
reduction gadget: tampering the gadget per a size-<=k cover forces the LP
value above 3 (k + 1), and no tampering can when no such cover exists.
"""

from __future__ import annotations

from itertools import combinations

from .network import (
    Proportions,
    SetCoverInstance,
    element_cell_id,
    subset_cell_id,
)


def brute_force_cover(sc: SetCoverInstance) -> tuple[int, ...] | None:
    """Smallest subset collection of size <= k covering the universe, or None.

    Enumerates subcollections in increasing size, lexicographic within a
    size, so the result is deterministic.
    """
    universe = set(sc.universe)
    for size in range(1, sc.k + 1):
        for combo in combinations(range(len(sc.subsets)), size):
            if set().union(*(sc.subsets[i] for i in combo)) >= universe:
                return combo
    return None


def greedy_cover_choice(sc: SetCoverInstance) -> dict[str, int]:
    """Assign each element a covering subset, greedily minimizing distinct subsets.

    Classic greedy set cover; used to derive a concrete tampering when no
    size-<=k cover exists (the attack is then provably harmless, which is
    exactly what the gadget check asserts).
    """
    uncovered = set(sc.universe)
    choice: dict[str, int] = {}
    while uncovered:
        best = max(
            range(len(sc.subsets)),
            key=lambda i: (len(sc.subsets[i] & uncovered), -i),
        )
        gained = sc.subsets[best] & uncovered
        if not gained:
            raise AssertionError("instance validated as coverable")
        for u in gained:
            choice[u] = best
        uncovered -= gained
    return choice


def cover_attack_proportions(net, sc: SetCoverInstance, choice: dict[str, int]) -> Proportions:
    """Extreme tampering at the gadget merges induced by a subset choice.

    For every signalized element cell, the chosen subset's inflow proportion
    is set to 1 and every other inflow to 0.  Elements whose cell is not a
    merge (single containing subset) carry no proportion at all.
    """
    flat: dict[tuple[str, str], float] = {}
    for u, subset_idx in sorted(choice.items()):
        uid = element_cell_id(u)
        if uid not in net.signalized:
            continue
        chosen = subset_cell_id(subset_idx)
        for pred in net.predecessors[uid]:
            flat[(pred, uid)] = 1.0 if pred == chosen else 0.0
    return Proportions.from_dict(flat)


def derive_gadget_attack(net, sc: SetCoverInstance):
    """(cover_or_None, tampering) for the Theorem-style gadget check.

    When a size-<=k cover exists the tampering is derived from the smallest
    one; otherwise from the greedy choice function (the attacker's best
    effort, covering with > k subsets).
    """
    cover = brute_force_cover(sc)
    if cover is not None:
        covered = {}
        for u in sc.universe:
            for idx in cover:
                if u in sc.subsets[idx]:
                    covered[u] = idx
                    break
        choice = covered
    else:
        choice = greedy_cover_choice(sc)
    return cover, cover_attack_proportions(net, sc, choice)
