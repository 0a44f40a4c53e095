"""Cell transmission model domain types, validation, and the set-cover gadget.

Cells carry time-independent parameters: Q (max flow per interval), N (max
occupancy), delta (free-flow to backward-propagation speed ratio), and, for
sources, a finite demand schedule (demand beyond the list is 0).  Unbounded
Q or N is encoded as ``math.inf``; the LP layer omits the corresponding
constraint instead of using a large float.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from .errors import NetworkError

PROPORTION_TOL = 1e-9


class CellKind(str, Enum):
    ORDINARY = "ordinary"
    DIVERGING = "diverging"
    MERGING = "merging"
    SOURCE = "source"
    SINK = "sink"


@dataclass(frozen=True)
class Cell:
    """One homogeneous road segment (or a source/sink endpoint)."""

    id: str
    kind: CellKind
    Q: float = math.inf
    N: float = math.inf
    delta: float = 1.0
    demand: tuple[float, ...] = ()

    def demand_at(self, t: int) -> float:
        return self.demand[t] if 0 <= t < len(self.demand) else 0.0


@dataclass(frozen=True)
class Network:
    """Immutable CTM instance: cells, directed connections, signalized merges.

    Cells, edges and the signalized set are stored in canonical lexicographic
    order so that serialization is reproducible byte for byte.
    """

    cells: tuple[Cell, ...]
    edges: tuple[tuple[str, str], ...]
    signalized: tuple[str, ...]

    @staticmethod
    def make(cells, edges, signalized) -> "Network":
        """Build a network with canonical ordering applied."""
        cells = tuple(sorted(cells, key=lambda c: c.id))
        edges = tuple(sorted((str(a), str(b)) for a, b in edges))
        signalized = tuple(sorted(str(s) for s in signalized))
        return Network(cells, edges, signalized)

    @cached_property
    def by_id(self) -> dict[str, Cell]:
        return {c.id: c for c in self.cells}

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        preds: dict[str, list[str]] = {c.id: [] for c in self.cells}
        for a, b in self.edges:
            if b in preds:
                preds[b].append(a)
        return {k: tuple(sorted(v)) for k, v in preds.items()}

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {c.id: [] for c in self.cells}
        for a, b in self.edges:
            if a in succ:
                succ[a].append(b)
        return {k: tuple(sorted(v)) for k, v in succ.items()}

    @property
    def sources(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.SOURCE)

    @property
    def sinks(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.SINK)

    def total_demand(self) -> float:
        return sum(sum(c.demand) for c in self.sources)


@dataclass(frozen=True)
class Proportions:
    """Inflow proportions p[(pred, merge)] for signalized merging cells.

    May cover any subset of the signalized merges (a "partial" assignment);
    per covered merge the values over its predecessors must sum to 1 within
    PROPORTION_TOL.
    """

    values: tuple[tuple[tuple[str, str], float], ...]

    @staticmethod
    def from_dict(mapping) -> "Proportions":
        """Accepts {(pred, merge): p} or nested {merge: {pred: p}}."""
        flat = {}
        for key, val in mapping.items():
            if isinstance(key, tuple):
                flat[(key[0], key[1])] = float(val)
            else:
                for pred, p in val.items():
                    flat[(pred, key)] = float(p)
        return Proportions(tuple(sorted(flat.items())))

    @cached_property
    def as_dict(self) -> dict[tuple[str, str], float]:
        return dict(self.values)

    @cached_property
    def merges(self) -> tuple[str, ...]:
        return tuple(sorted({m for (_, m) in self.as_dict}))

    def for_merge(self, merge: str) -> dict[str, float]:
        return {k: p for (k, m), p in self.values if m == merge}

    def get(self, pred: str, merge: str) -> float:
        return self.as_dict[(pred, merge)]

    def overlay(self, other: "Proportions") -> "Proportions":
        """Replace every merge covered by ``other`` with its assignment."""
        replaced = set(other.merges)
        kept = {km: p for km, p in self.values if km[1] not in replaced}
        kept.update(other.as_dict)
        return Proportions(tuple(sorted(kept.items())))

    def restrict(self, merges) -> "Proportions":
        keep = set(merges)
        return Proportions(tuple((km, p) for km, p in self.values if km[1] in keep))

    def check_normalized(self, net: Network) -> None:
        """Raise NetworkError unless every covered merge sums to 1."""
        for m in self.merges:
            if m not in net.by_id:
                raise NetworkError(f"proportions reference unknown cell {m!r}")
            if m not in net.signalized:
                raise NetworkError(f"proportions reference non-signalized cell {m!r}")
            row = self.for_merge(m)
            preds = set(net.predecessors[m])
            if set(row) != preds:
                raise NetworkError(f"proportions for {m!r} do not match its predecessors")
            total = sum(row.values())
            if abs(total - 1.0) > PROPORTION_TOL:
                raise NetworkError(f"proportions for {m!r} sum to {total}, expected 1")
            if any(p < -PROPORTION_TOL or p > 1 + PROPORTION_TOL for p in row.values()):
                raise NetworkError(f"proportions for {m!r} outside [0, 1]")


def extreme_proportions(net: Network, merge: str, chosen_pred: str) -> Proportions:
    """One-hot assignment at ``merge``: the chosen predecessor gets 1."""
    preds = net.predecessors[merge]
    if chosen_pred not in preds:
        raise NetworkError(f"{chosen_pred!r} is not a predecessor of {merge!r}")
    return Proportions.from_dict(
        {(k, merge): (1.0 if k == chosen_pred else 0.0) for k in preds}
    )


def uniform_proportions(net: Network) -> Proportions:
    """Uniform split over predecessors at every signalized merge."""
    flat = {}
    for m in net.signalized:
        preds = net.predecessors[m]
        for k in preds:
            flat[(k, m)] = 1.0 / len(preds)
    return Proportions.from_dict(flat)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    problems: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_network(net: Network) -> ValidationReport:
    """Check structural invariants; returns a report instead of raising."""
    problems: list[str] = []
    ids = [c.id for c in net.cells]
    if len(set(ids)) != len(ids):
        problems.append("duplicate cell ids")
    known = set(ids)

    for a, b in net.edges:
        if a not in known or b not in known:
            problems.append(f"edge ({a}, {b}) references unknown cell")
        if a == b:
            problems.append(f"self-loop at {a}")
    if len(set(net.edges)) != len(net.edges):
        problems.append("duplicate edges")

    n_source = n_sink = 0
    for c in net.cells:
        n_in = len(net.predecessors.get(c.id, ()))
        n_out = len(net.successors.get(c.id, ()))
        if c.kind is CellKind.ORDINARY and not (n_in == 1 and n_out == 1):
            problems.append(f"ordinary cell {c.id} has degree ({n_in}, {n_out})")
        elif c.kind is CellKind.DIVERGING and not (n_in == 1 and n_out >= 2):
            problems.append(f"diverging cell {c.id} has degree ({n_in}, {n_out})")
        elif c.kind is CellKind.MERGING and not (n_in >= 2 and n_out == 1):
            problems.append(f"merging cell {c.id} has degree ({n_in}, {n_out})")
        elif c.kind is CellKind.SOURCE:
            n_source += 1
            # Sources may feed several cells (the set-cover gadget needs this);
            # outflow then obeys the diverging-style aggregate bound.
            if not (n_in == 0 and n_out >= 1):
                problems.append(f"source cell {c.id} has degree ({n_in}, {n_out})")
            if not math.isinf(c.N):
                problems.append(f"source cell {c.id} must have N = inf")
        elif c.kind is CellKind.SINK:
            n_sink += 1
            if not (n_in >= 1 and n_out == 0):
                problems.append(f"sink cell {c.id} has degree ({n_in}, {n_out})")
            if not (math.isinf(c.N) and math.isinf(c.Q)):
                problems.append(f"sink cell {c.id} must have Q = N = inf")

        if c.Q < 0:
            problems.append(f"cell {c.id} has Q < 0")
        if c.N < 0:
            problems.append(f"cell {c.id} has N < 0")
        if not (0.0 < c.delta <= 1.0):
            problems.append(f"cell {c.id} has delta outside (0, 1]")
        if c.kind is not CellKind.SOURCE and c.demand:
            problems.append(f"non-source cell {c.id} carries a demand schedule")
        if any(d < 0 for d in c.demand):
            problems.append(f"cell {c.id} has negative demand")

    if n_source == 0:
        problems.append("no source cell")
    if n_sink == 0:
        problems.append("no sink cell")

    for s in net.signalized:
        cell = net.by_id.get(s)
        if cell is None:
            problems.append(f"signalized id {s} is not a cell")
        elif cell.kind is not CellKind.MERGING:
            problems.append(f"signalized cell {s} is not a merging cell")

    if not problems:
        sink_ids = {c.id for c in net.sinks}
        for src in net.sources:
            frontier, seen = [src.id], {src.id}
            reached = False
            while frontier:
                cur = frontier.pop()
                if cur in sink_ids:
                    reached = True
                    break
                for nxt in net.successors[cur]:
                    if nxt not in seen:
                        seen.add(nxt)
                        frontier.append(nxt)
            if not reached:
                problems.append(f"source {src.id} cannot reach any sink")

    return ValidationReport(not problems, tuple(problems))


# ---------------------------------------------------------------------------
# Set-cover reduction gadget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetCoverInstance:
    """Universe, subset collection and cover-size bound k."""

    universe: tuple[str, ...]
    subsets: tuple[frozenset[str], ...]
    k: int

    @staticmethod
    def make(universe, subsets, k) -> "SetCoverInstance":
        inst = SetCoverInstance(
            tuple(sorted(str(u) for u in universe)),
            tuple(frozenset(str(u) for u in s) for s in subsets),
            int(k),
        )
        inst.check()
        return inst

    def check(self) -> None:
        if self.k <= 0:
            raise NetworkError("cover bound k must be positive")
        if self.k > len(self.subsets):
            raise NetworkError("cover bound k exceeds the number of subsets")
        covered = set().union(*self.subsets) if self.subsets else set()
        missing = set(self.universe) - covered
        if missing:
            raise NetworkError(f"elements {sorted(missing)} appear in no subset")
        extra = covered - set(self.universe)
        if extra:
            raise NetworkError(f"subsets mention unknown elements {sorted(extra)}")


def element_cell_id(u: str) -> str:
    return f"u:{u}"


def subset_cell_id(idx: int) -> str:
    return f"C:{idx}"


def build_reduction_network(sc: SetCoverInstance):
    """Hardness-reduction gadget: source -> subset cells -> element cells -> sink.

    Subset cells get Q = 1, element cells Q = k + 1, every cell N = k + 1 and
    delta = 1; the source injects k + 1 vehicles in the first interval.  With
    an unattacked (or uncoverable) instance all vehicles traverse the three
    hops without waiting, so the optimal total travel time is 3 (k + 1).

    Returns (network, params) where params carries budget |U|, a constant
    unit detection delay, zero mitigation time, and the 3 (k + 1) gain
    threshold.
    """
    from .game import DetectorCharacteristic, GameParams  # cycle-free at runtime

    sc.check()
    k = sc.k
    cells = [
        Cell("r", CellKind.SOURCE, Q=k + 1.0, N=math.inf, delta=1.0,
             demand=(k + 1.0,)),
        Cell("s", CellKind.SINK, Q=math.inf, N=math.inf, delta=1.0),
    ]
    edges: list[tuple[str, str]] = []
    membership: dict[str, list[str]] = {u: [] for u in sc.universe}
    for idx, subset in enumerate(sc.subsets):
        cid = subset_cell_id(idx)
        kind = CellKind.DIVERGING if len(subset) >= 2 else CellKind.ORDINARY
        cells.append(Cell(cid, kind, Q=1.0, N=k + 1.0, delta=1.0))
        edges.append(("r", cid))
        for u in sorted(subset):
            edges.append((cid, element_cell_id(u)))
            membership[u].append(cid)
    signalized = []
    for u in sc.universe:
        uid = element_cell_id(u)
        # Elements contained in a single subset have a forced inflow and
        # degrade to ordinary cells; only true merges are signalized.
        if len(membership[u]) >= 2:
            cells.append(Cell(uid, CellKind.MERGING, Q=k + 1.0, N=k + 1.0, delta=1.0))
            signalized.append(uid)
        else:
            cells.append(Cell(uid, CellKind.ORDINARY, Q=k + 1.0, N=k + 1.0, delta=1.0))
        edges.append((uid, "s"))

    net = Network.make(cells, edges, signalized)
    constant_delay = DetectorCharacteristic(
        fp_rates=(0.0,), magnitudes=(0.0, 1.0), delays=((1.0, 1.0),), cap=1.0
    )
    params = GameParams(
        budget=len(sc.universe),
        alarm_cost=0.0,
        delta_m=0.0,
        detectors=net.signalized,
        characteristic=constant_delay,
        threshold_gain=3.0 * (k + 1),
    )
    return net, params


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _num_to_json(x: float):
    return "inf" if math.isinf(x) else x


def _num_from_json(x) -> float:
    return math.inf if x == "inf" else float(x)


def network_to_json(net: Network) -> str:
    doc = {
        "cells": [
            {
                "id": c.id,
                "kind": c.kind.value,
                "Q": _num_to_json(c.Q),
                "N": _num_to_json(c.N),
                "delta": c.delta,
                "demand": list(c.demand),
            }
            for c in sorted(net.cells, key=lambda c: c.id)
        ],
        "edges": [list(e) for e in sorted(net.edges)],
        "signalized": sorted(net.signalized),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def network_from_json(text: str) -> Network:
    try:
        doc = json.loads(text)
        cells = [
            Cell(
                id=str(c["id"]),
                kind=CellKind(c["kind"]),
                Q=_num_from_json(c.get("Q", "inf")),
                N=_num_from_json(c.get("N", "inf")),
                delta=float(c.get("delta", 1.0)),
                demand=tuple(float(d) for d in c.get("demand", [])),
            )
            for c in doc["cells"]
        ]
        return Network.make(cells, doc["edges"], doc.get("signalized", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed network document: {exc}") from exc


def proportions_to_json(props: Proportions) -> str:
    nested: dict[str, dict[str, float]] = {}
    for (k, m), p in props.values:
        nested.setdefault(m, {})[k] = p
    return json.dumps(nested, indent=2, sort_keys=True) + "\n"


def proportions_from_json(text: str) -> Proportions:
    try:
        return Proportions.from_dict(json.loads(text))
    except (AttributeError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed proportions document: {exc}") from exc
