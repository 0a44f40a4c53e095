"""Random transportation networks: a grid with random extra edges (GRE-lite).

Nodes live on a width x height lattice with all edges directed right/up,
so every route makes progress toward the sink corner.  Candidate extra
edges (diagonals and two-step skips) are each added independently with
probability p_extra.  The node graph is then expanded into CTM cells:

    road segment                  -> one ordinary cell
    node, in-degree 1, out 1      -> one ordinary cell
    node, in-degree >= 2, out 1   -> one merging cell
    node, in-degree 1, out >= 2   -> one diverging cell
    node, in >= 2 and out >= 2    -> merging cell feeding a diverging cell

The bottom-left node is fed by a source cell (demand 8, 12, 8 vehicles by
default), the top-right node drains into a sink cell, and every merging
cell is signalized.  The exact randomization of the published grid models
is not recoverable, so the extra-edge probability is a plain parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import lp
from .anneal import make_rng
from .network import Cell, CellKind, Network, Proportions


@dataclass(frozen=True)
class GreParams:
    width: int = 4
    height: int = 4
    p_extra: float = 0.1
    seed: int = 0
    cell_q: float = 6.0
    cell_n: float = 10.0
    cell_delta: float = 1.0
    source_demand: tuple[float, ...] = (8.0, 12.0, 8.0)

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        if not (0.0 <= self.p_extra <= 1.0):
            raise ValueError("p_extra must lie in [0, 1]")


def _candidate_extras(w: int, h: int):
    """Diagonal and skip edges, in a fixed order so draws are reproducible."""
    out = []
    for x in range(w):
        for y in range(h):
            if x + 1 < w and y + 1 < h:
                out.append(((x, y), (x + 1, y + 1)))
            if x + 2 < w:
                out.append(((x, y), (x + 2, y)))
            if y + 2 < h:
                out.append(((x, y), (x, y + 2)))
    return out


def generate_gre(gp: GreParams) -> Network:
    w, h = gp.width, gp.height
    node_edges = []
    for x in range(w):
        for y in range(h):
            if x + 1 < w:
                node_edges.append(((x, y), (x + 1, y)))
            if y + 1 < h:
                node_edges.append(((x, y), (x, y + 1)))
    rng = make_rng(gp.seed)
    for cand in _candidate_extras(w, h):
        if rng.uniform(0.0, 1.0) < gp.p_extra:
            node_edges.append(cand)

    source_node = (0, 0)
    sink_node = (w - 1, h - 1)
    in_deg = {(x, y): 0 for x in range(w) for y in range(h)}
    out_deg = {(x, y): 0 for x in range(w) for y in range(h)}
    for a, b in node_edges:
        out_deg[a] += 1
        in_deg[b] += 1
    in_deg[source_node] += 1   # fed by the source cell
    out_deg[sink_node] += 1    # drains into the sink cell

    def node_name(n):
        return f"n{n[0]}_{n[1]}"

    cells: list[Cell] = []
    edges: list[tuple[str, str]] = []
    entry: dict[tuple[int, int], str] = {}
    exit_: dict[tuple[int, int], str] = {}

    def road_cell(kind, name):
        cells.append(Cell(name, kind, Q=gp.cell_q, N=gp.cell_n, delta=gp.cell_delta))

    for x in range(w):
        for y in range(h):
            node = (x, y)
            name = node_name(node)
            merging = in_deg[node] >= 2
            diverging = out_deg[node] >= 2
            if merging and diverging:
                road_cell(CellKind.MERGING, name + "m")
                road_cell(CellKind.DIVERGING, name + "d")
                edges.append((name + "m", name + "d"))
                entry[node], exit_[node] = name + "m", name + "d"
            elif merging:
                road_cell(CellKind.MERGING, name)
                entry[node] = exit_[node] = name
            elif diverging:
                road_cell(CellKind.DIVERGING, name)
                entry[node] = exit_[node] = name
            else:
                road_cell(CellKind.ORDINARY, name)
                entry[node] = exit_[node] = name

    for a, b in node_edges:
        rname = f"r{a[0]}_{a[1]}__{b[0]}_{b[1]}"
        road_cell(CellKind.ORDINARY, rname)
        edges.append((exit_[a], rname))
        edges.append((rname, entry[b]))

    cells.append(Cell("src", CellKind.SOURCE, Q=math.inf, N=math.inf,
                      delta=1.0, demand=gp.source_demand))
    edges.append(("src", entry[source_node]))
    cells.append(Cell("snk", CellKind.SINK, Q=math.inf, N=math.inf, delta=1.0))
    edges.append((exit_[sink_node], "snk"))

    signalized = [c.id for c in cells if c.kind is CellKind.MERGING]
    return Network.make(cells, edges, signalized)


def default_schedule(net: Network, h_max: int | None = None,
                     solver=lp.DEFAULT_SOLVER) -> Proportions:
    """Paper-style default control: proportions extracted from the
    unconstrained system-optimal LP."""
    props, _ = lp.system_optimal_control(net, fixed=None, h_max=h_max, solver=solver)
    return props


def gre_ensemble(params: GreParams, count: int):
    """Deterministic family of networks: member j uses seed params.seed + j."""
    for j in range(count):
        yield generate_gre(
            GreParams(
                width=params.width, height=params.height,
                p_extra=params.p_extra, seed=params.seed + j,
                cell_q=params.cell_q, cell_n=params.cell_n,
                cell_delta=params.cell_delta,
                source_demand=params.source_demand,
            )
        )
