"""Total-travel-time linear program over the cell transmission model.

The LP minimizes the summed occupancy of non-sink cells over a finite
horizon, subject to the CTM state-evolution and flow-cap constraints, with
the additional per-approach caps p_ki * Q_i and p_ki * delta_i * (N_i - x_i)
at signalized merges.  The network must drain (x = 0 everywhere but sinks at
the final interval), so the optimal value equals the total travel time in
vehicle-intervals.

The constraint matrix is assembled once per (network, horizon) and reused
across proportion assignments: only the signalized rows and bounds depend on
the proportions, which keeps repeated solves (attack search, annealing)
cheap.  Solving defaults to scipy's HiGHS; a self-contained dense simplex
("bland") is available as an independent backend for small instances.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import simplex
from .errors import HorizonExceeded, Infeasible, NetworkError, NumericalFailure
from .network import CellKind, Network, Proportions, validate_network

try:  # vendored HiGHS bindings; enables warm-started repeated solves
    from scipy.optimize._highspy import _core as _highs_core
except ImportError:  # pragma: no cover - older scipy
    _highs_core = None

FEASIBILITY_TOL = 1e-6
OPTIMALITY_TOL = 1e-8

DEFAULT_SOLVER = "highs"


@dataclass(frozen=True)
class TrafficState:
    """LP witness: occupancies x[cell, t] (t = 0..horizon, sinks excluded)
    and flows y[edge, t] (t = 0..horizon-1)."""

    cell_ids: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    horizon: int
    x: np.ndarray
    y: np.ndarray

    def occupancy(self, cell_id: str, t: int) -> float:
        return float(self.x[self.cell_ids.index(cell_id), t])

    def flow(self, edge: tuple[str, str], t: int) -> float:
        return float(self.y[self.edges.index(edge), t])


def drainable(net: Network, props: Proportions | None) -> bool:
    """Cheap necessary-and-sufficient drain test for acyclic networks: with
    zero-proportion approaches removed, every source with demand must still
    reach a sink.  (With cycles this is only necessary; the LP doubling
    remains the authority there.)"""
    closed = set()
    if props is not None:
        closed = {(k, m) for (k, m), p in props.values if p == 0.0}
    passable = {
        c.id for c in net.cells
        if c.Q > 0 and (c.N > 0 or c.kind is CellKind.SINK)
    }
    succ: dict[str, list[str]] = {c.id: [] for c in net.cells}
    for a, b in net.edges:
        if (a, b) not in closed and a in passable and b in passable:
            succ[a].append(b)
    sink_ids = {c.id for c in net.sinks}
    for src in net.sources:
        if sum(src.demand) <= 0:
            continue
        frontier, seen = [src.id], {src.id}
        reached = False
        while frontier:
            cur = frontier.pop()
            if cur in sink_ids:
                reached = True
                break
            for nxt in succ[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if not reached:
            return False
    return True


def hop_horizon(net: Network) -> int:
    """Base horizon H0: longest source-to-sink hop distance plus total demand."""
    sink_ids = {c.id for c in net.sinks}
    longest = 0
    for src in net.sources:
        dist = {src.id: 0}
        queue = deque([src.id])
        while queue:
            cur = queue.popleft()
            for nxt in net.successors[cur]:
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        reached = [d for cid, d in dist.items() if cid in sink_ids]
        if reached:
            longest = max(longest, max(reached))
    demand = int(math.ceil(net.total_demand()))
    return max(1, longest + demand)


class LpSkeleton:
    """Sparse constraint structure for one (network, horizon) pair.

    Everything independent of the inflow proportions is prebuilt; solve()
    patches in the signalized rows and variable bounds for a given
    assignment and enforcement set.
    """

    def __init__(self, net: Network, horizon: int):
        report = validate_network(net)
        if not report.ok:
            raise NetworkError("; ".join(report.problems))
        if horizon < 1:
            raise NetworkError("horizon must be >= 1")
        self.net = net
        self.horizon = h = horizon

        self.cell_ids = tuple(c.id for c in net.cells if c.kind is not CellKind.SINK)
        self.cell_index = {cid: i for i, cid in enumerate(self.cell_ids)}
        self.edges = net.edges
        self.edge_index = {e: i for i, e in enumerate(self.edges)}
        nx = len(self.cell_ids) * h
        self.n_x = nx
        self.n_vars = nx + len(self.edges) * h

        self.c = np.zeros(self.n_vars)
        self.c[:nx] = 1.0

        by_id = net.by_id
        self.lb = np.zeros(self.n_vars)
        self.ub = np.full(self.n_vars, np.inf)
        for cid, ci in self.cell_index.items():
            cell = by_id[cid]
            if math.isfinite(cell.N):
                self.ub[ci * h : (ci + 1) * h] = cell.N
            self.ub[ci * h + h - 1] = 0.0  # drained at the final interval
        self.base_y_ub = np.full(len(self.edges) * h, np.inf)
        for (a, b), ei in self.edge_index.items():
            cap = min(by_id[a].Q, by_id[b].Q)
            if math.isfinite(cap):
                self.base_y_ub[ei * h : (ei + 1) * h] = cap
        self._apply_time_windows()

        self._build_equalities()
        self._build_static_inequalities()
        self._build_signal_templates()

    def _apply_time_windows(self):
        """Fix provably-zero variables: a vehicle advances at most one hop
        per interval, so occupancy at hop distance d from any source is zero
        before t = 1 + d, and (to drain by the final interval) zero once
        fewer than d' intervals remain to the nearest sink."""
        net, h = self.net, self.horizon

        def bfs(starts, neighbors):
            dist = {s: 0 for s in starts}
            queue = deque(starts)
            while queue:
                cur = queue.popleft()
                for nxt in neighbors[cur]:
                    if nxt not in dist:
                        dist[nxt] = dist[cur] + 1
                        queue.append(nxt)
            return dist

        from_source = bfs([c.id for c in net.sources], net.successors)
        to_sink = bfs([c.id for c in net.sinks], net.predecessors)
        for cid, ci in self.cell_index.items():
            base = ci * h
            d_src = from_source.get(cid)
            if d_src is None:
                self.ub[base : base + h] = 0.0  # unreachable cell stays empty
                continue
            first = 1 + d_src
            last = h - to_sink[cid]
            if first > 1:
                self.ub[base : base + min(first - 1, h)] = 0.0
            if last < h:
                self.ub[base + max(last, 0) : base + h] = 0.0
        for (a, b), ei in self.edge_index.items():
            base = ei * h
            d_src = from_source.get(a)
            if d_src is None:
                self.base_y_ub[base : base + h] = 0.0
                continue
            first = 1 + d_src  # t index of the first possible flow
            if first > 0:
                self.base_y_ub[base : base + min(first, h)] = 0.0
            if net.by_id[b].kind is not CellKind.SINK:
                last = h - 1 - to_sink[b]  # latest t keeping the drain reachable
                if last < h - 1:
                    self.base_y_ub[base + max(last + 1, 0) : base + h] = 0.0

    # -- variable columns ---------------------------------------------------

    def x_col(self, ci: int, t: int) -> int:
        return ci * self.horizon + (t - 1)

    def y_col(self, ei: int, t: int) -> int:
        return self.n_x + ei * self.horizon + t

    # -- constraint assembly ------------------------------------------------

    def _build_equalities(self):
        h = self.horizon
        net = self.net
        rows, cols, data, rhs = [], [], [], []
        r = 0
        def put(row, col, coef):
            rows.append(row)
            cols.append(col)
            data.append(coef)

        for cid, ci in self.cell_index.items():
            cell = net.by_id[cid]
            out_eis = [self.edge_index[(cid, j)] for j in net.successors[cid]]
            in_eis = [self.edge_index[(k, cid)] for k in net.predecessors[cid]]
            for t in range(h):
                # x^{t+1} - x^t + sum(out y^t) - sum(in y^t) = d^t
                put(r, self.x_col(ci, t + 1), 1.0)
                if t >= 1:
                    put(r, self.x_col(ci, t), -1.0)
                for ei in out_eis:
                    put(r, self.y_col(ei, t), 1.0)
                for ei in in_eis:
                    put(r, self.y_col(ei, t), -1.0)
                rhs.append(cell.demand_at(t))
                r += 1
        self.a_eq = sparse.csr_matrix(
            (data, (rows, cols)), shape=(r, self.n_vars)
        )
        self.b_eq = np.asarray(rhs)

    def _build_static_inequalities(self):
        h = self.horizon
        net = self.net
        rows, cols, data, rhs = [], [], [], []
        r = 0

        def add(entries, bound):
            nonlocal r
            for col, coef in entries:
                rows.append(r)
                cols.append(col)
                data.append(coef)
            rhs.append(bound)
            r += 1

        for cid, ci in self.cell_index.items():
            cell = net.by_id[cid]
            out_eis = [self.edge_index[(cid, j)] for j in net.successors[cid]]
            # Sender side: total outflow limited by occupancy, and by Q when
            # several successors share it (single-successor Q is a bound).
            for t in range(h):
                entries = [(self.y_col(ei, t), 1.0) for ei in out_eis]
                if t >= 1:
                    entries.append((self.x_col(ci, t), -1.0))
                add(entries, 0.0)
            if len(out_eis) >= 2 and math.isfinite(cell.Q):
                for t in range(h):
                    add([(self.y_col(ei, t), 1.0) for ei in out_eis], cell.Q)

        for cid in (c.id for c in net.cells):
            cell = net.by_id[cid]
            preds = net.predecessors[cid]
            if not preds or cell.kind is CellKind.SINK:
                continue
            ci = self.cell_index[cid]
            in_eis = [self.edge_index[(k, cid)] for k in preds]
            if len(in_eis) == 1:
                if math.isfinite(cell.N):
                    ei = in_eis[0]
                    for t in range(h):
                        entries = [(self.y_col(ei, t), 1.0)]
                        if t >= 1:
                            entries.append((self.x_col(ci, t), cell.delta))
                        add(entries, cell.delta * cell.N)
            else:
                if math.isfinite(cell.Q):
                    for t in range(h):
                        add([(self.y_col(ei, t), 1.0) for ei in in_eis], cell.Q)
                if math.isfinite(cell.N):
                    for t in range(h):
                        entries = [(self.y_col(ei, t), 1.0) for ei in in_eis]
                        if t >= 1:
                            entries.append((self.x_col(ci, t), cell.delta))
                        add(entries, cell.delta * cell.N)

        self.a_ub_static = sparse.csr_matrix(
            (data, (rows, cols)), shape=(r, self.n_vars)
        )
        self.b_ub_static = np.asarray(rhs)

    def _build_signal_templates(self):
        """Per signalized approach (k, i): index arrays for the H rows
        y_ki^t + p*delta_i*x_i^t <= p*delta_i*N_i, filled with p at solve time."""
        h = self.horizon
        net = self.net
        self.signal_edges = []  # (merge, pred, ei, merge_ci, delta, N, Q)
        for m in net.signalized:
            cell = net.by_id[m]
            for k in net.predecessors[m]:
                self.signal_edges.append(
                    (m, k, self.edge_index[(k, m)], self.cell_index[m],
                     cell.delta, cell.N, cell.Q)
                )

    # -- solving ------------------------------------------------------------

    def _active_merges(self, props, enforce) -> set:
        if props is None:
            return set()
        return set(props.merges if enforce is None else enforce)

    def _dynamic_parts(self, props, enforce):
        """Per-assignment pieces: y upper bounds and the signalized rows."""
        h = self.horizon
        y_ub = self.base_y_ub.copy()
        rows, cols, data, rhs = [], [], [], []
        r = 0
        active = self._active_merges(props, enforce)
        if active:
            pmap = props.as_dict
            for m, k, ei, ci, delta, cap_n, cap_q in self.signal_edges:
                if m not in active:
                    continue
                p = pmap[(k, m)]
                sl = slice(ei * h, (ei + 1) * h)
                if p == 0.0:
                    y_ub[sl] = 0.0  # closed approach, even with unbounded caps
                    continue
                if math.isfinite(cap_q):
                    y_ub[sl] = np.minimum(y_ub[sl], p * cap_q)
                if math.isfinite(cap_n):
                    for t in range(h):
                        rows.append(r)
                        cols.append(self.y_col(ei, t))
                        data.append(1.0)
                        if t >= 1:
                            rows.append(r)
                            cols.append(self.x_col(ci, t))
                            data.append(p * delta)
                        rhs.append(p * delta * cap_n)
                        r += 1
        if r:
            dyn = sparse.csr_matrix((data, (rows, cols)), shape=(r, self.n_vars))
            a_ub = sparse.vstack([self.a_ub_static, dyn], format="csr")
            b_ub = np.concatenate([self.b_ub_static, np.asarray(rhs)])
        else:
            a_ub, b_ub = self.a_ub_static, self.b_ub_static
        return y_ub, a_ub, b_ub

    def solve(self, props: Proportions | None, enforce=None, solver=DEFAULT_SOLVER):
        """Optimize with proportions enforced on ``enforce`` (default: every
        merge covered by ``props``).  Returns (value, TrafficState).

        Raises Infeasible when the network cannot drain at this horizon.
        The "highs" backend reuses one incremental model per skeleton (fast,
        value-deterministic); "highs-cold" forces a fresh scipy solve and
        "bland" the dense simplex, both useful as cross-checks.
        """
        if solver == "highs" and _highs_core is not None:
            # Separate incremental models for full-enforcement and partial
            # (mitigation) solves: within each channel consecutive calls
            # differ in a few signals, so the warm basis stays useful.
            channel = "full" if enforce is None else "partial"
            value, solution = self._warm_model(channel).solve(props, enforce)
            return max(value, 0.0), self._unpack(solution)

        h = self.horizon
        y_ub, a_ub, b_ub = self._dynamic_parts(props, enforce)
        ub = np.concatenate([self.ub[: self.n_x], y_ub])
        if solver in ("highs", "highs-cold"):
            res = linprog(
                self.c, A_ub=a_ub, b_ub=b_ub, A_eq=self.a_eq, b_eq=self.b_eq,
                bounds=np.column_stack([self.lb, ub]), method="highs",
            )
            if res.status == 2:
                raise Infeasible(f"horizon {h} cannot drain the network")
            if res.status != 0:
                raise NumericalFailure(f"HiGHS status {res.status}: {res.message}")
            solution, value = res.x, float(res.fun)
        elif solver == "bland":
            status, value, solution = simplex.solve_dense(
                self.c, a_ub.toarray(), b_ub, self.a_eq.toarray(), self.b_eq, ub=ub
            )
            if status == simplex.INFEASIBLE:
                raise Infeasible(f"horizon {h} cannot drain the network")
            if status != simplex.OPTIMAL:
                raise NumericalFailure("dense simplex failed to converge")
        else:
            raise ValueError(f"unknown solver {solver!r}")

        return max(value, 0.0), self._unpack(solution)

    def _warm_model(self, channel: str) -> "_WarmHighsModel":
        pool = getattr(self, "_warm", None)
        if pool is None:
            pool = {}
            self._warm = pool
        model = pool.get(channel)
        if model is None:
            model = _WarmHighsModel(self)
            pool[channel] = model
        return model

    def _unpack(self, solution) -> TrafficState:
        h = self.horizon
        n_cells = len(self.cell_ids)
        x = np.zeros((n_cells, h + 1))
        x[:, 1:] = np.asarray(solution[: self.n_x]).reshape(n_cells, h)
        y = np.asarray(solution[self.n_x :]).reshape(len(self.edges), h)
        return TrafficState(self.cell_ids, self.edges, h, x, y)


class _WarmHighsModel:
    """One persistent HiGHS model per skeleton.

    Every signalized approach owns a few row slots guarded by one switch
    column each: rows read y + p*delta*x_i - u <= p*delta*N_i, so fixing the
    switch u at zero enforces the constraint and freeing it (ub = inf) makes
    the whole slot vacuous.  The first time a proportion value p is enforced
    on an approach, a slot is banked for it (coefficients and bounds written
    once); afterwards switching attacks is a single batched column-bounds
    change, the basis stays valid, and successive solves during a search
    cost a handful of warm dual-simplex iterations.
    """

    SLOTS = 7  # distinct proportion values banked per approach

    def __init__(self, skel: LpSkeleton):
        hc = _highs_core
        self.skel = skel
        h = skel.horizon
        inf = hc.kHighsInf
        self.row_base = skel.a_eq.shape[0] + skel.a_ub_static.shape[0]
        n_edges_sig = len(skel.signal_edges)
        self.switch_base = skel.n_vars  # switch columns live past the LP vars
        n_switch = n_edges_sig * self.SLOTS
        rows, cols, data = [], [], []
        r = self.row_base
        self._edge_row: dict[tuple[str, str], int] = {}
        self._edge_switch: dict[tuple[str, str], int] = {}
        for j, (m, k, ei, ci, delta, _n, _q) in enumerate(skel.signal_edges):
            self._edge_row[(k, m)] = r
            self._edge_switch[(k, m)] = self.switch_base + j * self.SLOTS
            for slot in range(self.SLOTS):
                u_col = self.switch_base + j * self.SLOTS + slot
                for t in range(h):
                    rows.append(r)
                    cols.append(skel.y_col(ei, t))
                    data.append(1.0)
                    if t >= 1:
                        rows.append(r)
                        cols.append(skel.x_col(ci, t))
                        data.append(delta)  # placeholder until the slot is banked
                    rows.append(r)
                    cols.append(u_col)
                    data.append(-1.0)
                    r += 1
        n_sig = r - self.row_base
        n_cols = skel.n_vars + n_switch
        if n_sig:
            dyn = sparse.csr_matrix((data, (rows, cols)), shape=(r, n_cols))
            dyn = dyn[self.row_base :]
            static = sparse.vstack([skel.a_eq, skel.a_ub_static], format="csr")
            static.resize((static.shape[0], n_cols))
            matrix = sparse.vstack([static, dyn], format="csc")
        else:
            matrix = sparse.vstack([skel.a_eq, skel.a_ub_static], format="csc")
        n_st = skel.a_ub_static.shape[0]
        model = hc.HighsLp()
        model.num_col_ = n_cols
        model.num_row_ = matrix.shape[0]
        model.col_cost_ = np.concatenate([skel.c, np.zeros(n_switch)])
        model.col_lower_ = np.concatenate([skel.lb, np.zeros(n_switch)])
        model.col_upper_ = np.concatenate(
            [skel.ub[: skel.n_x], skel.base_y_ub, np.full(n_switch, inf)]
        )
        model.row_lower_ = np.concatenate(
            [skel.b_eq, np.full(n_st, -inf), np.full(n_sig, -inf)]
        )
        model.row_upper_ = np.concatenate(
            [skel.b_eq, skel.b_ub_static, np.full(n_sig, inf)]
        )
        model.a_matrix_.format_ = hc.MatrixFormat.kColwise
        model.a_matrix_.start_ = matrix.indptr.astype(np.int32)
        model.a_matrix_.index_ = matrix.indices.astype(np.int32)
        model.a_matrix_.value_ = matrix.data
        model.sense_ = hc.ObjSense.kMinimize
        self.highs = hc._Highs()
        self.highs.setOptionValue("output_flag", False)
        self.highs.setOptionValue("simplex_dual_edge_weight_strategy", 1)
        status = self.highs.passModel(model)
        if status not in (hc.HighsStatus.kOk, hc.HighsStatus.kWarning):
            raise NumericalFailure(f"HiGHS rejected the model: {status}")
        # per approach: banked p -> slot, the active slot, and bound state
        self._bank = {key: {} for key in self._edge_row}
        self._state = {key: (None, None) for key in self._edge_row}

    def _bank_slot(self, key, p, ci, delta, cap_n):
        """Assign a row slot for proportion value p: write the x coefficient
        and the right-hand side once; activation is then bounds-only."""
        hc = _highs_core
        slots = self._bank[key]
        if len(slots) >= self.SLOTS:
            evicted = next(iter(slots))  # rare: recycle the oldest value
            slots[p] = slots.pop(evicted)
        else:
            slots[p] = len(slots)
        slot = slots[p]
        h = self.skel.horizon
        row0 = self._edge_row[key] + slot * h
        bound = p * delta * cap_n
        for t in range(h):
            if t >= 1:
                self.highs.changeCoeff(row0 + t, self.skel.x_col(ci, t), p * delta)
            self.highs.changeRowBounds(row0 + t, -hc.kHighsInf, bound)
        return slot

    def _apply(self, props, enforce):
        skel = self.skel
        h = skel.horizon
        active = skel._active_merges(props, enforce)
        pmap = props.as_dict if props is not None else {}
        idx_parts, lo_parts, up_parts = [], [], []
        for m, k, ei, ci, delta, cap_n, cap_q in skel.signal_edges:
            key = (k, m)
            p = pmap[key] if m in active else None
            use_row = (p is not None and p > 0.0 and math.isfinite(cap_n))
            if p is None:
                ub_key = None
            elif p == 0.0 or math.isfinite(cap_q):
                ub_key = p
            else:
                ub_key = None
            want = (p if use_row else None, ub_key)
            prev = self._state[key]
            if prev == want:
                continue
            if use_row and p not in self._bank[key]:
                self._bank_slot(key, p, ci, delta, cap_n)
            new_slot = self._bank[key].get(p) if use_row else None
            sw0 = self._edge_switch[key]
            for slot in range(self.SLOTS):
                on = slot == new_slot
                idx_parts.append(sw0 + slot)
                lo_parts.append(0.0)
                up_parts.append(0.0 if on else np.inf)
            if prev[1] != ub_key:
                ub = skel.base_y_ub[ei * h : (ei + 1) * h].copy()
                if ub_key == 0.0:
                    ub[:] = 0.0
                elif ub_key is not None and math.isfinite(cap_q):
                    ub = np.minimum(ub, ub_key * cap_q)
                cols = np.arange(ei * h, (ei + 1) * h) + skel.n_x
                idx_parts.extend(cols.tolist())
                lo_parts.extend([0.0] * h)
                up_parts.extend(ub.tolist())
            self._state[key] = want
        if idx_parts:
            idx = np.asarray(idx_parts, dtype=np.int32)
            self.highs.changeColsBounds(
                len(idx), idx, np.asarray(lo_parts), np.asarray(up_parts)
            )

    def solve(self, props, enforce):
        hc = _highs_core
        self._apply(props, enforce)
        self.highs.run()
        status = self.highs.getModelStatus()
        if status in (hc.HighsModelStatus.kInfeasible,
                      hc.HighsModelStatus.kUnboundedOrInfeasible):
            raise Infeasible(f"horizon {self.skel.horizon} cannot drain the network")
        if status != hc.HighsModelStatus.kOptimal:
            raise NumericalFailure(f"HiGHS model status {status}")
        value = float(self.highs.getInfo().objective_function_value)
        solution = np.asarray(self.highs.getSolution().col_value)[: self.skel.n_vars]
        return value, solution


_skeleton_cache: dict[tuple[int, int], LpSkeleton] = {}


def get_skeleton(net: Network, horizon: int) -> LpSkeleton:
    key = (id(net), horizon)
    skel = _skeleton_cache.get(key)
    if skel is None or skel.net is not net:
        skel = LpSkeleton(net, horizon)
        _skeleton_cache[key] = skel
        if len(_skeleton_cache) > 64:
            _skeleton_cache.pop(next(iter(_skeleton_cache)))
    return skel


def _horizon_candidates(net: Network, h_max: int | None):
    h0 = hop_horizon(net)
    if h_max is None:
        h_max = 8 * h0
    h = h0
    while h <= h_max:
        yield h
        h *= 2
    return


def default_h_max(net: Network) -> int:
    return 8 * hop_horizon(net)


def choose_horizon(net: Network, props: Proportions | None = None,
                   h_max: int | None = None, solver=DEFAULT_SOLVER) -> int:
    """Smallest horizon in the doubling sequence {H0, 2 H0, ...} at which the
    drained-network LP is feasible.  Raises HorizonExceeded past h_max."""
    for h in _horizon_candidates(net, h_max):
        if max(len(c.demand) for c in net.cells) > h:
            continue  # demand past the horizon cannot enter the model
        try:
            get_skeleton(net, h).solve(props, solver=solver)
            return h
        except Infeasible:
            continue
    raise HorizonExceeded(h_max if h_max is not None else default_h_max(net))


def total_travel_time(net: Network, props: Proportions | None,
                      horizon: int | None = None, h_max: int | None = None,
                      solver=DEFAULT_SOLVER):
    """Optimal total travel time and a witness state for fixed proportions.

    With ``horizon=None`` the doubling search is performed internally; an
    explicit infeasible horizon raises Infeasible.
    """
    if props is not None:
        props.check_normalized(net)
    if horizon is not None:
        return get_skeleton(net, horizon).solve(props, solver=solver)
    last_exc = None
    for h in _horizon_candidates(net, h_max):
        if max(len(c.demand) for c in net.cells) > h:
            continue
        try:
            return get_skeleton(net, h).solve(props, solver=solver)
        except Infeasible as exc:
            last_exc = exc
    raise HorizonExceeded(h_max if h_max is not None else default_h_max(net)) from last_exc


def system_optimal_control(net: Network, fixed: Proportions | None = None,
                           horizon: int | None = None, h_max: int | None = None,
                           solver=DEFAULT_SOLVER, return_state: bool = False):
    """Optimize traffic with proportions enforced only on the merges covered
    by ``fixed``; extract flow-weighted proportions for the free merges.

    Returns (full proportions, relaxed LP value) -- plus the witness state
    when ``return_state`` is set.
    """
    fixed = fixed if fixed is not None else Proportions(())
    fixed.check_normalized(net)
    # Proportion extraction reads the witness, and alternate optima are
    # common; a fresh (cold) solve keeps the choice independent of whatever
    # was solved earlier on the shared incremental model.
    if solver == "highs":
        solver = "highs-cold"
    if horizon is not None:
        value, state = get_skeleton(net, horizon).solve(fixed, solver=solver)
    else:
        value = state = None
        for h in _horizon_candidates(net, h_max):
            if max(len(c.demand) for c in net.cells) > h:
                continue
            try:
                value, state = get_skeleton(net, h).solve(fixed, solver=solver)
                break
            except Infeasible:
                continue
        if state is None:
            raise HorizonExceeded(h_max if h_max is not None else default_h_max(net))

    flat = dict(fixed.as_dict)
    fixed_merges = set(fixed.merges)
    edge_index = {e: i for i, e in enumerate(state.edges)}
    for m in net.signalized:
        if m in fixed_merges:
            continue
        preds = net.predecessors[m]
        totals = {k: float(state.y[edge_index[(k, m)]].sum()) for k in preds}
        grand = sum(totals.values())
        if grand < 1e-12:
            share = {k: 1.0 / len(preds) for k in preds}
        else:
            share = {k: totals[k] / grand for k in preds}
        norm = sum(share.values())
        for k in preds:
            flat[(k, m)] = share[k] / norm
    props = Proportions.from_dict(flat)
    if return_state:
        return props, value, state
    return props, value


def verify_state(net: Network, props: Proportions | None, state: TrafficState) -> float:
    """Maximum violation of any CTM constraint by a witness state."""
    h = state.horizon
    ci = {cid: i for i, cid in enumerate(state.cell_ids)}
    ei = {e: i for i, e in enumerate(state.edges)}
    pmap = props.as_dict if props is not None else {}
    enforced = set(props.merges) if props is not None else set()
    worst = 0.0

    def check(amount):
        nonlocal worst
        worst = max(worst, amount)

    check(-state.x.min() if state.x.size else 0.0)
    check(-state.y.min() if state.y.size else 0.0)
    for cell in net.cells:
        if cell.kind is CellKind.SINK:
            continue
        i = ci[cell.id]
        out = [ei[(cell.id, j)] for j in net.successors[cell.id]]
        inn = [ei[(k, cell.id)] for k in net.predecessors[cell.id]]
        check(abs(state.x[i, h]))
        for t in range(h):
            inflow = sum(state.y[e, t] for e in inn) + cell.demand_at(t)
            outflow = sum(state.y[e, t] for e in out)
            check(abs(state.x[i, t + 1] - state.x[i, t] - inflow + outflow))
            check(outflow - state.x[i, t])
            if math.isfinite(cell.Q):
                check(outflow - cell.Q)
            if math.isfinite(cell.N):
                check(state.x[i, t] - cell.N)
        if inn:
            for t in range(h):
                total_in = sum(state.y[e, t] for e in inn)
                if math.isfinite(cell.Q):
                    check(total_in - cell.Q)
                if math.isfinite(cell.N):
                    check(total_in - cell.delta * (cell.N - state.x[i, t]))
        if cell.id in enforced:
            for k in net.predecessors[cell.id]:
                p = pmap[(k, cell.id)]
                for t in range(h):
                    flow = state.y[ei[(k, cell.id)], t]
                    if math.isfinite(cell.Q):
                        check(flow - p * cell.Q)
                    if math.isfinite(cell.N):
                        check(flow - p * cell.delta * (cell.N - state.x[i, t]))
    return worst
