"""Attack-stage solvers: the greedy heuristic and exhaustive baselines.

The greedy search runs B rounds; each round scans every signalized merge i
and every predecessor k, overlays the extreme assignment (k gets the whole
inflow proportion) on the incumbent tampering, and keeps the candidate when
its gain is >= the running best -- so later candidates win ties, and a round
may revise an already-compromised signal instead of adding a new one.

The exhaustive baseline enumerates every compromised set of size <= B with
either extreme configurations or a simplex-lattice quantization per signal.
Both searches are deterministic: candidates are visited in lexicographic
(cell id, predecessor id) order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations, product
from math import comb

from .errors import EvaluationCapExceeded
from .game import Attack, DetectorConfig, GainOracle, GameParams
from .network import Network, Proportions, extreme_proportions

DEFAULT_EVAL_CAP = 2_000_000


@dataclass(frozen=True)
class AttackSearchResult:
    attack: Attack
    gain: float
    evaluations: int
    wall_time: float
    # Best attack over compromised sets of size <= b, for every b <= budget.
    per_budget: tuple[tuple[int, Attack, float], ...] = ()

    def best_for_budget(self, b: int):
        for size, attack, gain in self.per_budget:
            if size == b:
                return attack, gain
        raise KeyError(b)


def _make_oracle(net, default, params, cfg, oracle, h_max, solver):
    if oracle is None:
        oracle = GainOracle(net, default, params, h_max=h_max, solver=solver)
    cfg.check(params)
    return oracle


def greedy_attack(net: Network, default: Proportions, params: GameParams,
                  cfg: DetectorConfig, oracle: GainOracle | None = None,
                  h_max: int | None = None, solver="highs") -> AttackSearchResult:
    """Budgeted greedy search over extreme tamperings (B rounds of a full
    (i, k) scan, accept-if->= against the running best)."""
    oracle = _make_oracle(net, default, params, cfg, oracle, h_max, solver)
    start = time.perf_counter()
    evals = 0

    inc_set: tuple[str, ...] = ()
    inc_props = default
    inc_gain = 0.0  # gain of the empty attack, by convention
    per_budget = [(0, Attack.empty(), 0.0)]

    for b in range(1, params.budget + 1):
        best_set, best_props, best_gain = inc_set, inc_props, inc_gain
        for i in sorted(net.signalized):
            cand_set = tuple(sorted(set(inc_set) | {i}))
            for k in net.predecessors[i]:
                cand_props = inc_props.overlay(extreme_proportions(net, i, k))
                attack = Attack(cand_set, cand_props.restrict(cand_set))
                gain = oracle.evaluate(cfg, attack)
                evals += 1
                if gain >= best_gain:
                    best_set, best_props, best_gain = cand_set, cand_props, gain
        inc_set, inc_props, inc_gain = best_set, best_props, best_gain
        per_budget.append((b, Attack(inc_set, inc_props.restrict(inc_set)), inc_gain))

    attack = Attack(inc_set, inc_props.restrict(inc_set))
    return AttackSearchResult(
        attack, inc_gain, evals, time.perf_counter() - start, tuple(per_budget)
    )


def simplex_grid(n_parts: int, levels: int):
    """Lattice points of the (n_parts-1)-simplex with the given resolution,
    in lexicographic order.  levels=2 yields exactly the extreme points."""
    steps = levels - 1
    if n_parts == 1:
        yield (1.0,)
        return
    for head in range(steps, -1, -1):
        for rest in _compositions(steps - head, n_parts - 1):
            yield (head / steps,) + tuple(r / steps for r in rest)


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _signal_configs(net, i, quantization, grid_levels):
    preds = net.predecessors[i]
    if quantization == "extreme":
        for k in preds:
            yield extreme_proportions(net, i, k)
    elif quantization == "grid":
        for point in simplex_grid(len(preds), grid_levels):
            yield Proportions.from_dict({(k, i): p for k, p in zip(preds, point)})
    else:
        raise ValueError(f"unknown quantization {quantization!r}")


def _count_configs(net, i, quantization, grid_levels) -> int:
    n = len(net.predecessors[i])
    if quantization == "extreme":
        return n
    return comb(grid_levels - 1 + n - 1, n - 1)


def exhaustive_attack(net: Network, default: Proportions, params: GameParams,
                      cfg: DetectorConfig, quantization: str = "extreme",
                      grid_levels: int = 5, eval_cap: int = DEFAULT_EVAL_CAP,
                      oracle: GainOracle | None = None, h_max: int | None = None,
                      solver="highs") -> AttackSearchResult:
    """Enumerate every compromised set of size <= B and every quantized
    configuration; ties keep the first (lexicographically smallest) attack."""
    oracle = _make_oracle(net, default, params, cfg, oracle, h_max, solver)
    signals = sorted(net.signalized)
    counts = {i: _count_configs(net, i, quantization, grid_levels) for i in signals}

    required = 1
    for size in range(1, params.budget + 1):
        for subset in combinations(signals, size):
            prod = 1
            for i in subset:
                prod *= counts[i]
            required += prod
    if required > eval_cap:
        raise EvaluationCapExceeded(required, eval_cap)

    start = time.perf_counter()
    evals = 1  # the empty attack
    _ = oracle.evaluate(cfg, Attack.empty())
    best_by_size = {0: (Attack.empty(), 0.0)}

    for size in range(1, params.budget + 1):
        best_here = None
        for subset in combinations(signals, size):
            for configs in product(
                *[_signal_configs(net, i, quantization, grid_levels) for i in subset]
            ):
                flat = {}
                for piece in configs:
                    flat.update(piece.as_dict)
                attack = Attack(subset, Proportions.from_dict(flat))
                gain = oracle.evaluate(cfg, attack)
                evals += 1
                if best_here is None or gain > best_here[1]:
                    best_here = (attack, gain)
        best_by_size[size] = best_here

    per_budget = []
    running = best_by_size[0]
    for size in range(0, params.budget + 1):
        if best_by_size[size][1] > running[1]:
            running = best_by_size[size]
        per_budget.append((size, running[0], running[1]))

    attack, gain = running
    return AttackSearchResult(
        attack, gain, evals, time.perf_counter() - start, tuple(per_budget)
    )
