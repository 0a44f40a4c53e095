"""Three-stage game payoffs: attack magnitude, detection delay, attacker
gain, defender loss, and best-response mitigation.

The attacker's gain for an attack A under detector configuration D and
best-response mitigation M is

    (T_A - T) * delay(D, A) + (T_M - T) * delta_M

where T, T_A and T_M are total-travel-time LP values (default control,
attacked control, and mitigated control with the compromised signals pinned
at the tampered proportions).  The defender's loss adds the false-alarm
investigation cost sum_i D_i * C, which does not depend on the mitigation,
so minimizing loss and minimizing gain produce the same mitigation.

GainOracle memoizes the LP values per attack: they are independent of the
detector configuration, which makes repeated sweeps over configurations
(simulated annealing) cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import HorizonExceeded, Infeasible, NetworkError
from .network import Network, Proportions

DELAY_CAP_MINUTES = 1440.0  # undetectable attacks: one day


@dataclass(frozen=True)
class DetectorCharacteristic:
    """Tabulated detector trade-off: (false-positive rate, attack magnitude)
    -> detection delay in minutes, interpolated bilinearly with clamping.

    Delay must be non-increasing along both axes, and zero-magnitude attacks
    are undetectable (delay = cap).
    """

    fp_rates: tuple[float, ...]
    magnitudes: tuple[float, ...]
    delays: tuple[tuple[float, ...], ...]  # [fp index][magnitude index]
    cap: float = DELAY_CAP_MINUTES

    def __post_init__(self):
        fp = np.asarray(self.fp_rates, dtype=float)
        mag = np.asarray(self.magnitudes, dtype=float)
        table = np.asarray(self.delays, dtype=float)
        if table.shape != (fp.size, mag.size):
            raise NetworkError("characteristic table shape does not match grids")
        if fp.size == 0 or mag.size == 0:
            raise NetworkError("characteristic grids must be non-empty")
        if np.any(np.diff(fp) <= 0) or np.any(np.diff(mag) <= 0):
            raise NetworkError("characteristic grids must be strictly increasing")
        if mag[0] != 0.0:
            raise NetworkError("magnitude grid must start at 0")
        if np.any(np.diff(table, axis=0) > 1e-9):
            raise NetworkError("delay must be non-increasing in the fp rate")
        if np.any(np.diff(table, axis=1) > 1e-9):
            raise NetworkError("delay must be non-increasing in the magnitude")
        if np.any(np.abs(table[:, 0] - self.cap) > 1e-9):
            raise NetworkError("zero-magnitude attacks must have delay = cap")
        if np.any(table < 0) or np.any(table > self.cap + 1e-9):
            raise NetworkError("delays must lie in [0, cap]")

    @property
    def d_min(self) -> float:
        return self.fp_rates[0]

    @property
    def d_max(self) -> float:
        return self.fp_rates[-1]

    def delay(self, fp_rate: float, magnitude: float) -> float:
        if not (self.d_min - 1e-12 <= fp_rate <= self.d_max + 1e-12):
            raise ValueError(
                f"fp rate {fp_rate} outside characteristic domain "
                f"[{self.d_min}, {self.d_max}]"
            )
        fp = np.asarray(self.fp_rates)
        mag = np.asarray(self.magnitudes)
        table = np.asarray(self.delays)
        x = min(max(fp_rate, fp[0]), fp[-1])
        y = min(max(magnitude, mag[0]), mag[-1])

        def bracket(grid, v):
            j = int(np.searchsorted(grid, v, side="right")) - 1
            j = min(max(j, 0), grid.size - 2) if grid.size > 1 else 0
            if grid.size == 1:
                return 0, 0, 0.0
            w = (v - grid[j]) / (grid[j + 1] - grid[j])
            return j, j + 1, w

        i0, i1, wx = bracket(fp, x)
        j0, j1, wy = bracket(mag, y)
        v = ((1 - wx) * (1 - wy) * table[i0, j0]
             + wx * (1 - wy) * table[i1, j0]
             + (1 - wx) * wy * table[i0, j1]
             + wx * wy * table[i1, j1])
        return float(min(max(v, 0.0), self.cap))


def characteristic_from_pareto(curves: dict[float, list[tuple[float, float]]],
                               cap: float = DELAY_CAP_MINUTES) -> DetectorCharacteristic:
    """Assemble a characteristic table from measured (fp, delay) curves,
    one per attack magnitude.  Curves are resampled onto the union fp grid;
    undetected operating points should already be capped by the caller."""
    magnitudes = sorted(curves)
    fp_grid = sorted({fp for curve in curves.values() for fp, _ in curve})
    if not fp_grid:
        raise NetworkError("no pareto points supplied")
    columns = {}
    for m in magnitudes:
        pts = sorted(curves[m])
        xs = [p[0] for p in pts]
        ys = [min(p[1], cap) for p in pts]
        col = np.interp(fp_grid, xs, ys)
        col = np.minimum.accumulate(col)  # enforce the trade-off monotonically
        columns[m] = col
    if magnitudes[0] != 0.0:
        magnitudes.insert(0, 0.0)
        columns[0.0] = np.full(len(fp_grid), cap)
    table = np.column_stack([columns[m] for m in magnitudes])
    for j in range(1, table.shape[1]):  # delay cannot grow with magnitude
        table[:, j] = np.minimum(table[:, j], table[:, j - 1])
    return DetectorCharacteristic(
        tuple(fp_grid), tuple(magnitudes),
        tuple(tuple(row) for row in table), cap,
    )


@dataclass(frozen=True)
class GameParams:
    budget: int
    alarm_cost: float
    delta_m: float
    detectors: tuple[str, ...]
    characteristic: DetectorCharacteristic
    threshold_gain: float | None = None

    def __post_init__(self):
        if self.budget < 0 or self.alarm_cost < 0 or self.delta_m < 0:
            raise NetworkError("budget, alarm cost and delta_M must be nonnegative")

    def check_against(self, net: Network) -> None:
        unknown = set(self.detectors) - set(net.signalized)
        if unknown:
            raise NetworkError(f"detectors at non-signalized cells: {sorted(unknown)}")


@dataclass(frozen=True)
class Attack:
    """Compromised intersections plus their tampered inflow proportions."""

    compromised: tuple[str, ...]
    tampered: Proportions

    @staticmethod
    def make(compromised, tampered: Proportions) -> "Attack":
        compromised = tuple(sorted(set(compromised)))
        return Attack(compromised, tampered.restrict(compromised))

    @staticmethod
    def empty() -> "Attack":
        return Attack((), Proportions(()))

    def check(self, net: Network, budget: int | None = None) -> None:
        if budget is not None and len(self.compromised) > budget:
            raise NetworkError(
                f"attack compromises {len(self.compromised)} > budget {budget}"
            )
        if set(self.tampered.merges) != set(self.compromised):
            raise NetworkError("tampered proportions must cover exactly the compromised set")
        self.tampered.check_normalized(net)

    def key(self):
        return tuple(
            (m, tuple(sorted((k, round(p, 12)) for k, p in row.items())))
            for m in self.compromised
            for row in [self.tampered.for_merge(m)]
        )


@dataclass(frozen=True)
class DetectorConfig:
    """False-positive rate (alarms per month) per detector-equipped merge."""

    rates: tuple[tuple[str, float], ...]

    @staticmethod
    def from_dict(mapping) -> "DetectorConfig":
        return DetectorConfig(tuple(sorted((str(k), float(v)) for k, v in mapping.items())))

    @staticmethod
    def constant(detectors, value: float) -> "DetectorConfig":
        return DetectorConfig.from_dict({d: value for d in detectors})

    @property
    def as_dict(self) -> dict[str, float]:
        return dict(self.rates)

    def check(self, params: GameParams) -> None:
        char = params.characteristic
        missing = set(params.detectors) - set(self.as_dict)
        if missing:
            raise NetworkError(f"no rate configured for detectors {sorted(missing)}")
        for i, r in self.rates:
            if not (char.d_min - 1e-12 <= r <= char.d_max + 1e-12):
                raise NetworkError(
                    f"rate {r} at {i} outside supported domain [{char.d_min}, {char.d_max}]"
                )


def attack_magnitude(net: Network, default: Proportions, attack: Attack,
                     intersection: str) -> float:
    """Total-variation distance between default and tampered proportions at
    one signalized merge; 0 when the merge is not compromised."""
    if intersection not in net.signalized:
        raise NetworkError(f"unknown signalized intersection {intersection!r}")
    if intersection not in attack.compromised:
        return 0.0
    before = default.for_merge(intersection)
    after = attack.tampered.for_merge(intersection)
    return 0.5 * sum(abs(after[k] - before[k]) for k in before)


def detection_delay(params: GameParams, cfg: DetectorConfig, net: Network,
                    default: Proportions, attack: Attack) -> float:
    """Minutes until the first detector fires: minimum over detectors of the
    characteristic delay at (configured rate, local attack magnitude)."""
    cfg.check(params)
    char = params.characteristic
    rates = cfg.as_dict
    best = char.cap
    for i in params.detectors:
        mag = attack_magnitude(net, default, attack, i)
        best = min(best, char.delay(rates[i], mag))
    return max(best, 0.0)


def attacker_gain(t_default: float, t_attack: float, t_mitigated: float,
                  delay: float, params: GameParams) -> float:
    return (t_attack - t_default) * delay + (t_mitigated - t_default) * params.delta_m


def defender_loss(gain: float, cfg: DetectorConfig, params: GameParams) -> float:
    rates = cfg.as_dict
    return gain + params.alarm_cost * sum(rates[i] for i in params.detectors)


def best_response_mitigation(net: Network, attack: Attack,
                             horizon: int | None = None,
                             h_max: int | None = None,
                             solver=lp.DEFAULT_SOLVER):
    """Reconfigure the uncompromised signals optimally given the tampering.

    Returns (full proportions with the compromised merges pinned, T_M).
    """
    attack.check(net)
    return lp.system_optimal_control(
        net, fixed=attack.tampered, horizon=horizon, h_max=h_max, solver=solver
    )


@dataclass
class _AttackRecord:
    blocked: bool
    t_attack: float | None
    t_mitigated: float | None
    magnitudes: dict[str, float]


@dataclass
class GainOracle:
    """Best-response attacker gain G(D, A) = min_M G(D, A, M), memoized.

    LP values depend only on the attack, so one oracle instance amortizes
    them across every detector configuration scored against the same
    network.  A network that cannot drain within h_max under an attack is
    scored with the capped gain delay * (total_demand * h_max - T) instead
    of infinity, keeping the search totally ordered.
    """

    net: Network
    default: Proportions
    params: GameParams
    h_max: int | None = None
    solver: str = lp.DEFAULT_SOLVER
    evaluations: int = field(default=0, init=False)
    lp_solves: int = field(default=0, init=False)

    IDLE_TAIL = 2  # intervals of end-of-horizon slack required at a tight horizon

    def __post_init__(self):
        self.params.check_against(self.net)
        self.default.check_normalized(self.net)
        if self.h_max is None:
            self.h_max = lp.default_h_max(self.net)
        self._cache: dict[tuple, _AttackRecord] = {}
        h0 = lp.hop_horizon(self.net)
        try:
            self.lp_solves += 1
            self.t_default, state = lp.get_skeleton(self.net, h0).solve(
                self.default, solver=self.solver
            )
            # Tight working horizon: the observed drain of the default
            # schedule plus slack.  Values are horizon-invariant once the
            # deadline is slack, which _solve_with_slack verifies per attack
            # (escalating to the standard doubling whenever the tail is
            # occupied).
            tight = min(self._drain_time(state) + 8, h0)
        except Infeasible:
            self.t_default, _ = lp.total_travel_time(
                self.net, self.default, h_max=self.h_max, solver=self.solver
            )
            tight = h0
        self._horizons = [tight] if tight < h0 else []
        self._horizons += [h for h in lp._horizon_candidates(self.net, self.h_max)]

    @staticmethod
    def _drain_time(state) -> int:
        occupied = np.nonzero(state.x.max(axis=0) > 1e-7)[0]
        return int(occupied.max()) + 1 if occupied.size else 1

    def _solve_with_slack(self, props, enforce):
        """(value, horizon) at the first horizon that is feasible and leaves
        an idle tail (tail slack is waived at the spec horizons >= H0)."""
        h0 = lp.hop_horizon(self.net)
        for h in self._horizons:
            if max(len(c.demand) for c in self.net.cells) > h:
                continue
            try:
                self.lp_solves += 1
                value, state = lp.get_skeleton(self.net, h).solve(
                    props, enforce=enforce, solver=self.solver
                )
            except Infeasible:
                continue
            if h >= h0 or self._drain_time(state) <= h - self.IDLE_TAIL:
                return value, h
        return None, None

    def _measure(self, attack: Attack) -> _AttackRecord:
        overlay = self.default.overlay(attack.tampered)
        value = horizon = None
        if lp.drainable(self.net, overlay):
            value, horizon = self._solve_with_slack(overlay, None)
        mags = {
            i: attack_magnitude(self.net, self.default, attack, i)
            for i in attack.compromised
        }
        if value is None:
            return _AttackRecord(True, None, None, mags)
        t_mitigated = None
        if self.params.delta_m > 0:
            # Value-only relaxed solve: signals outside the compromised set
            # fall back to the plain merging inequalities.
            self.lp_solves += 1
            t_mitigated, state = lp.get_skeleton(self.net, horizon).solve(
                attack.tampered, enforce=attack.compromised, solver=self.solver
            )
            if (horizon < lp.hop_horizon(self.net)
                    and self._drain_time(state) > horizon - self.IDLE_TAIL):
                t_mitigated, _ = self._solve_with_slack(
                    attack.tampered, attack.compromised
                )
        return _AttackRecord(False, value, t_mitigated, mags)

    def delay(self, cfg: DetectorConfig, magnitudes: dict[str, float]) -> float:
        char = self.params.characteristic
        rates = cfg.as_dict
        best = char.cap
        for i in self.params.detectors:
            best = min(best, char.delay(rates[i], magnitudes.get(i, 0.0)))
        return best

    def evaluate(self, cfg: DetectorConfig, attack: Attack) -> float:
        """G(D, A) with mitigation solved inside; the empty attack scores 0."""
        self.evaluations += 1
        if not attack.compromised:
            return 0.0
        key = attack.key()
        record = self._cache.get(key)
        if record is None:
            record = self._measure(attack)
            self._cache[key] = record
        delay = self.delay(cfg, record.magnitudes)
        if record.blocked:
            return delay * (self.net.total_demand() * self.h_max - self.t_default)
        gain = (record.t_attack - self.t_default) * delay
        if self.params.delta_m > 0:
            gain += (record.t_mitigated - self.t_default) * self.params.delta_m
        return gain
