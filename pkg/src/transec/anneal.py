"""Detector-configuration stage: simulated annealing over false-positive
rate vectors, plus the uniform (single scalar) baseline.

Each iteration perturbs every rate multiplicatively within [D*(1-eps),
D*(1+eps)], scores the perturbed configuration against a best-response
attacker, and accepts worse configurations with probability
exp(-(L' - L) / T) under the exponentially cooling temperature
T = T0 * exp(-beta k).  The best configuration seen anywhere in the chain
is returned, together with a per-iteration (loss, best loss) trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import DetectorConfig, GameParams
from .network import Network, Proportions


@dataclass(frozen=True)
class AnnealParams:
    k_max: int = 2000
    t0: float | None = None  # default: magnitude of the initial loss
    beta: float | None = None  # default: 5 / k_max
    epsilon: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.t0 is not None and self.t0 <= 0:
            raise ValueError("initial temperature must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("cooling parameter must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based and stable across platforms, which keeps
    # annealing traces and generated ensembles bit-reproducible.
    return np.random.Generator(np.random.Philox(seed))


def accept_probability(loss_old: float, loss_new: float, temperature: float) -> float:
    if loss_new < loss_old:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(-(loss_new - loss_old) / temperature)


def perturb(cfg: DetectorConfig, epsilon: float, rng: np.random.Generator,
            domain: tuple[float, float]) -> DetectorConfig:
    """Independent uniform draw from [D*(1-eps), D*(1+eps)] per detector,
    clamped to the characteristic curve's supported rate domain."""
    lo, hi = domain
    out = {}
    for name, rate in cfg.rates:
        draw = rng.uniform(rate * (1.0 - epsilon), rate * (1.0 + epsilon))
        out[name] = min(max(draw, lo), hi)
    return DetectorConfig.from_dict(out)


def _default_loss_fn(net, default, params, h_max, solver, oracle):
    from .attacks import greedy_attack
    from .game import GainOracle, defender_loss

    if oracle is None:
        oracle = GainOracle(net, default, params, h_max=h_max, solver=solver)

    def loss(cfg: DetectorConfig) -> float:
        result = greedy_attack(net, default, params, cfg, oracle=oracle)
        return defender_loss(result.gain, cfg, params)

    return loss


def _initial_config(params: GameParams) -> DetectorConfig:
    char = params.characteristic
    start = min(max(1.0, char.d_min), char.d_max)
    return DetectorConfig.constant(params.detectors, start)


def _anneal(loss_fn, initial: DetectorConfig, ap: AnnealParams, proposal):
    rng = make_rng(ap.seed)
    current = initial
    loss = loss_fn(current)
    best, best_loss = current, loss
    t0 = ap.t0 if ap.t0 is not None else max(abs(loss), 1.0)
    beta = ap.beta if ap.beta is not None else (5.0 / ap.k_max if ap.k_max else 1.0)
    trace = [(0, loss, best_loss)]
    for k in range(1, ap.k_max + 1):
        candidate = proposal(current, rng)
        cand_loss = loss_fn(candidate)
        temperature = t0 * math.exp(-beta * k)
        if (cand_loss < loss
                or rng.uniform(0.0, 1.0) <= accept_probability(loss, cand_loss, temperature)):
            current, loss = candidate, cand_loss
        if cand_loss < best_loss:
            best, best_loss = candidate, cand_loss
        trace.append((k, loss, best_loss))
    return best, best_loss, trace


def anneal_config(net: Network, default: Proportions, params: GameParams,
                  ap: AnnealParams, attack_oracle=None, oracle=None,
                  h_max: int | None = None, solver="highs"):
    """Anneal one rate per detector.  ``attack_oracle`` maps a configuration
    to the defender's loss against a best-response attacker; by default the
    greedy attack heuristic over a shared, memoized gain oracle.

    Returns (best configuration, its loss, [(iteration, loss, best loss)]).
    """
    loss_fn = attack_oracle or _default_loss_fn(net, default, params, h_max, solver, oracle)

    def proposal(cfg, rng):
        return perturb(cfg, ap.epsilon, rng,
                       (params.characteristic.d_min, params.characteristic.d_max))

    return _anneal(loss_fn, _initial_config(params), ap, proposal)


def uniform_config_search(net: Network, default: Proportions, params: GameParams,
                          ap: AnnealParams, attack_oracle=None, oracle=None,
                          h_max: int | None = None, solver="highs"):
    """Same annealing loop restricted to a single scalar rate shared by all
    detectors (the non-strategic baseline)."""
    loss_fn = attack_oracle or _default_loss_fn(net, default, params, h_max, solver, oracle)
    char = params.characteristic

    def proposal(cfg, rng):
        rate = cfg.rates[0][1] if cfg.rates else 1.0
        draw = rng.uniform(rate * (1.0 - ap.epsilon), rate * (1.0 + ap.epsilon))
        draw = min(max(draw, char.d_min), char.d_max)
        return DetectorConfig.constant(params.detectors, draw)

    return _anneal(loss_fn, _initial_config(params), ap, proposal)
