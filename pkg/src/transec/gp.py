"""Gaussian-process traffic-anomaly detector.

Normal traffic is modeled as a Gaussian process over per-sensor,
fixed-interval measurement variables with periodic mean and covariance
functions (period P intervals, the detector window) and zero covariance
beyond lag P.  Training is plain maximum likelihood: per-phase sample means
and (biased, divide-by-n) sample covariances across the observed periods,
including the cross-boundary lags up to P.  Detection scores one window of
S x P observations with the multivariate normal log-density and raises an
alarm when the score falls below a threshold; sweeping the threshold over a
held-out normal trace plus an attacked trace yields the (false positives
per month, detection delay) trade-off curve that feeds the game model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .anneal import make_rng
from .errors import (
    DegenerateTrace,
    InsufficientData,
    MisalignedStream,
    NetworkError,
    NonPositiveDefinite,
)
from .traces import TrafficTrace

SECONDS_PER_MONTH = 30 * 86400.0
JITTER_SCALE = 1e-6
JITTER_FLOOR = 1e-12


@dataclass(frozen=True)
class GpModel:
    """Periodic mean/covariance tables.

    mean[s, p] is the expected value of sensor s at phase p; cov[s1, s2, p1,
    P + d] is the covariance between sensor s1 at phase p1 and sensor s2 at
    lag d in [-P, P].  Window vectors are flattened sensor-major: index
    s * P + p.
    """

    sensors: tuple[str, ...]
    period: int
    interval_seconds: float
    mean: np.ndarray
    cov: np.ndarray
    jitter: float

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def window_seconds(self) -> float:
        return self.period * self.interval_seconds

    def window_mean(self) -> np.ndarray:
        return self.mean.reshape(-1)

    def window_cov(self) -> np.ndarray:
        """Assemble the S*P x S*P single-window covariance from the tables."""
        s_n, p_n = self.n_sensors, self.period
        idx = np.arange(p_n)
        p1, p2 = np.meshgrid(idx, idx, indexing="ij")
        lag = p2 - p1 + p_n
        out = np.empty((s_n * p_n, s_n * p_n))
        for s1 in range(s_n):
            for s2 in range(s_n):
                out[s1 * p_n : (s1 + 1) * p_n, s2 * p_n : (s2 + 1) * p_n] = \
                    self.cov[s1, s2, p1, lag]
        return out

    @cached_property
    def _factor(self):
        """Cholesky of the jittered window covariance plus its log-det."""
        base = self.window_cov()
        eye = np.eye(base.shape[0])
        jitter = self.jitter
        for attempt in range(2):
            try:
                factor = cho_factor(base + jitter * eye, lower=True)
                logdet = 2.0 * np.log(np.diag(factor[0])).sum()
                return factor, logdet
            except np.linalg.LinAlgError:
                jitter = max(jitter, JITTER_FLOOR) * 10.0
        raise NonPositiveDefinite("window covariance is not positive definite")


@dataclass(frozen=True)
class DetectorSettings:
    """Operating point: window length in minutes and log-likelihood threshold."""

    window_minutes: float
    ln_tau: float

    def period_for(self, interval_seconds: float) -> int:
        period = self.window_minutes * 60.0 / interval_seconds
        if abs(period - round(period)) > 1e-9 or period <= 0:
            raise NetworkError(
                "window must be a positive multiple of the measurement interval"
            )
        return int(round(period))


@dataclass(frozen=True)
class AlarmReport:
    alarm_seconds: tuple[float, ...]
    fp_count: int
    delay_minutes: float | None
    n_windows: int


def train(trace: TrafficTrace, period: int) -> GpModel:
    """Fit per-phase means and covariances (MLE, divide by n) on full periods.

    Needs at least two full periods so every phase has variance data; the
    trailing partial period is discarded.
    """
    if period <= 0:
        raise NetworkError("period must be positive")
    n = trace.n_intervals
    if n < period:
        raise DegenerateTrace(f"trace has {n} intervals, shorter than one period")
    n_periods = n // period
    if n_periods < 2:
        raise InsufficientData("need at least two full periods to estimate covariance")

    s_n = len(trace.sensors)
    # (periods, S*P) with sensor-major flattening
    windows = (
        trace.values[: n_periods * period]
        .reshape(n_periods, period, s_n)
        .transpose(0, 2, 1)
        .reshape(n_periods, s_n * period)
    )
    mu = windows.mean(axis=0)
    centered = windows - mu
    within = centered.T @ centered / n_periods
    adjacent = centered[:-1].T @ centered[1:] / (n_periods - 1)

    cov = _tables_from_covariances(within, adjacent, s_n, period)
    diag_mean = float(np.diag(within).mean())
    jitter = max(JITTER_SCALE * diag_mean, JITTER_FLOOR)
    return GpModel(
        sensors=trace.sensors,
        period=period,
        interval_seconds=trace.interval_seconds,
        mean=mu.reshape(s_n, period),
        cov=cov,
        jitter=jitter,
    )


def _tables_from_covariances(within, adjacent, s_n, period):
    """Covariance tables k[s1, s2, p1, P + d] for lags |d| <= P.

    Lags that stay inside one window come from the within-window matrix;
    pairs that straddle a window boundary come from the adjacent-window
    cross covariance.  Negative lags follow from symmetry."""
    p_n = period
    cov = np.zeros((s_n, s_n, p_n, 2 * p_n + 1))
    p1 = np.arange(p_n)[:, None]
    d = np.arange(0, p_n + 1)[None, :]
    p2 = p1 + d
    inside = p2 < p_n
    p2_in = np.clip(p2, 0, p_n - 1)
    p2_out = np.clip(p2 - p_n, 0, p_n - 1)
    rows = np.broadcast_to(p1, p2.shape)
    for s1 in range(s_n):
        for s2 in range(s_n):
            b_in = within[s1 * p_n : (s1 + 1) * p_n, s2 * p_n : (s2 + 1) * p_n]
            b_adj = adjacent[s1 * p_n : (s1 + 1) * p_n, s2 * p_n : (s2 + 1) * p_n]
            cov[s1, s2, :, p_n:] = np.where(
                inside, b_in[rows, p2_in], b_adj[rows, p2_out]
            )
    idx = np.arange(p_n)
    for lag in range(1, p_n + 1):
        shifted = (idx - lag) % p_n
        for s1 in range(s_n):
            for s2 in range(s_n):
                cov[s1, s2, idx, p_n - lag] = cov[s2, s1, shifted, p_n + lag]
    return cov


def log_likelihood(model: GpModel, window) -> float:
    """Multivariate normal log-density of one S x P observation block."""
    w = np.asarray(window, dtype=float)
    expected = (model.n_sensors, model.period)
    if w.shape != expected:
        raise NetworkError(f"window shape {w.shape} does not match model {expected}")
    factor, logdet = model._factor
    resid = w.reshape(-1) - model.window_mean()
    quad = float(resid @ cho_solve(factor, resid))
    dim = resid.size
    return -0.5 * (dim * math.log(2.0 * math.pi) + logdet + quad)


def _window_block(trace: TrafficTrace, start: int, period: int) -> np.ndarray:
    return trace.values[start : start + period].T


def window_scores(model: GpModel, stream: TrafficTrace, overlap: bool = False):
    """Log-likelihood of each (by default non-overlapping) window.

    Returns (window_end_seconds, scores).  The stream must start on a
    period boundary so phases line up with the model.
    """
    if stream.sensors != model.sensors:
        raise NetworkError("stream sensors do not match the model")
    if abs(stream.interval_seconds - model.interval_seconds) > 1e-9:
        raise NetworkError("stream interval does not match the model")
    window_s = model.window_seconds
    phase = stream.start_seconds % window_s
    if abs(phase) > 1e-9 and abs(phase - window_s) > 1e-9:
        raise MisalignedStream(
            f"stream starts {stream.start_seconds}s, not on a period boundary"
        )
    step = 1 if overlap else model.period
    ends, scores = [], []
    for start in range(0, stream.n_intervals - model.period + 1, step):
        block = _window_block(stream, start, model.period)
        scores.append(log_likelihood(model, block))
        ends.append(stream.start_seconds + (start + model.period) * stream.interval_seconds)
    return np.asarray(ends), np.asarray(scores)


def detect(model: GpModel, settings: DetectorSettings, stream: TrafficTrace,
           attack_onset: float | None = None, overlap: bool = False) -> AlarmReport:
    """Slide the detector over the stream and report alarms.

    False positives are alarms from windows ending at or before the attack
    onset (all alarms, when no onset is given); the delay is the time from
    onset to the end of the first alarming window after it.
    """
    if settings.period_for(model.interval_seconds) != model.period:
        raise NetworkError("settings window does not match the trained model")
    ends, scores = window_scores(model, stream, overlap=overlap)
    alarm_mask = scores < settings.ln_tau
    alarms = ends[alarm_mask]
    if attack_onset is None:
        fp_count = int(alarm_mask.sum())
        delay = None
    else:
        fp_count = int((alarms <= attack_onset).sum())
        post = alarms[alarms > attack_onset]
        delay = float((post[0] - attack_onset) / 60.0) if post.size else None
    return AlarmReport(tuple(float(a) for a in alarms), fp_count, delay, len(ends))


def pareto_curve(model: GpModel, normal: TrafficTrace, attacked: TrafficTrace,
                 attack_onset: float, thresholds) -> list[tuple[float, float]]:
    """Measured (false positives per month, detection delay in minutes)
    operating points over a threshold grid, reduced to the Pareto-dominant
    subset sorted by false-positive rate.  Thresholds that never detect the
    attack are dropped."""
    ends_n, scores_n = window_scores(model, normal)
    ends_a, scores_a = window_scores(model, attacked)
    month_scale = SECONDS_PER_MONTH / normal.duration_seconds
    points = []
    for tau in thresholds:
        fp = int((scores_n < tau).sum()) * month_scale
        post = (ends_a > attack_onset) & (scores_a < tau)
        if not post.any():
            continue
        delay = float((ends_a[post][0] - attack_onset) / 60.0)
        points.append((float(fp), delay))
    points.sort()
    pareto: list[tuple[float, float]] = []
    for fp, delay in points:
        if not pareto or delay < pareto[-1][1] - 1e-12:
            pareto.append((fp, delay))
    return pareto


def zero_fp_threshold(model: GpModel, normal: TrafficTrace, margin: float = 1e-6) -> float:
    """Largest threshold with zero alarms on the held-out normal trace."""
    _, scores = window_scores(model, normal)
    return float(scores.min() - margin)


def sample_windows(model: GpModel, n: int, rng) -> np.ndarray:
    """Draw n independent windows from the model; shape (n, S, P)."""
    factor, _ = model._factor
    chol = np.tril(factor[0])
    dim = chol.shape[0]
    out = np.empty((n, dim))
    chunk = max(1, min(n, int(2e7 // max(dim, 1))))
    mu = model.window_mean()
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        z = rng.standard_normal((m, dim))
        out[start : start + m] = mu + z @ chol.T
    return out.reshape(n, model.n_sensors, model.period)


def sample_trace(model: GpModel, n_periods: int, seed: int) -> TrafficTrace:
    """Concatenate independently sampled windows into a trace (cross-window
    covariance is ignored, which is fine for the self-consistency checks)."""
    rng = make_rng(seed)
    windows = sample_windows(model, n_periods, rng)
    values = windows.transpose(0, 2, 1).reshape(n_periods * model.period,
                                                model.n_sensors)
    return TrafficTrace(model.sensors, model.interval_seconds, values)


_STATS = {
    "mean": lambda a, axis: a.mean(axis=axis),
    "variance": lambda a, axis: a.var(axis=axis, ddof=1),  # Bessel, as reported
    "median": lambda a, axis: np.median(a, axis=axis),
}


def posterior_predictive_check(model: GpModel, observed: TrafficTrace,
                               statistic="mean", n_rep: int = 10_000,
                               seed: int = 0) -> dict[str, float]:
    """p = Pr[T(replicated) >= T(observed)] per sensor.

    Replicates are single windows drawn from the model; the statistic is
    applied to each sensor's marginal.  statistic is "mean", "variance",
    "median", or ("quantile", q).
    """
    if isinstance(statistic, tuple):
        kind, q = statistic
        if kind != "quantile":
            raise NetworkError(f"unknown statistic {statistic!r}")
        fn = lambda a, axis: np.quantile(a, q, axis=axis)
    else:
        if statistic not in _STATS:
            raise NetworkError(f"unknown statistic {statistic!r}")
        fn = _STATS[statistic]
    if observed.sensors != model.sensors:
        raise NetworkError("observed sensors do not match the model")
    obs_stat = fn(observed.values, 0)  # per sensor over the whole trace
    rng = make_rng(seed)
    reps = sample_windows(model, n_rep, rng)  # (n, S, P)
    rep_stat = fn(reps, 2)  # (n, S)
    p_values = (rep_stat >= obs_stat[None, :]).mean(axis=0)
    return {s: float(p_values[i]) for i, s in enumerate(model.sensors)}


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

def model_to_json(model: GpModel) -> str:
    doc = {
        "sensors": list(model.sensors),
        "period": model.period,
        "interval_seconds": model.interval_seconds,
        "jitter": model.jitter,
        "mean": model.mean.tolist(),
        "cov_shape": list(model.cov.shape),
        "cov": model.cov.reshape(-1).tolist(),
    }
    return json.dumps(doc) + "\n"


def model_from_json(text: str) -> GpModel:
    try:
        doc = json.loads(text)
        cov = np.asarray(doc["cov"]).reshape(doc["cov_shape"])
        return GpModel(
            sensors=tuple(doc["sensors"]),
            period=int(doc["period"]),
            interval_seconds=float(doc["interval_seconds"]),
            mean=np.asarray(doc["mean"]),
            cov=cov,
            jitter=float(doc["jitter"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed model document: {exc}") from exc
