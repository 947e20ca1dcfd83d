"""Replicated Monte Carlo estimation of the three performance indices.

Estimates the average run length to false alarm (ARLFA), the detection delay
(simulated at change time nu = 1 by default, which the equalizer property of
the adaptive-censoring detector justifies), and the pre-change communication
rate, plus feedback and sojourn diagnostics.  Every estimate carries a plain
sample standard error; replications are i.i.d. by construction because each
one owns RNG streams derived from (seed, replication index).

Two communication-rate modes exist: ``no_stop`` disables the alarm (valid
because the censoring policy only depends on the level thresholds, and the
rate constraint holds uniformly in the alarm threshold) and is the cheap
default; ``conditional`` keeps the alarm and averages only over replications
surviving to the horizon, which is the literal conditional definition of the
rate and serves as a cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _engine
from .detectors import CusumAcConfig

__all__ = [
    "McEstimate",
    "PerfReport",
    "PreChangeRun",
    "DelayGap",
    "InfeasibleError",
    "estimate_arlfa",
    "estimate_delay",
    "estimate_delay_gap",
    "estimate_comm_rate",
    "delay_samples",
    "paired_gap",
    "summarize",
    "pre_change_run",
    "measure_performance",
]

_GOLDEN64 = 0x9E3779B97F4A7C15
_MAX_ATTEMPT_FACTOR = 100  # resampling budget for conditional estimators


class InfeasibleError(RuntimeError):
    """Raised when a conditional estimator cannot collect enough usable replications."""


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo point estimate with its provenance."""

    mean: float
    std_error: float
    n_reps: int
    seed: int
    truncated_reps: int = 0


@dataclass(frozen=True)
class PreChangeRun:
    """Diagnostics of a pre-change (false alarm) run of one detector."""

    arlfa: McEstimate
    feedback_per_alarm: McEstimate
    feedback_ratio: McEstimate
    frac_time_above_a1: McEstimate


@dataclass(frozen=True)
class PerfReport:
    """The performance indices of one detector configuration."""

    arlfa: McEstimate
    delay: McEstimate
    comm_rate: McEstimate
    feedback_ratio: McEstimate
    frac_time_above_a1: McEstimate


def derive_seed(seed: int, salt: int) -> int:
    """Deterministic 63-bit sub-seed so different estimates use distinct streams."""
    return (seed + salt * _GOLDEN64) % 2**63


def _reduce(values: np.ndarray, seed: int, truncated: int = 0) -> McEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ValueError("need at least two replications for a standard error")
    return McEstimate(
        mean=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(n)),
        n_reps=n,
        seed=seed,
        truncated_reps=truncated,
    )


def _engine_task(args):
    detector, pairs, n_reps, seed, rep_offset, kwargs = args
    return _engine.run_batch(detector, pairs, n_reps=n_reps, seed=seed,
                             rep_offset=rep_offset, **kwargs)


def _run_chunked(detector, pairs, n_reps, seed, *, rep_offset=0, n_jobs=1, **kwargs
                 ) -> _engine.BatchResult:
    """Run a batch, optionally split over worker processes.

    The per-replication streams make results identical for every n_jobs, so
    chunking is purely a throughput knob.
    """
    if n_jobs <= 1 or n_reps < 2 * n_jobs:
        return _engine.run_batch(detector, pairs, n_reps=n_reps, seed=seed,
                                 rep_offset=rep_offset, **kwargs)
    base = n_reps // n_jobs
    sizes = [base + (1 if i < n_reps % n_jobs else 0) for i in range(n_jobs)]
    tasks = []
    offset = rep_offset
    for size in sizes:
        if size:
            tasks.append((detector, pairs, size, seed, offset, kwargs))
            offset += size
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(_engine_task, tasks))
    return _engine.concat_results(parts)


def estimate_arlfa(detector, pairs, n_reps: int, cap: int, seed: int, *, n_jobs: int = 1
                   ) -> McEstimate:
    """Mean run length to false alarm over pre-change-only trajectories.

    Trajectories hitting ``cap`` are included at value cap (a downward bias)
    and surfaced through ``truncated_reps``; pick cap large enough, about
    100x the expected run length.
    """
    if n_reps < 100:
        raise ValueError("ARLFA estimation needs at least 100 replications")
    if cap < 1:
        raise ValueError("cap must be positive")
    batch = _run_chunked(detector, pairs, n_reps, seed, n_jobs=n_jobs,
                         nu=None, limit=int(cap), stop_enabled=True)
    truncated = int((~batch.stopped).sum())
    return _reduce(batch.stop_time, seed, truncated)


def pre_change_run(detector, pairs, n_reps: int, cap: int, seed: int, *, n_jobs: int = 1
                   ) -> PreChangeRun:
    """ARLFA plus per-alarm feedback and sojourn diagnostics from one batch."""
    if n_reps < 100:
        raise ValueError("ARLFA estimation needs at least 100 replications")
    batch = _run_chunked(detector, pairs, n_reps, seed, n_jobs=n_jobs,
                         nu=None, limit=int(cap), stop_enabled=True)
    truncated = int((~batch.stopped).sum())
    stop = batch.stop_time.astype(float)
    return PreChangeRun(
        arlfa=_reduce(batch.stop_time, seed, truncated),
        feedback_per_alarm=_reduce(batch.feedback, seed, truncated),
        feedback_ratio=_reduce(batch.feedback / stop, seed, truncated),
        frac_time_above_a1=_reduce(batch.time_above / stop, seed, truncated),
    )


def delay_samples(detector, pairs, n_reps: int, seed: int, nu: int = 1, *,
                  cap: int = 1_000_000, n_jobs: int = 1) -> tuple[np.ndarray, int]:
    """Per-replication delays (stop_time - nu + 1)^+ and the truncation count.

    Replication i always consumes the stream derived from (seed, i), so two
    detectors sampled with the same arguments are paired rep-by-rep.
    """
    if nu < 1:
        raise ValueError("change time nu must be >= 1")
    if n_reps < 2:
        raise ValueError("need at least two replications")
    batch = _run_chunked(detector, pairs, n_reps, seed, n_jobs=n_jobs,
                         nu=nu, limit=int(nu - 1 + cap), stop_enabled=True)
    delays = np.maximum(batch.stop_time - nu + 1, 0)
    return delays, int((~batch.stopped).sum())


def paired_gap(delays_a: np.ndarray, delays_b: np.ndarray, seed: int,
               truncated: int = 0) -> McEstimate:
    """Mean and standard error of the per-replication difference a - b."""
    return _reduce(delays_a.astype(float) - delays_b.astype(float), seed, truncated)


def summarize(values: np.ndarray, seed: int, truncated: int = 0) -> McEstimate:
    """Reduce raw per-replication values to a Monte Carlo estimate."""
    return _reduce(values, seed, truncated)


def estimate_delay(detector, pairs, n_reps: int, seed: int, nu: int = 1, *,
                   cap: int = 1_000_000, worst_history: bool = False, n_jobs: int = 1
                   ) -> McEstimate:
    """Mean detection delay (stop_time - nu + 1)^+ with the change at step nu.

    With ``worst_history=True`` and nu > 1 the estimate conditions on the
    least favorable pre-change history, a statistic exactly at zero when the
    change arrives (trajectories are resampled until ``n_reps`` qualify).
    That is the quantity the worst-case delay criterion actually takes as
    its essential supremum; the unconditional default mixes in favorable
    histories and is reported as such.
    """
    if nu < 1:
        raise ValueError("change time nu must be >= 1")
    if n_reps < 2:
        raise ValueError("need at least two replications")
    limit = int(nu - 1 + cap)
    if not worst_history or nu == 1:
        delays, truncated = delay_samples(detector, pairs, n_reps, seed, nu,
                                          cap=cap, n_jobs=n_jobs)
        return _reduce(delays, seed, truncated)

    collected = []
    truncated = 0
    attempts = 0
    offset = 0
    while len(collected) < n_reps:
        if attempts >= _MAX_ATTEMPT_FACTOR * n_reps:
            raise InfeasibleError(
                f"collected {len(collected)}/{n_reps} zero-statistic histories "
                f"after {attempts} attempts"
            )
        batch = _run_chunked(detector, pairs, n_reps, seed, rep_offset=offset,
                             n_jobs=n_jobs, nu=nu, limit=limit, stop_enabled=True,
                             require_zero_at=nu - 1)
        attempts += batch.n_reps
        offset += batch.n_reps
        usable = ~batch.rejected
        for st, stopped in zip(batch.stop_time[usable], batch.stopped[usable]):
            collected.append(max(int(st) - nu + 1, 0))
            truncated += 0 if stopped else 1
            if len(collected) == n_reps:
                break
    return _reduce(np.asarray(collected), seed, truncated)


@dataclass(frozen=True)
class DelayGap:
    """Paired comparison of two detectors' delays on shared observation streams."""

    gap: McEstimate      # mean of (delay_a - delay_b) per replication
    delay_a: McEstimate
    delay_b: McEstimate


def estimate_delay_gap(detector_a, detector_b, pairs, n_reps: int, seed: int,
                       nu: int = 1, *, cap: int = 1_000_000, n_jobs: int = 1) -> DelayGap:
    """Delay difference estimated with common random numbers.

    Both detectors consume identical observation streams (the engine's block
    schedule is fixed), so the per-replication delay difference averages with
    a far smaller standard error than two independent runs would give.
    """
    da, ta = delay_samples(detector_a, pairs, n_reps, seed, nu, cap=cap, n_jobs=n_jobs)
    db, tb = delay_samples(detector_b, pairs, n_reps, seed, nu, cap=cap, n_jobs=n_jobs)
    return DelayGap(
        gap=paired_gap(da, db, seed, ta + tb),
        delay_a=_reduce(da, seed, ta),
        delay_b=_reduce(db, seed, tb),
    )


def estimate_comm_rate(detector, pairs, horizon: int, n_reps: int, seed: int,
                       mode: str = "no_stop", *, n_jobs: int = 1) -> McEstimate:
    """Pre-change transmissions per sensor per slot, averaged over replications."""
    if horizon < 10_000:
        raise ValueError("rate estimation needs a horizon of at least 10^4 slots")
    if n_reps < 2:
        raise ValueError("need at least two replications")
    pairs_list = pairs if isinstance(pairs, (list, tuple)) else [pairs]
    denom = float(horizon * len(pairs_list))

    if mode == "no_stop":
        batch = _run_chunked(detector, pairs_list, n_reps, seed, n_jobs=n_jobs,
                             nu=None, limit=int(horizon), stop_enabled=False)
        return _reduce(batch.tx / denom, seed)
    if mode != "conditional":
        raise ValueError(f"unknown mode {mode!r}")

    rates = []
    attempts = 0
    offset = 0
    while len(rates) < n_reps:
        if attempts >= _MAX_ATTEMPT_FACTOR * n_reps:
            raise InfeasibleError(
                f"collected {len(rates)}/{n_reps} trajectories surviving to the "
                f"horizon after {attempts} attempts; survival is too rare"
            )
        batch = _run_chunked(detector, pairs_list, n_reps, seed, rep_offset=offset,
                             n_jobs=n_jobs, nu=None, limit=int(horizon),
                             stop_enabled=True)
        attempts += batch.n_reps
        offset += batch.n_reps
        survived = ~batch.stopped | (batch.stop_time >= horizon)
        for tx in batch.tx[survived]:
            rates.append(tx / denom)
            if len(rates) == n_reps:
                break
    return _reduce(np.asarray(rates), seed)


def measure_performance(config: CusumAcConfig, pairs, *, n_reps: int, cap: int,
                        horizon: int, seed: int, nu: int = 1, rate_reps: int | None = None,
                        n_jobs: int = 1) -> PerfReport:
    """Full performance report of one adaptive-censoring configuration."""
    pre = pre_change_run(config, pairs, n_reps, cap, derive_seed(seed, 1), n_jobs=n_jobs)
    delay = estimate_delay(config, pairs, n_reps, derive_seed(seed, 2), nu=nu,
                           n_jobs=n_jobs)
    rate = estimate_comm_rate(config, pairs, horizon,
                              rate_reps if rate_reps is not None else max(100, n_reps // 10),
                              derive_seed(seed, 3), n_jobs=n_jobs)
    return PerfReport(
        arlfa=pre.arlfa,
        delay=delay,
        comm_rate=rate,
        feedback_ratio=pre.feedback_ratio,
        frac_time_above_a1=pre.frac_time_above_a1,
    )
