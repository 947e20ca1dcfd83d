"""Renewal-cycle estimators for the adaptive-censoring detector.

Between alarms the detector decomposes into i.i.d. cycles: a full-rate
random-walk excursion from the switching threshold a1 (the two-sided SPRT
leg, duration eta) that either crosses the alarm threshold or falls back
below a1 with clamped re-entry value s_hat, followed - on return - by a
censored climb back to a1 (duration phi).  This module estimates those cycle
quantities by direct simulation, plus the derived checks built on them: the
slow-regime membership test (is the censored climb at least as long as a
plain CuSum run to a1?), the alternating-renewal upper bound on the
communication rate, and the expected per-alarm feedback count.

``estimate_cycle_direct`` measures whole cycles through the scalar detector
step function instead, giving an independent route for the composition
identity E[cycle] = E[eta] + p_return * E[phi | return].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .censoring import optimize
from .detectors import CusumSpec, cusum_ac_step, initial_state, two_level
from .montecarlo import McEstimate, derive_seed, _reduce

__all__ = [
    "CycleStats",
    "DirectCycleStats",
    "EprimeCheck",
    "estimate_cycle",
    "estimate_cycle_direct",
    "check_eprime_membership",
    "rate_upper_bound",
    "feedback_expectation",
]

_WALK_CAP = 10_000_000  # hard step cap for open-band walks; hits are flagged, never silent
_WALK_BLOCK = 256


@dataclass(frozen=True)
class CycleStats:
    """Monte Carlo estimates of the renewal-cycle quantities at (a1, a, eps1)."""

    a1: float
    a: float
    eps1: float
    eta0: McEstimate                 # mean SPRT leg duration from a1
    eta0_given_return: McEstimate    # same, conditioned on falling back below a1
    phi_given_return: McEstimate     # mean censored climb back to a1 after a return
    t_a1: McEstimate                 # plain-CuSum mean run length at threshold a1
    p_return: McEstimate             # probability the SPRT leg returns below a1
    return_value_samples: np.ndarray
    capped_walks: int

    def to_record(self) -> dict:
        rec = {"a1": self.a1, "a": self.a, "eps1": self.eps1,
               "capped_walks": self.capped_walks,
               "n_return_samples": int(self.return_value_samples.size)}
        for name in ("eta0", "eta0_given_return", "phi_given_return", "t_a1", "p_return"):
            est: McEstimate = getattr(self, name)
            rec[f"{name}_mean"] = est.mean
            rec[f"{name}_se"] = est.std_error
            rec[f"{name}_n"] = est.n_reps
        return rec


@dataclass(frozen=True)
class DirectCycleStats:
    """Whole-cycle measurements taken through the scalar detector steps."""

    cycle_length: McEstimate
    p_return: McEstimate


@dataclass(frozen=True)
class EprimeCheck:
    """Statistical verdict on slow-regime membership with its margin in SEs."""

    verdict: str  # "member" | "rejected" | "indeterminate"
    margin: float

    @property
    def is_member(self) -> bool:
        return self.verdict == "member"


def _eta_walks(pair, a1: float, a: float, n: int, seed: int, cap: int):
    """Simulate n raw-LLR walks from 0 until exit of [0, a - a1].

    Returns (durations, returned flags, clamped re-entry values, n_capped).
    The band is open above when a is infinite; capped walks count as
    non-returning and are excluded from the conditional statistics.
    """
    band = math.inf if math.isinf(a) else a - a1
    rngs = [np.random.default_rng([seed, i, 0]) for i in range(n)]
    act = np.arange(n)
    w = np.zeros(n)
    dur = np.zeros(n, dtype=np.int64)
    returned = np.zeros(n, dtype=bool)
    shat = np.zeros(n)
    capped = 0
    k = 0
    while act.size and k < cap:
        B = min(_WALK_BLOCK, cap - k)
        inc = np.empty((act.size, B))
        for row, rid in enumerate(act):
            inc[row] = pair.llr(pair.sample0(rngs[rid], B))
        path = np.cumsum(inc, axis=1) + w[:, None]
        out = (path < 0.0) | (path > band)
        found = out.any(axis=1)
        idx = out.argmax(axis=1)
        if found.any():
            rows = np.nonzero(found)[0]
            ids = act[rows]
            exit_vals = path[rows, idx[rows]]
            dur[ids] = k + idx[rows] + 1
            below = exit_vals < 0.0
            returned[ids[below]] = True
            shat[ids[below]] = np.maximum(exit_vals[below] + a1, 0.0)
        k += B
        keep = ~found
        w = path[keep, -1]
        act = act[keep]
    if act.size:
        capped = int(act.size)
        dur[act] = cap
    return dur, returned, shat, capped


def _phi_walks(pair, strategy, a1: float, starts: np.ndarray, seed: int, cap: int):
    """Censored reflected walks from the given starts until reaching a1.

    Returns (durations, n_capped).  Increments are the censored LLR under
    the pre-change law: the raw LLR outside the no-send interval, the
    censored constant inside.
    """
    n = starts.size
    rngs = [np.random.default_rng([seed, i, 0]) for i in range(n)]
    lo, hi, llr_c = strategy.nosend_x_lo, strategy.nosend_x_hi, strategy.llr_censored
    act = np.arange(n)
    s = starts.astype(float).copy()
    dur = np.zeros(n, dtype=np.int64)
    capped = 0
    k = 0
    while act.size and k < cap:
        B = min(_WALK_BLOCK, cap - k)
        done_any = False
        x = np.empty((act.size, B))
        for row, rid in enumerate(act):
            x[row] = pair.sample0(rngs[rid], B)
        inside = (x >= lo) & (x <= hi)
        inc = np.where(inside, llr_c, np.asarray(pair.llr(x)))
        # Reflection at zero forces a step-by-step scan inside the block.
        alive = np.ones(act.size, dtype=bool)
        for j in range(B):
            s = np.maximum(s + inc[:, j], 0.0)
            reached = alive & (s >= a1)
            if reached.any():
                dur[act[reached]] = k + j + 1
                alive &= ~reached
                done_any = True
                if not alive.any():
                    break
        k += B
        if done_any:
            s = s[alive]
            act = act[alive]
    if act.size:
        capped = int(act.size)
        dur[act] = cap
    return dur, capped


def estimate_cycle(pair, a1: float, a: float, eps1: float, n_reps: int, seed: int, *,
                   strategy=None, cap: int = _WALK_CAP) -> CycleStats:
    """Estimate the renewal-cycle quantities under the pre-change law.

    ``a`` may be infinite (the walk band is then open above).  The censored
    climb is simulated from every observed re-entry value, so the
    conditional mean over the empirical re-entry distribution needs no
    parametric form.
    """
    if not (0 < a1 < a):
        raise ValueError(f"need 0 < a1 < a, got a1={a1}, a={a}")
    if not (1e-3 < eps1 <= 1.0):
        raise ValueError(f"eps1 must lie in (1e-3, 1], got {eps1}")
    if n_reps < 100:
        raise ValueError("cycle estimation needs at least 100 replications")
    if strategy is None:
        strategy = optimize(pair, eps1)

    dur, returned, shat, capped_eta = _eta_walks(pair, a1, a, n_reps,
                                                 derive_seed(seed, 11), cap)
    ret_vals = shat[returned]
    phi_dur, capped_phi = _phi_walks(pair, strategy, a1, ret_vals,
                                     derive_seed(seed, 12), cap)

    t_batch = _engine.run_batch(CusumSpec(a1), [pair], n_reps=n_reps,
                                seed=derive_seed(seed, 13), limit=cap)
    t_capped = int((~t_batch.stopped).sum())

    return CycleStats(
        a1=a1,
        a=a,
        eps1=eps1,
        eta0=_reduce(dur, seed, capped_eta),
        eta0_given_return=_reduce(dur[returned], seed),
        phi_given_return=_reduce(phi_dur, seed, capped_phi),
        t_a1=_reduce(t_batch.stop_time, seed, t_capped),
        p_return=_reduce(returned.astype(float), seed),
        return_value_samples=ret_vals,
        capped_walks=capped_eta + capped_phi + t_capped,
    )


def estimate_cycle_direct(pair, a1: float, a: float, eps1: float, n_cycles: int,
                          seed: int, *, strategy=None, cap: int = 1_000_000
                          ) -> DirectCycleStats:
    """Measure whole SPRT cycles by stepping the scalar detector from a1.

    A cycle ends at the alarm or at the bit-exact reset back to a1 after a
    spell below; this is the independent route the composition identity is
    checked against.
    """
    if strategy is None:
        strategy = optimize(pair, eps1)
    config = two_level(pair, a=a, a1=a1, eps1=eps1, strategies=[strategy])
    lengths = np.zeros(n_cycles, dtype=np.int64)
    returned = np.zeros(n_cycles, dtype=bool)
    for i in range(n_cycles):
        rng = np.random.default_rng([seed, i, 0])
        state = initial_state(config, s0=a1)
        while True:
            prev_s = state.s
            x = float(pair.sample0(rng))
            state, _ = cusum_ac_step(state, config, x, pair)
            if state.stopped:
                lengths[i] = state.k
                break
            if prev_s < a1 and state.s == a1:
                lengths[i] = state.k
                returned[i] = True
                break
            if state.k >= cap:
                lengths[i] = cap
                break
    return DirectCycleStats(
        cycle_length=_reduce(lengths, seed),
        p_return=_reduce(returned.astype(float), seed),
    )


def check_eprime_membership(stats: CycleStats) -> EprimeCheck:
    """Decide whether the censored climb dominates a plain CuSum run to a1.

    The defining inequality compares two estimated means, so the verdict is
    statistical: member at margin >= +3 combined standard errors, rejected
    at <= -3, indeterminate in between.
    """
    se = math.hypot(stats.phi_given_return.std_error, stats.t_a1.std_error)
    margin = (stats.phi_given_return.mean - stats.t_a1.mean) / se if se > 0 else math.inf
    if margin >= 3.0:
        verdict = "member"
    elif margin <= -3.0:
        verdict = "rejected"
    else:
        verdict = "indeterminate"
    return EprimeCheck(verdict=verdict, margin=float(margin))


def rate_upper_bound(stats: CycleStats, eps1: float | None = None) -> float:
    """Alternating-renewal upper bound on the pre-change communication rate.

    Every cycle alternates a full-rate leg (mean eta, conditioned on return
    as in the renewal-reward decomposition) with a censored leg (mean phi,
    rate eps1); the long-run send fraction is bounded by the time-weighted
    mix of the two rates.
    """
    e1 = stats.eps1 if eps1 is None else eps1
    eta = stats.eta0_given_return.mean
    phi = stats.phi_given_return.mean
    return (eta + e1 * phi) / (eta + phi)


def feedback_expectation(stats: CycleStats, resolution: float | None = None) -> float:
    """Expected strategy announcements per alarm, 2 / (1 - p_return).

    Each SPRT leg costs two announcements (the switch into the censored mode
    and the one out of it, the initial announcement standing in for the
    final leg's missing switch); legs per alarm are geometric.  A return
    probability at one within Monte Carlo resolution gives an unbounded
    count, reported as infinity.
    """
    p = stats.p_return.mean
    tol = resolution if resolution is not None else max(stats.p_return.std_error, 1e-12)
    if p >= 1.0 - tol:
        return math.inf
    return 2.0 / (1.0 - p)
