"""Vectorized batch simulator behind the Monte Carlo estimators.

Replications are advanced in lockstep with numpy across the active set; each
replication owns RNG streams derived from (seed, replication index, substream)
so results do not depend on batching, chunk boundaries or worker count.
Substream 0 carries observations (consumed in fixed blocks of ``OBS_BLOCK``
steps, pre-change segment first when the change time falls inside a block,
sensor by sensor within a segment); substream 1 carries the Bernoulli
uniforms of the random-transmission policy.  The fixed block schedule means
two detectors simulated under the same seed see identical observation
sequences, which the paired delay comparisons rely on.

Plain-CuSum and random-transmission runs use a closed-form block update
(cumulative sums against a running minimum) since their increments are
i.i.d.; CuSum-AC runs use an explicit per-step loop because the censoring
level depends on the running statistic.  Once few replications remain the
adaptive-censoring loop falls back to a scalar completion that performs the
identical float64 operations (so results are bit-equal to the vector path);
run lengths have an exponential tail and the stragglers would otherwise pay
full vector-dispatch overhead per step.  Both paths implement the exact step
semantics of :mod:`cusumac.detectors`, which the test suite checks by
trajectory replay.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .detectors import CusumAcConfig, CusumSpec, RandomTxSpec
from .model import GaussianPair

OBS_BLOCK = 1024   # steps per observation block; fixed so draw order is reproducible
_TAIL_MAX = 16     # switch to the scalar completion at or below this many active reps
_SPECIALIZE = True  # test hook: disable the two-level fast bodies


@dataclass
class BatchResult:
    """Per-replication outcomes of one simulated batch."""

    stop_time: np.ndarray   # int64; equals the step limit when not stopped
    stopped: np.ndarray     # bool
    tx: np.ndarray          # int64, transmissions summed over sensors
    feedback: np.ndarray    # int64, strategy announcements (initial one included)
    time_above: np.ndarray  # int64, steps with statistic >= top level threshold
    time_below: np.ndarray  # int64
    rejected: np.ndarray    # bool; only populated under require_zero_at
    n_sensors: int
    records: Optional[dict] = None

    @property
    def n_reps(self) -> int:
        return self.stop_time.size


def concat_results(parts: Sequence[BatchResult]) -> BatchResult:
    if len(parts) == 1:
        return parts[0]
    return BatchResult(
        stop_time=np.concatenate([p.stop_time for p in parts]),
        stopped=np.concatenate([p.stopped for p in parts]),
        tx=np.concatenate([p.tx for p in parts]),
        feedback=np.concatenate([p.feedback for p in parts]),
        time_above=np.concatenate([p.time_above for p in parts]),
        time_below=np.concatenate([p.time_below for p in parts]),
        rejected=np.concatenate([p.rejected for p in parts]),
        n_sensors=parts[0].n_sensors,
        records=None,
    )


def _as_pairs(pairs) -> list:
    return list(pairs) if isinstance(pairs, (list, tuple)) else [pairs]


def _llr_matrix_fn(pairs):
    """Vectorized per-sensor LLR evaluator for an (n, M) observation matrix."""
    if all(isinstance(p, GaussianPair) for p in pairs):
        slopes = np.array([p.llr_slope for p in pairs])
        icpts = np.array([p.llr_intercept for p in pairs])
        return lambda x: x * slopes + icpts

    def generic(x):
        return np.stack([np.asarray(p.llr(x[:, m])) for m, p in enumerate(pairs)], axis=1)

    return generic


def _fill_obs_block(rng, pairs, out: np.ndarray, n_pre: int):
    """Fill one (B, M) observation block: pre-change rows first, then post-change."""
    B = out.shape[0]
    for m, p in enumerate(pairs):
        if n_pre:
            out[:n_pre, m] = p.sample0(rng, n_pre)
    for m, p in enumerate(pairs):
        if n_pre < B:
            out[n_pre:, m] = p.sample1(rng, B - n_pre)


def _pre_steps(k0: int, B: int, nu: Optional[int]) -> int:
    if nu is None:
        return B
    return min(max(nu - 1 - k0, 0), B)


def _draw_obs(rep_rngs, rep_ids, pairs, k0: int, B: int, nu: Optional[int]) -> np.ndarray:
    """Observations for steps k0+1 .. k0+B of every listed replication."""
    out = np.empty((len(rep_ids), B, len(pairs)))
    n_pre = _pre_steps(k0, B, nu)
    for row, rid in enumerate(rep_ids):
        _fill_obs_block(rep_rngs[rid], pairs, out[row], n_pre)
    return out


def _draw_uniforms(aux_rngs, rep_ids, M: int, B: int) -> np.ndarray:
    out = np.empty((len(rep_ids), B, M))
    for row, rid in enumerate(rep_ids):
        out[row] = aux_rngs[rid].random((B, M))
    return out


def _new_result(n_reps: int, limit: int, M: int) -> BatchResult:
    return BatchResult(
        stop_time=np.full(n_reps, limit, dtype=np.int64),
        stopped=np.zeros(n_reps, dtype=bool),
        tx=np.zeros(n_reps, dtype=np.int64),
        feedback=np.zeros(n_reps, dtype=np.int64),
        time_above=np.zeros(n_reps, dtype=np.int64),
        time_below=np.zeros(n_reps, dtype=np.int64),
        rejected=np.zeros(n_reps, dtype=bool),
        n_sensors=M,
    )


def run_batch(
    detector,
    pairs,
    *,
    n_reps: int,
    seed: int,
    rep_offset: int = 0,
    nu: Optional[int] = None,
    limit: int,
    stop_enabled: bool = True,
    require_zero_at: Optional[int] = None,
    record: bool = False,
) -> BatchResult:
    """Simulate ``n_reps`` independent trajectories of one detector.

    ``nu`` is the change time (observations switch to the post-change law
    from step nu on; None means the change never happens).  Every
    trajectory runs until its alarm, or for ``limit`` steps.  With
    ``stop_enabled=False`` the alarm threshold is ignored entirely (the
    censoring levels still apply).  ``require_zero_at=t`` marks as rejected
    every replication whose statistic is not exactly zero after step t (or
    that already alarmed by then), and stops simulating it.  ``record=True``
    keeps full per-step trajectories; intended for small test batches only.
    """
    if limit < 1:
        raise ValueError("limit must be at least one step")
    pairs = _as_pairs(pairs)
    if isinstance(detector, CusumAcConfig):
        if detector.n_sensors != len(pairs):
            raise ValueError(
                f"config has {detector.n_sensors} sensors, got {len(pairs)} pairs"
            )
        return _run_cusum_ac(detector, pairs, n_reps, seed, rep_offset, nu, limit,
                             stop_enabled, require_zero_at, record)
    if isinstance(detector, (CusumSpec, RandomTxSpec)):
        if record or require_zero_at is not None:
            return _run_iid_steploop(detector, pairs, n_reps, seed, rep_offset, nu, limit,
                                     stop_enabled, require_zero_at, record)
        return _run_iid_blocks(detector, pairs, n_reps, seed, rep_offset, nu, limit,
                               stop_enabled)
    raise TypeError(f"unsupported detector {detector!r}")


def _stack_records(recs: dict) -> dict:
    return {key: (np.stack(vals) if vals else np.empty((0,))) for key, vals in recs.items()}


class _AcTables:
    """Per-level censoring tables; level 0 is the implicit full-rate region."""

    def __init__(self, config: CusumAcConfig, pairs):
        M = len(pairs)
        n_levels = len(config.levels)
        self.n_levels = n_levels
        self.asc = np.array([lv.threshold for lv in config.levels])[::-1].copy()
        self.lo = np.full((n_levels + 1, M), np.inf)
        self.hi = np.full((n_levels + 1, M), -np.inf)
        self.llrc = np.zeros((n_levels + 1, M))
        for lv_idx in range(1, n_levels + 1):
            for m in range(M):
                strat = config.strategies[lv_idx - 1][m]
                if not strat.monotone:
                    raise NotImplementedError(
                        "batch simulation needs observation-space censoring intervals"
                    )
                self.lo[lv_idx, m] = strat.nosend_x_lo
                self.hi[lv_idx, m] = strat.nosend_x_hi
                self.llrc[lv_idx, m] = strat.llr_censored


def _run_cusum_ac(config, pairs, n_reps, seed, rep_offset, nu, limit,
                  stop_enabled, require_zero_at, record) -> BatchResult:
    M = len(pairs)
    tab = _AcTables(config, pairs)
    n_levels = tab.n_levels
    asc = tab.asc
    a, a1 = config.a, config.a1
    llr_of = _llr_matrix_fn(pairs)
    all_gauss = all(isinstance(p, GaussianPair) for p in pairs)
    two_level = _SPECIALIZE and n_levels == 1

    res = _new_result(n_reps, limit, M)
    rep_rngs = {rep_offset + i: np.random.default_rng([seed, rep_offset + i, 0])
                for i in range(n_reps)}

    act = np.arange(rep_offset, rep_offset + n_reps, dtype=np.int64)
    s = np.zeros(n_reps)
    cnt = np.zeros(n_reps, dtype=np.int64)  # number of level thresholds <= s
    alive = np.ones(n_reps, dtype=bool)
    tx = np.zeros(n_reps, dtype=np.int64)
    fb = np.zeros(n_reps, dtype=np.int64)   # level switches; initial announcement added at flush
    t_above = np.zeros(n_reps, dtype=np.int64)
    t_below = np.zeros(n_reps, dtype=np.int64)

    recs = {"s": [], "level": [], "sent": [], "obs": [], "stopped": []} if record else None

    def flush(local_rows):
        ids = act[local_rows] - rep_offset
        res.tx[ids] = tx[local_rows]
        # The starting level differs from the sensors' full-rate default, so
        # the initial strategy announcement counts as one feedback message.
        res.feedback[ids] = fb[local_rows] + 1
        res.time_above[ids] = t_above[local_rows]
        res.time_below[ids] = t_below[local_rows]

    if two_level and M == 1:
        lo0 = float(tab.lo[1, 0])
        hi0 = float(tab.hi[1, 0])
        llrc0 = float(tab.llrc[1, 0])
        if all_gauss:
            g_slope = pairs[0].llr_slope
            g_icpt = pairs[0].llr_intercept
    elif two_level:
        lo_vec = tab.lo[1]
        hi_vec = tab.hi[1]
        llrc_vec = tab.llrc[1]

    k = 0
    while act.size and k < limit:
        if not record and all_gauss and act.size <= _TAIL_MAX:
            _scalar_finish_ac(config, pairs, tab, res, rep_rngs, act, rep_offset, k,
                              s, cnt, tx, fb, t_above, t_below, nu, limit,
                              stop_enabled, require_zero_at)
            act = act[:0]
            break
        B = min(OBS_BLOCK, limit - k)
        obs = _draw_obs(rep_rngs, act, pairs, k, B, nu)
        obs1 = obs[:, :, 0] if (two_level and M == 1) else None
        for j in range(B):
            if two_level and M == 1:
                x = obs1[:, j]
                below = cnt == 0
                inside1 = below & (x >= lo0) & (x <= hi0)
                raw = x * g_slope + g_icpt if all_gauss else llr_of(x[:, None])[:, 0]
                inc = np.where(inside1, llrc0, raw)
                s_tilde = np.maximum(s + inc, 0.0)
                cnt_t = (s_tilde >= a1).astype(np.int64)
                crossed = below & (cnt_t == 1)
                s_new = np.where(crossed, a1, s_tilde)
                n_sent = 1 - inside1
            elif two_level:
                x = obs[:, j, :]
                below = cnt == 0
                inside = below[:, None] & (x >= lo_vec) & (x <= hi_vec)
                raw = llr_of(x)
                inc = np.where(inside, llrc_vec, raw)
                s_tilde = np.maximum(s + inc.sum(axis=1), 0.0)
                cnt_t = (s_tilde >= a1).astype(np.int64)
                crossed = below & (cnt_t == 1)
                s_new = np.where(crossed, a1, s_tilde)
                n_sent = M - inside.sum(axis=1)
            else:
                x = obs[:, j, :]
                level = n_levels - cnt
                inside = (x >= tab.lo[level]) & (x <= tab.hi[level])
                raw = llr_of(x)
                inc = np.where(inside, tab.llrc[level], raw)
                s_tilde = np.maximum(s + inc.sum(axis=1), 0.0)
                cnt_t = np.searchsorted(asc, s_tilde, side="right")
                crossed = cnt_t > cnt
                s_new = np.where(crossed, asc.take(np.maximum(cnt_t - 1, 0)), s_tilde)
                n_sent = M - inside.sum(axis=1)

            k_step = k + j + 1
            tx += n_sent * alive
            fb += (cnt_t != cnt) & alive
            above = s_new >= a1
            t_above += above & alive
            t_below += (~above) & alive

            if stop_enabled:
                newly = alive & (s_new >= a)
                if newly.any():
                    ids = act[newly] - rep_offset
                    res.stop_time[ids] = k_step
                    res.stopped[ids] = True
                    alive = alive & ~newly

            s = s_new
            cnt = cnt_t

            if require_zero_at is not None and k_step == require_zero_at:
                rej = alive & (s != 0.0)
                if rej.any():
                    ids = act[rej] - rep_offset
                    res.rejected[ids] = True
                    res.stop_time[ids] = k_step
                    alive = alive & ~rej

            if record:
                recs["s"].append(s.copy())
                recs["level"].append((n_levels - cnt).copy())
                if two_level and M == 1:
                    recs["sent"].append((~inside1)[:, None])
                    recs["obs"].append(x[:, None].copy())
                else:
                    recs["sent"].append(~inside)
                    recs["obs"].append(x.copy())
                recs["stopped"].append(res.stopped.copy())

            if not alive.any():
                break
        k += B
        if record:
            if not alive.any():
                break
            continue
        if not alive.any():
            flush(np.arange(act.size))
            act = act[:0]
            break
        if not alive.all():
            flush(np.nonzero(~alive)[0])
            keep = alive
            act = act[keep]
            s = s[keep]
            cnt = cnt[keep]
            tx = tx[keep]
            fb = fb[keep]
            t_above = t_above[keep]
            t_below = t_below[keep]
            alive = alive[keep]

    if act.size:
        flush(np.arange(act.size))
    if require_zero_at is not None:
        res.rejected |= res.stopped & (res.stop_time <= require_zero_at)
    if record:
        res.records = _stack_records(recs)
    return res


def _scalar_finish_ac(config, pairs, tab, res, rep_rngs, act, rep_offset, k0,
                      s, cnt, tx, fb, t_above, t_below, nu, limit,
                      stop_enabled, require_zero_at):
    """Complete the remaining replications one at a time in plain Python.

    Performs the same float64 operations as the vector loop (sequential
    per-sensor summation matches numpy's small-array sum), so the outcome is
    bit-identical; only Gaussian pairs take this path because a user LLR
    callable might not evaluate identically on scalars and arrays.
    """
    M = len(pairs)
    L = tab.n_levels
    a, a1 = config.a, config.a1
    asc_list = [float(v) for v in tab.asc]
    lo_list = tab.lo.tolist()
    hi_list = tab.hi.tolist()
    llrc_list = tab.llrc.tolist()
    slopes = [p.llr_slope for p in pairs]
    icpts = [p.llr_intercept for p in pairs]
    buf = np.empty((OBS_BLOCK, M))

    for row in range(act.size):
        rid = int(act[row])
        out = rid - rep_offset
        rng = rep_rngs[rid]
        s_i = float(s[row])
        cnt_i = int(cnt[row])
        tx_i = int(tx[row])
        fb_i = int(fb[row])
        ta_i = int(t_above[row])
        tb_i = int(t_below[row])
        k_i = k0
        running = True
        while running and k_i < limit:
            B = min(OBS_BLOCK, limit - k_i)
            _fill_obs_block(rng, pairs, buf[:B], _pre_steps(k_i, B, nu))
            for j in range(B):
                lvl = L - cnt_i
                fused = 0.0
                n_sent = 0
                if lvl:
                    lo_row = lo_list[lvl]
                    hi_row = hi_list[lvl]
                    llrc_row = llrc_list[lvl]
                    for m in range(M):
                        xv = buf[j, m]
                        if lo_row[m] <= xv <= hi_row[m]:
                            fused = fused + llrc_row[m]
                        else:
                            fused = fused + (xv * slopes[m] + icpts[m])
                            n_sent += 1
                else:
                    for m in range(M):
                        fused = fused + (buf[j, m] * slopes[m] + icpts[m])
                    n_sent = M
                s_t = s_i + fused
                if s_t < 0.0:
                    s_t = 0.0
                cnt_new = bisect_right(asc_list, s_t)
                s_new = asc_list[cnt_new - 1] if cnt_new > cnt_i else s_t
                k_i += 1
                tx_i += n_sent
                if cnt_new != cnt_i:
                    fb_i += 1
                if s_new >= a1:
                    ta_i += 1
                else:
                    tb_i += 1
                s_i = s_new
                cnt_i = cnt_new
                if stop_enabled and s_new >= a:
                    res.stop_time[out] = k_i
                    res.stopped[out] = True
                    running = False
                    break
                if require_zero_at is not None and k_i == require_zero_at and s_i != 0.0:
                    res.rejected[out] = True
                    res.stop_time[out] = k_i
                    running = False
                    break
        res.tx[out] = tx_i
        res.feedback[out] = fb_i + 1
        res.time_above[out] = ta_i
        res.time_below[out] = tb_i


def _run_iid_blocks(detector, pairs, n_reps, seed, rep_offset, nu, limit,
                    stop_enabled) -> BatchResult:
    """Block-closed-form path for detectors with state-independent increments.

    With i.i.d. increments w the reflected recursion c_k = max(0, c_{k-1}+w_k)
    equals S_k - min(-c_0, min_{j<=k} S_j) for the plain random walk S, so a
    whole block of steps reduces to a cumulative sum and a running minimum.
    """
    M = len(pairs)
    is_rtx = isinstance(detector, RandomTxSpec)
    a = detector.a
    llr_of = _llr_matrix_fn(pairs)

    res = _new_result(n_reps, limit, M)
    rep_rngs = {rep_offset + i: np.random.default_rng([seed, rep_offset + i, 0])
                for i in range(n_reps)}
    aux_rngs = (
        {rep_offset + i: np.random.default_rng([seed, rep_offset + i, 1])
         for i in range(n_reps)}
        if is_rtx
        else None
    )

    act = np.arange(rep_offset, rep_offset + n_reps, dtype=np.int64)
    carry_s = np.zeros(n_reps)  # absolute random-walk value
    carry_m = np.zeros(n_reps)  # running minimum of the walk (init -c_0 = 0)
    tx = np.zeros(n_reps, dtype=np.int64)

    k = 0
    while act.size and k < limit:
        B = min(OBS_BLOCK, limit - k)
        n = act.size
        obs = _draw_obs(rep_rngs, act, pairs, k, B, nu)
        per_sensor = llr_of(obs.reshape(-1, M))
        if is_rtx:
            gamma = _draw_uniforms(aux_rngs, act, M, B) < detector.epsilon
            per_sensor = per_sensor * gamma.reshape(-1, M)
            sent_per_step = gamma.sum(axis=2)
        else:
            sent_per_step = np.full((n, B), M, dtype=np.int64)
        inc = per_sensor.sum(axis=1).reshape(n, B)

        S = np.cumsum(inc, axis=1) + carry_s[:, None]
        run_min = np.minimum(np.minimum.accumulate(S, axis=1), carry_m[:, None])
        c = S - run_min
        tx_cum = np.cumsum(sent_per_step, axis=1)

        if stop_enabled:
            hit = c > a
            found = hit.any(axis=1)
            idx = hit.argmax(axis=1)
            if found.any():
                rows = np.nonzero(found)[0]
                ids = act[rows] - rep_offset
                res.stop_time[ids] = k + idx[rows] + 1
                res.stopped[ids] = True
                res.tx[ids] = tx[rows] + tx_cum[rows, idx[rows]]
            survivors = ~found
        else:
            survivors = np.ones(n, dtype=bool)

        k += B
        if k >= limit:
            ids = act[survivors] - rep_offset
            res.tx[ids] = tx[survivors] + tx_cum[survivors, -1]
            break
        carry_s = S[survivors, -1]
        carry_m = run_min[survivors, -1]
        tx = tx[survivors] + tx_cum[survivors, -1]
        act = act[survivors]
    return res


def _run_iid_steploop(detector, pairs, n_reps, seed, rep_offset, nu, limit,
                      stop_enabled, require_zero_at, record) -> BatchResult:
    """Per-step loop for cusum/random-tx when recording or conditioning; small batches."""
    M = len(pairs)
    is_rtx = isinstance(detector, RandomTxSpec)
    a = detector.a
    llr_of = _llr_matrix_fn(pairs)

    res = _new_result(n_reps, limit, M)
    rep_rngs = {rep_offset + i: np.random.default_rng([seed, rep_offset + i, 0])
                for i in range(n_reps)}
    aux_rngs = (
        {rep_offset + i: np.random.default_rng([seed, rep_offset + i, 1])
         for i in range(n_reps)}
        if is_rtx
        else None
    )
    rep_ids = np.arange(rep_offset, rep_offset + n_reps, dtype=np.int64)
    s = np.zeros(n_reps)
    alive = np.ones(n_reps, dtype=bool)
    recs = {"s": [], "level": [], "sent": [], "obs": [], "stopped": []} if record else None

    k = 0
    while alive.any() and k < limit:
        B = min(OBS_BLOCK, limit - k)
        obs = _draw_obs(rep_rngs, rep_ids, pairs, k, B, nu)
        gam = _draw_uniforms(aux_rngs, rep_ids, M, B) < detector.epsilon if is_rtx else None
        for j in range(B):
            x = obs[:, j, :]
            raw = llr_of(x)
            if is_rtx:
                sent = gam[:, j, :]
                inc = (raw * sent).sum(axis=1)
            else:
                sent = np.ones((n_reps, M), dtype=bool)
                inc = raw.sum(axis=1)
            s_new = np.maximum(s + inc, 0.0)
            k_step = k + j + 1
            res.tx += sent.sum(axis=1) * alive
            if stop_enabled:
                newly = alive & (s_new > a)
                if newly.any():
                    res.stop_time[newly] = k_step
                    res.stopped[newly] = True
                    alive = alive & ~newly
            s = s_new
            if require_zero_at is not None and k_step == require_zero_at:
                rej = alive & (s != 0.0)
                if rej.any():
                    res.rejected[rej] = True
                    res.stop_time[rej] = k_step
                    alive = alive & ~rej
            if record:
                recs["s"].append(s.copy())
                recs["level"].append(np.zeros(n_reps, dtype=np.int64))
                recs["sent"].append(sent.copy())
                recs["obs"].append(x.copy())
                recs["stopped"].append(res.stopped.copy())
            if not alive.any():
                break
        k += B
    if require_zero_at is not None:
        res.rejected |= res.stopped & (res.stop_time <= require_zero_at)
    if record:
        res.records = _stack_records(recs)
    return res
