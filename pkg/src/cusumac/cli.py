"""Command-line front end: declarative experiment configs and canned sweeps.

Experiments are described in an INI-style file with one section per
experiment plus a ``[meta]`` section; every key is validated against the
experiment kind before any simulation starts, and unknown keys or sections
are hard errors (a typo in a statistical parameter must not be ignored).
Each run writes one results CSV per experiment and a manifest holding the
fully resolved configuration; the manifest is itself a valid config whose
re-run reproduces the CSVs byte for byte, because all randomness flows from
the single recorded seed.

``--reproduce fig4|fig5|fig6`` runs the canned experiments: delay versus
false-alarm level for the adaptive-censoring detector against plain CuSum at
communication budgets 0.7 (fig4) and 0.4 (fig5), and delay versus
communication rate at ARLFA 10^4 against the random-transmission baseline
(fig6).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .calibration import (
    DEFAULT_A1_GRID,
    DEFAULT_EPS1_GRID,
    CalibrationTarget,
    calibrate_threshold,
    search_two_level,
)
from .censoring import optimize
from .detectors import CusumSpec, RandomTxSpec, simulate_trace, two_level
from .model import gaussian_mean_shift
from .montecarlo import (
    delay_samples,
    derive_seed,
    estimate_arlfa,
    estimate_comm_rate,
    estimate_delay,
    paired_gap,
    pre_change_run,
    summarize,
)

__all__ = ["main", "run", "reproduce", "ExperimentSpec", "parse_config",
           "REFERENCE_TWO_LEVEL_PARAMS"]

KINDS = ("trace", "arlfa", "delay", "rate", "delay_vs_arlfa", "delay_vs_rate", "calibrate")

# Reference (a1, eps1) operating points for the delay-vs-rate sweep at
# ARLFA 10^4 with three identical Gaussian sensors: the admissible
# minimum-delay candidates found by scripts/derive_reference_params.py
# (network send rate within budget, threshold calibrated per point).
REFERENCE_TWO_LEVEL_PARAMS = {
    0.1: (1.6, 0.055),
    0.2: (1.2, 0.09),
    0.3: (0.8, 0.135),
    0.4: (0.8, 0.24),
    0.5: (0.8, 0.375),
    0.6: (0.4, 0.36),
    0.7: (0.4, 0.42),
    0.8: (0.8, 0.72),
    0.9: (0.4, 0.81),
}

# Operating points for the delay-vs-ARLFA comparisons at budgets 0.7 and 0.4
# (the canned fig4/fig5 runs keep these fixed across the ARLFA grid).
FIG45_TWO_LEVEL_PARAMS = {0.7: (0.78, 0.63), 0.4: (0.79, 0.27)}

RESULT_COLUMNS = [
    "experiment", "kind", "config_hash", "detector", "m", "mu0", "mu1", "sigma",
    "a", "a1", "eps1", "epsilon", "zeta_target", "nu", "horizon", "mode",
    "metric", "mean", "std_error", "n_reps", "truncated_reps", "seed",
]
TRACE_COLUMNS = ["k", "s", "level", "sent", "stopped"]
SEARCH_COLUMNS = ["a1", "eps1", "a", "arlfa_mean", "arlfa_se", "rate_mean", "rate_se",
                  "delay_mean", "delay_se", "eprime_verdict", "eprime_margin",
                  "admissible", "note"]


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass
class ExperimentSpec:
    """One declarative experiment; unknown keys are rejected at parse time."""

    name: str
    kind: str
    mu0: float = 0.0
    mu1: float = 0.5
    sigma: float = 1.0
    m: int = 1
    detector: str = "cusum"
    a: Optional[float] = None
    a1: Optional[float] = None
    eps1: Optional[float] = None
    epsilon: Optional[float] = None
    zeta: Optional[float] = None
    zeta_grid: tuple[float, ...] = ()
    epsilon_grid: tuple[float, ...] = ()
    a1_grid: tuple[float, ...] = ()
    eps1_grid: tuple[float, ...] = ()
    nu: int = 1
    n_reps: int = 2000
    horizon: int = 10_000
    cap: Optional[int] = None
    mode: str = "no_stop"
    worst_history: bool = False
    tolerance: float = 0.05
    seed: Optional[int] = None  # resolved from meta when absent


_FIELD_PARSERS = {
    "mu0": float, "mu1": float, "sigma": float, "m": int,
    "detector": str, "a": float, "a1": float, "eps1": float, "epsilon": float,
    "zeta": float, "nu": int, "n_reps": int, "horizon": int, "cap": int,
    "mode": str, "tolerance": float, "seed": int,
}
_GRID_FIELDS = ("zeta_grid", "epsilon_grid", "a1_grid", "eps1_grid")
_BOOL_FIELDS = ("worst_history",)

_KEYS_COMMON = {"kind", "mu0", "mu1", "sigma", "m", "seed"}
_KEYS_BY_KIND = {
    "trace": _KEYS_COMMON | {"detector", "a", "a1", "eps1", "epsilon", "nu", "horizon"},
    "arlfa": _KEYS_COMMON | {"detector", "a", "a1", "eps1", "epsilon", "n_reps", "cap"},
    "delay": _KEYS_COMMON | {"detector", "a", "a1", "eps1", "epsilon", "n_reps", "nu",
                             "cap", "worst_history"},
    "rate": _KEYS_COMMON | {"detector", "a", "a1", "eps1", "epsilon", "n_reps",
                            "horizon", "mode"},
    "delay_vs_arlfa": _KEYS_COMMON | {"zeta_grid", "a1", "eps1", "epsilon", "n_reps",
                                      "tolerance"},
    "delay_vs_rate": _KEYS_COMMON | {"zeta", "epsilon_grid", "n_reps", "tolerance"},
    "calibrate": _KEYS_COMMON | {"zeta", "epsilon", "a1_grid", "eps1_grid", "n_reps",
                                 "nu", "tolerance", "horizon"},
}


def _parse_grid(text: str) -> tuple[float, ...]:
    vals = tuple(float(tok) for tok in text.replace(",", " ").split())
    if not vals:
        raise ConfigError(f"empty grid: {text!r}")
    return vals


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(path) -> tuple[dict, list[ExperimentSpec]]:
    """Parse a config file into run settings and validated experiment specs."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    meta: dict = {}
    specs: list[ExperimentSpec] = []
    for section in parser.sections():
        if section == "meta":
            for key, value in parser.items(section):
                if key == "seed":
                    meta["seed"] = int(value)
                elif key == "threads":
                    meta["threads"] = int(value)
                elif key == "reps":
                    meta["reps"] = int(value)
                else:
                    raise ConfigError(f"unknown key {key!r} in [meta]")
        elif section == "provenance":
            continue  # written by previous runs; carries no settings
        elif section.startswith("experiment:"):
            name = section.split(":", 1)[1].strip()
            if not name:
                raise ConfigError("experiment section needs a name")
            items = dict(parser.items(section))
            kind = items.get("kind")
            if kind not in KINDS:
                raise ConfigError(f"experiment {name!r}: unknown kind {kind!r}")
            allowed = _KEYS_BY_KIND[kind]
            spec = ExperimentSpec(name=name, kind=kind)
            for key, value in items.items():
                if key == "kind":
                    continue
                if key not in allowed:
                    raise ConfigError(f"experiment {name!r}: unknown key {key!r} "
                                      f"for kind {kind!r}")
                if key in _GRID_FIELDS:
                    setattr(spec, key, _parse_grid(value))
                elif key in _BOOL_FIELDS:
                    setattr(spec, key, _parse_bool(value))
                else:
                    setattr(spec, key, _FIELD_PARSERS[key](value))
            _validate_spec(spec)
            specs.append(spec)
        else:
            raise ConfigError(f"unknown section [{section}]")
    return meta, specs


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate_spec(spec: ExperimentSpec):
    _require(spec.sigma > 0, f"{spec.name}: sigma must be positive")
    _require(spec.mu0 != spec.mu1, f"{spec.name}: mu0 and mu1 must differ")
    _require(spec.m >= 1, f"{spec.name}: m must be at least 1")
    _require(spec.nu >= 1, f"{spec.name}: nu must be at least 1")
    if spec.kind in ("trace", "arlfa", "delay", "rate"):
        _require(spec.detector in ("cusum", "cusum_ac", "random_tx"),
                 f"{spec.name}: unknown detector {spec.detector!r}")
        _require(spec.a is not None and spec.a >= 0,
                 f"{spec.name}: threshold a is required and must be nonnegative")
        if spec.detector == "cusum_ac":
            _require(spec.a1 is not None and spec.eps1 is not None,
                     f"{spec.name}: cusum_ac needs a1 and eps1")
            _require(0 < spec.a1 < spec.a, f"{spec.name}: need 0 < a1 < a")
            _require(1e-3 < spec.eps1 <= 1, f"{spec.name}: eps1 must lie in (1e-3, 1]")
        if spec.detector == "random_tx":
            _require(spec.epsilon is not None and 0 <= spec.epsilon <= 1,
                     f"{spec.name}: random_tx needs epsilon in [0, 1]")
    if spec.kind == "trace":
        _require(spec.m == 1, f"{spec.name}: trace supports a single sensor")
        _require(spec.horizon >= 1, f"{spec.name}: horizon must be positive")
    if spec.kind in ("arlfa", "delay", "delay_vs_arlfa", "delay_vs_rate", "calibrate"):
        _require(spec.n_reps >= 100, f"{spec.name}: n_reps must be at least 100")
    if spec.kind == "rate":
        _require(spec.horizon >= 10_000, f"{spec.name}: rate horizon must be >= 10000")
        _require(spec.mode in ("no_stop", "conditional"),
                 f"{spec.name}: mode must be no_stop or conditional")
        _require(spec.n_reps >= 2, f"{spec.name}: n_reps must be at least 2")
    if spec.kind == "delay_vs_arlfa":
        _require(bool(spec.zeta_grid), f"{spec.name}: zeta_grid is required")
        _require(all(z >= 1 for z in spec.zeta_grid), f"{spec.name}: zeta values must be >= 1")
        _require(spec.a1 is not None and spec.eps1 is not None,
                 f"{spec.name}: a1 and eps1 are required")
        _require(spec.eps1 is not None and 1e-3 < spec.eps1 <= 1,
                 f"{spec.name}: eps1 must lie in (1e-3, 1]")
    if spec.kind == "delay_vs_rate":
        _require(spec.zeta is not None and spec.zeta >= 1, f"{spec.name}: zeta >= 1 required")
        _require(bool(spec.epsilon_grid), f"{spec.name}: epsilon_grid is required")
        for eps in spec.epsilon_grid:
            _require(0 < eps < 1, f"{spec.name}: epsilon grid values must lie in (0, 1)")
            _require(round(eps, 2) in REFERENCE_TWO_LEVEL_PARAMS,
                     f"{spec.name}: no reference (a1, eps1) for epsilon={eps}; "
                     f"available: {sorted(REFERENCE_TWO_LEVEL_PARAMS)}")
    if spec.kind == "calibrate":
        _require(spec.zeta is not None and spec.zeta >= 1, f"{spec.name}: zeta >= 1 required")
        _require(spec.epsilon is not None and 0 < spec.epsilon <= 1,
                 f"{spec.name}: epsilon in (0, 1] required")
        for e in spec.eps1_grid:
            _require(1e-3 < e <= 1, f"{spec.name}: eps1 grid values must lie in (1e-3, 1]")
    _require(0 < spec.tolerance < 1, f"{spec.name}: tolerance must lie in (0, 1)")


def _spec_to_items(spec: ExperimentSpec) -> dict:
    """Fully resolved key/value view of a spec (manifest form)."""
    out = {"kind": spec.kind}
    allowed = _KEYS_BY_KIND[spec.kind]
    for f in fields(ExperimentSpec):
        if f.name in ("name", "kind") or f.name not in allowed:
            continue
        value = getattr(spec, f.name)
        if value is None or value == () :
            continue
        if f.name in _GRID_FIELDS:
            out[f.name] = " ".join(repr(v) for v in value)
        elif isinstance(value, bool):
            out[f.name] = "true" if value else "false"
        elif isinstance(value, float):
            out[f.name] = repr(value)
        else:
            out[f.name] = str(value)
    return out


def _config_hash(items: dict) -> str:
    canon = ";".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])


class _RowSink:
    def __init__(self, spec: ExperimentSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.hash = _config_hash(_spec_to_items(spec))
        self.rows: list[dict] = []

    def add(self, detector: str, metric: str, est, **extra):
        base = {
            "experiment": self.spec.name, "kind": self.spec.kind,
            "config_hash": self.hash, "detector": detector,
            "m": self.spec.m, "mu0": self.spec.mu0, "mu1": self.spec.mu1,
            "sigma": self.spec.sigma, "nu": self.spec.nu, "seed": self.seed,
            "metric": metric, "mean": est.mean, "std_error": est.std_error,
            "n_reps": est.n_reps, "truncated_reps": est.truncated_reps,
        }
        base.update(extra)
        self.rows.append(base)


def _pairs_of(spec: ExperimentSpec):
    pair = gaussian_mean_shift(spec.mu0, spec.mu1, spec.sigma)
    return pair, [pair] * spec.m


def _detector_of(spec: ExperimentSpec, pairs):
    if spec.detector == "cusum":
        return CusumSpec(spec.a)
    if spec.detector == "random_tx":
        return RandomTxSpec(spec.a, spec.epsilon)
    return two_level(pairs, spec.a, spec.a1, spec.eps1)


def run(spec: ExperimentSpec, out_dir: Path, seed: int, n_jobs: int = 1) -> list[Path]:
    """Execute one experiment; returns the paths written.

    Each experiment draws from a stream derived from the master seed and the
    experiment name (order-independent), unless the section pins its own seed.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.seed is not None:
        exp_seed = spec.seed
    else:
        exp_seed = derive_seed(seed, int.from_bytes(
            hashlib.sha256(spec.name.encode()).digest()[:4], "big"))
    handler = {
        "trace": _run_trace,
        "arlfa": _run_arlfa,
        "delay": _run_delay,
        "rate": _run_rate,
        "delay_vs_arlfa": _run_delay_vs_arlfa,
        "delay_vs_rate": _run_delay_vs_rate,
        "calibrate": _run_calibrate,
    }[spec.kind]
    return handler(spec, out_dir, exp_seed, n_jobs)


def _run_trace(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    detector = _detector_of(spec, pairs)
    rows = simulate_trace(detector, pair, spec.nu, spec.horizon, seed)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, TRACE_COLUMNS, rows)
    return [path]


def _detector_extra(spec) -> dict:
    return {"a": spec.a, "a1": spec.a1, "eps1": spec.eps1, "epsilon": spec.epsilon}


def _run_arlfa(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    detector = _detector_of(spec, pairs)
    cap = spec.cap if spec.cap is not None else 1_000_000
    sink = _RowSink(spec, seed)
    if spec.detector == "cusum_ac":
        pre = pre_change_run(detector, pairs, spec.n_reps, cap, seed, n_jobs=n_jobs)
        sink.add(spec.detector, "arlfa", pre.arlfa, **_detector_extra(spec), cap=cap)
        sink.add(spec.detector, "feedback_ratio", pre.feedback_ratio,
                 **_detector_extra(spec), cap=cap)
        sink.add(spec.detector, "frac_time_above_a1", pre.frac_time_above_a1,
                 **_detector_extra(spec), cap=cap)
    else:
        est = estimate_arlfa(detector, pairs, spec.n_reps, cap, seed, n_jobs=n_jobs)
        sink.add(spec.detector, "arlfa", est, **_detector_extra(spec), cap=cap)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS + ["cap"], sink.rows)
    return [path]


def _run_delay(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    detector = _detector_of(spec, pairs)
    est = estimate_delay(detector, pairs, spec.n_reps, seed, nu=spec.nu,
                         cap=spec.cap if spec.cap is not None else 1_000_000,
                         worst_history=spec.worst_history, n_jobs=n_jobs)
    sink = _RowSink(spec, seed)
    sink.add(spec.detector, "delay", est, **_detector_extra(spec))
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS, sink.rows)
    return [path]


def _run_rate(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    detector = _detector_of(spec, pairs)
    est = estimate_comm_rate(detector, pairs, spec.horizon, spec.n_reps, seed,
                             mode=spec.mode, n_jobs=n_jobs)
    sink = _RowSink(spec, seed)
    sink.add(spec.detector, "comm_rate", est, **_detector_extra(spec),
             horizon=spec.horizon, mode=spec.mode)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS + ["horizon", "mode"], sink.rows)
    return [path]


def _run_delay_vs_arlfa(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    strategies = [optimize(p, spec.eps1) for p in pairs]
    sink = _RowSink(spec, seed)
    warm_c = warm_ac = None
    for i, zeta in enumerate(spec.zeta_grid):
        cal_c = calibrate_threshold(lambda a: CusumSpec(a), pairs, zeta,
                                    derive_seed(seed, 10 + i), n_reps=spec.n_reps,
                                    tolerance=spec.tolerance, initial=warm_c,
                                    n_jobs=n_jobs)
        ac_of = lambda a: two_level(pairs, a, spec.a1, spec.eps1, strategies=strategies)
        cal_ac = calibrate_threshold(ac_of, pairs, zeta, derive_seed(seed, 40 + i),
                                     n_reps=spec.n_reps, tolerance=spec.tolerance,
                                     initial=warm_ac, n_jobs=n_jobs)
        warm_c, warm_ac = cal_c.a, cal_ac.a
        delay_seed = derive_seed(seed, 70 + i)
        # Both detectors consume identical observation streams, so the gap row
        # is a paired estimate with a far smaller standard error.
        samp_c, trunc_c = delay_samples(CusumSpec(cal_c.a), pairs, spec.n_reps,
                                        delay_seed, nu=spec.nu, n_jobs=n_jobs)
        samp_ac, trunc_ac = delay_samples(ac_of(cal_ac.a), pairs, spec.n_reps,
                                          delay_seed, nu=spec.nu, n_jobs=n_jobs)
        d_c = summarize(samp_c, delay_seed, trunc_c)
        d_ac = summarize(samp_ac, delay_seed, trunc_ac)
        gap = paired_gap(samp_ac, samp_c, delay_seed, trunc_c + trunc_ac)
        rate = estimate_comm_rate(ac_of(cal_ac.a), pairs, 10_000,
                                  max(100, spec.n_reps // 10),
                                  derive_seed(seed, 100 + i), n_jobs=n_jobs)
        sink.add("cusum", "arlfa", cal_c.arlfa, a=cal_c.a, epsilon=1.0, zeta_target=zeta)
        sink.add("cusum", "delay", d_c, a=cal_c.a, epsilon=1.0, zeta_target=zeta)
        sink.add("cusum_ac", "arlfa", cal_ac.arlfa, a=cal_ac.a, a1=spec.a1,
                 eps1=spec.eps1, epsilon=spec.epsilon, zeta_target=zeta)
        sink.add("cusum_ac", "delay", d_ac, a=cal_ac.a, a1=spec.a1, eps1=spec.eps1,
                 epsilon=spec.epsilon, zeta_target=zeta)
        sink.add("cusum_ac", "delay_gap_vs_cusum", gap, a=cal_ac.a, a1=spec.a1,
                 eps1=spec.eps1, epsilon=spec.epsilon, zeta_target=zeta)
        sink.add("cusum_ac", "comm_rate", rate, a=cal_ac.a, a1=spec.a1, eps1=spec.eps1,
                 epsilon=spec.epsilon, zeta_target=zeta)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS, sink.rows)
    return [path]


def _run_delay_vs_rate(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    sink = _RowSink(spec, seed)
    zeta = spec.zeta
    cal_c = calibrate_threshold(lambda a: CusumSpec(a), pairs, zeta,
                                derive_seed(seed, 7), n_reps=spec.n_reps,
                                tolerance=spec.tolerance, n_jobs=n_jobs)
    # One shared delay seed pairs every detector rep-by-rep at each grid point.
    delay_seed = derive_seed(seed, 8)
    samp_c, trunc_c = delay_samples(CusumSpec(cal_c.a), pairs, spec.n_reps,
                                    delay_seed, nu=spec.nu, n_jobs=n_jobs)
    sink.add("cusum", "arlfa", cal_c.arlfa, a=cal_c.a, epsilon=1.0, zeta_target=zeta)
    sink.add("cusum", "delay", summarize(samp_c, delay_seed, trunc_c),
             a=cal_c.a, epsilon=1.0, zeta_target=zeta)

    warm_ac = None
    for i, eps in enumerate(spec.epsilon_grid):
        a1, eps1 = REFERENCE_TWO_LEVEL_PARAMS[round(eps, 2)]
        strategies = [optimize(p, eps1) for p in pairs]
        ac_of = lambda a, a1=a1, eps1=eps1, st=strategies: two_level(
            pairs, a, a1, eps1, strategies=st)
        cal_ac = calibrate_threshold(ac_of, pairs, zeta, derive_seed(seed, 20 + i),
                                     n_reps=spec.n_reps, tolerance=spec.tolerance,
                                     initial=warm_ac, n_jobs=n_jobs)
        warm_ac = cal_ac.a
        cal_rtx = calibrate_threshold(lambda a, eps=eps: RandomTxSpec(a, eps), pairs,
                                      zeta, derive_seed(seed, 50 + i),
                                      n_reps=spec.n_reps, tolerance=spec.tolerance,
                                      n_jobs=n_jobs)
        samp_ac, trunc_ac = delay_samples(ac_of(cal_ac.a), pairs, spec.n_reps,
                                          delay_seed, nu=spec.nu, n_jobs=n_jobs)
        samp_rtx, trunc_rtx = delay_samples(RandomTxSpec(cal_rtx.a, eps), pairs,
                                            spec.n_reps, delay_seed, nu=spec.nu,
                                            n_jobs=n_jobs)
        rate_ac = estimate_comm_rate(ac_of(cal_ac.a), pairs, 10_000,
                                     max(100, spec.n_reps // 10),
                                     derive_seed(seed, 80 + i), n_jobs=n_jobs)
        sink.add("cusum_ac", "arlfa", cal_ac.arlfa, a=cal_ac.a, a1=a1, eps1=eps1,
                 epsilon=eps, zeta_target=zeta)
        sink.add("cusum_ac", "delay", summarize(samp_ac, delay_seed, trunc_ac),
                 a=cal_ac.a, a1=a1, eps1=eps1, epsilon=eps, zeta_target=zeta)
        sink.add("cusum_ac", "delay_gap_vs_cusum",
                 paired_gap(samp_ac, samp_c, delay_seed, trunc_ac + trunc_c),
                 a=cal_ac.a, a1=a1, eps1=eps1, epsilon=eps, zeta_target=zeta)
        sink.add("cusum_ac", "comm_rate", rate_ac, a=cal_ac.a, a1=a1, eps1=eps1,
                 epsilon=eps, zeta_target=zeta)
        sink.add("random_tx", "arlfa", cal_rtx.arlfa, a=cal_rtx.a, epsilon=eps,
                 zeta_target=zeta)
        sink.add("random_tx", "delay", summarize(samp_rtx, delay_seed, trunc_rtx),
                 a=cal_rtx.a, epsilon=eps, zeta_target=zeta)
        sink.add("random_tx", "delay_gap_vs_cusum_ac",
                 paired_gap(samp_rtx, samp_ac, delay_seed, trunc_rtx + trunc_ac),
                 a=cal_rtx.a, epsilon=eps, zeta_target=zeta)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS, sink.rows)
    return [path]


def _run_calibrate(spec, out_dir, seed, n_jobs):
    pair, pairs = _pairs_of(spec)
    target = CalibrationTarget(zeta=spec.zeta, epsilon=spec.epsilon, nu=spec.nu,
                               tolerance=spec.tolerance)
    a1_grid = spec.a1_grid or DEFAULT_A1_GRID
    eps1_grid = spec.eps1_grid or DEFAULT_EPS1_GRID
    result = search_two_level(pairs, target, a1_grid, eps1_grid, n_reps=spec.n_reps,
                              seed=seed, rate_horizon=spec.horizon, n_jobs=n_jobs)
    trace_path = out_dir / f"{spec.name}_trace.csv"
    _write_csv(trace_path, SEARCH_COLUMNS, [rec.to_record() for rec in result.search_trace])
    sink = _RowSink(spec, seed)
    if result.config is not None:
        cfg = result.config
        extra = {"a": cfg.a, "a1": cfg.a1, "eps1": cfg.levels[0].rate,
                 "epsilon": spec.epsilon, "zeta_target": spec.zeta}
        rep = result.report
        sink.add("cusum_ac", "arlfa", rep.arlfa, **extra)
        sink.add("cusum_ac", "delay", rep.delay, **extra)
        sink.add("cusum_ac", "comm_rate", rep.comm_rate, **extra)
        sink.add("cusum_ac", "feedback_ratio", rep.feedback_ratio, **extra)
        sink.add("cusum_ac", "frac_time_above_a1", rep.frac_time_above_a1, **extra)
    path = out_dir / f"{spec.name}.csv"
    _write_csv(path, RESULT_COLUMNS, sink.rows)
    if not result.feasible:
        print(f"warning: {spec.name}: no admissible candidate; best effort written",
              file=sys.stderr)
    return [path, trace_path]


def _canned_specs(figure: str, n_reps: int) -> list[ExperimentSpec]:
    if figure in ("fig4", "fig5"):
        budget = 0.7 if figure == "fig4" else 0.4
        a1, eps1 = FIG45_TWO_LEVEL_PARAMS[budget]
        spec = ExperimentSpec(
            name=figure, kind="delay_vs_arlfa", m=3,
            zeta_grid=(2000.0, 5000.0, 10000.0),
            a1=a1, eps1=eps1, epsilon=budget, n_reps=n_reps, tolerance=0.015)
    elif figure == "fig6":
        spec = ExperimentSpec(
            name=figure, kind="delay_vs_rate", m=3, zeta=10_000.0,
            epsilon_grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
            n_reps=n_reps, tolerance=0.015)
    else:
        raise ConfigError(f"unknown canned experiment {figure!r}")
    _validate_spec(spec)
    return [spec]


def reproduce(figure: str, out_dir, seed: int, n_reps: int = 2000, n_jobs: int = 1
              ) -> list[Path]:
    """Run one canned experiment and write its CSV plus the manifest."""
    specs = _canned_specs(figure, n_reps)
    return _run_all(specs, {"seed": seed}, Path(out_dir), seed, n_jobs)


def _write_manifest(path: Path, meta: dict, specs: list[ExperimentSpec], wall: float):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["meta"] = {k: str(v) for k, v in meta.items()}
    for spec in specs:
        parser[f"experiment:{spec.name}"] = _spec_to_items(spec)
    parser["provenance"] = {"version": __version__, "wall_time_s": f"{wall:.1f}"}
    with open(path, "w") as fh:
        parser.write(fh)


def _run_all(specs, meta, out_dir: Path, seed: int, n_jobs: int) -> list[Path]:
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in specs:
        written.extend(run(spec, out_dir, seed, n_jobs))
    manifest = out_dir / "manifest.ini"
    _write_manifest(manifest, {**meta, "seed": seed}, specs, time.time() - t0)
    written.append(manifest)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cusumac",
        description="Quickest change detection experiments with adaptive censoring.")
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--seed", type=int, help="master seed (required unless in config)")
    parser.add_argument("--reps", type=int, help="override per-experiment n_reps")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker processes")
    parser.add_argument("--reproduce", choices=("fig4", "fig5", "fig6"),
                        help="run a canned experiment instead of a config file")
    args = parser.parse_args(argv)

    try:
        if args.reproduce:
            if args.seed is None:
                raise ConfigError("--seed is required (runs must be reproducible)")
            reproduce(args.reproduce, args.out, args.seed,
                      n_reps=args.reps if args.reps else 2000,
                      n_jobs=args.threads if args.threads is not None else 1)
            return 0
        if not args.config:
            parser.print_usage(sys.stderr)
            print("error: --config or --reproduce is required", file=sys.stderr)
            return 2
        meta, specs = parse_config(args.config)
        seed = args.seed if args.seed is not None else meta.get("seed")
        if seed is None:
            raise ConfigError("a seed is required (give --seed or [meta] seed); "
                              "wall-clock seeding is not supported")
        if not (0 <= seed < 2**64):
            raise ConfigError("seed must fit in 64 bits")
        if args.reps is not None:
            for spec in specs:
                spec.n_reps = args.reps
                _validate_spec(spec)
        if not specs:
            return 0
        threads = args.threads if args.threads is not None else meta.get("threads", 1)
        _run_all(specs, meta, args.out, seed, threads)
        return 0
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # infeasible targets, calibration failure
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
