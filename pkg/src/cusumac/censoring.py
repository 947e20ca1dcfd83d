"""Censoring strategies and the rate-constrained divergence-maximizing optimizer.

A censoring strategy sends an observation only when it falls outside a single
no-send interval; the interval lives in likelihood-ratio space and, for
monotone-LLR pairs, equivalently in observation space (which is the cheap
comparison a sensor actually performs).  ``optimize`` returns, for a given
pre-change send probability ``epsilon``, the strategy maximizing the
post-censoring K-L divergence

    E1[censored_llr] = integral of f1*llr over the send region
                       + p1_nosend * ln(p1_nosend / p0_nosend).

The no-send event itself carries the constant log-likelihood ratio
``ln(p1_nosend / p0_nosend)``, so a censored stream is still informative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize as sp_optimize

__all__ = ["CensoringStrategy", "optimize", "full_rate_strategy"]

# Rates below this make the censored LLR and drift collapse toward zero,
# which blows up every downstream Monte Carlo horizon.
MIN_RATE = 1e-3

_QUANTILE_MARGIN = 1e-6
_GRID_POINTS = 256
_TIE_TOL = 1e-10


@dataclass(frozen=True)
class CensoringStrategy:
    """A send/no-send rule with its rate and information bookkeeping.

    ``rate`` is the pre-change send probability.  The no-send region is the
    closed interval [``nosend_x_lo``, ``nosend_x_hi``] in observation space
    when ``monotone`` is true (the corresponding LLR-space bounds are stored
    alongside); otherwise only the LLR-space interval is meaningful and
    ``apply`` needs the distribution pair to evaluate the LLR.  The empty
    no-send interval of the full-rate strategy is encoded as (+inf, +inf).
    """

    rate: float
    nosend_llr_lo: float
    nosend_llr_hi: float
    nosend_x_lo: float
    nosend_x_hi: float
    llr_censored: float
    p0_nosend: float
    p1_nosend: float
    post_kl: float
    monotone: bool = True

    @property
    def is_full_rate(self) -> bool:
        return self.p0_nosend == 0.0

    def apply(self, x, pair=None):
        """Send decision for observation(s) ``x``: True means transmit.

        Monotone strategies compare the observation against the interval
        bounds directly; otherwise the pair's LLR is computed and compared
        against the LLR-space bounds.
        """
        if self.monotone:
            x = np.asarray(x)
            inside = (x >= self.nosend_x_lo) & (x <= self.nosend_x_hi)
        else:
            if pair is None:
                raise ValueError(
                    "strategy has no observation-space interval; pass the pair "
                    "so the likelihood ratio can be evaluated"
                )
            v = np.asarray(pair.llr(x))
            inside = (v >= self.nosend_llr_lo) & (v <= self.nosend_llr_hi)
        send = ~inside
        return bool(send) if send.ndim == 0 else send

    def censored_llr(self, sent: bool, x=None, pair=None) -> float:
        """LLR increment of a (sent, x) outcome under this strategy.

        A sent observation contributes its raw LLR; a no-send slot
        contributes the stored constant ``llr_censored``.  Inconsistent
        combinations (sent without a value, a value without sending, or a
        sent value inside the no-send region) are rejected.
        """
        if sent:
            if x is None:
                raise ValueError("sent=True requires the observation value")
            if pair is None:
                raise ValueError("sent=True requires the pair to evaluate the raw LLR")
            if not self.apply(x, pair):
                raise ValueError(
                    f"x={x!r} lies inside the no-send region; (sent=True, x) is inconsistent"
                )
            return float(pair.llr(x))
        if x is not None:
            raise ValueError("sent=False must not carry an observation value")
        return self.llr_censored

    def post_change_rate(self) -> float:
        """Send probability after the change, 1 - p1_nosend (diagnostic)."""
        return 1.0 - self.p1_nosend

    def to_record(self) -> dict:
        """Flat record for caching; float fields round-trip exactly via repr."""
        return {
            "rate": self.rate,
            "nosend_llr_lo": self.nosend_llr_lo,
            "nosend_llr_hi": self.nosend_llr_hi,
            "nosend_x_lo": self.nosend_x_lo,
            "nosend_x_hi": self.nosend_x_hi,
            "llr_censored": self.llr_censored,
            "p0_nosend": self.p0_nosend,
            "p1_nosend": self.p1_nosend,
            "post_kl": self.post_kl,
            "monotone": int(self.monotone),
        }

    @classmethod
    def from_record(cls, record: dict) -> "CensoringStrategy":
        return cls(
            rate=float(record["rate"]),
            nosend_llr_lo=float(record["nosend_llr_lo"]),
            nosend_llr_hi=float(record["nosend_llr_hi"]),
            nosend_x_lo=float(record["nosend_x_lo"]),
            nosend_x_hi=float(record["nosend_x_hi"]),
            llr_censored=float(record["llr_censored"]),
            p0_nosend=float(record["p0_nosend"]),
            p1_nosend=float(record["p1_nosend"]),
            post_kl=float(record["post_kl"]),
            monotone=bool(int(record["monotone"])),
        )


def full_rate_strategy(pair) -> CensoringStrategy:
    """Degenerate strategy that transmits everything (rate 1, empty interval)."""
    from .model import kl_divergence

    kl = kl_divergence(pair)
    return CensoringStrategy(
        rate=1.0,
        nosend_llr_lo=math.inf,
        nosend_llr_hi=math.inf,
        nosend_x_lo=math.inf,
        nosend_x_hi=math.inf,
        llr_censored=0.0,
        p0_nosend=0.0,
        p1_nosend=0.0,
        post_kl=kl.i_f1_f0,
        monotone=True,
    )


def _quantile0(pair):
    q = getattr(pair, "quantile0", None)
    if q is not None:
        return q

    def by_root(p):
        # Expand a bracket around zero until cdf0 straddles p, then refine.
        lo, hi = -1.0, 1.0
        while pair.cdf0(lo) > p:
            lo *= 2.0
        while pair.cdf0(hi) < p:
            hi *= 2.0
        return sp_optimize.brentq(lambda x: pair.cdf0(x) - p, lo, hi, xtol=1e-10)

    return by_root


def _send_region_kl(pair, lo: float, hi: float) -> float:
    """Integral of f1*llr over the send region (-inf, lo) u (hi, inf)."""

    def g(x):
        return pair.f1(x) * pair.llr(x)

    left, _ = integrate.quad(g, -np.inf, lo, epsabs=1e-8, limit=200)
    right, _ = integrate.quad(g, hi, np.inf, epsabs=1e-8, limit=200)
    return left + right


def _evaluate_interval(pair, lo: float, hi: float) -> tuple[float, float, float, float]:
    """(post_kl, p0_nosend, p1_nosend, llr_censored) for no-send interval [lo, hi]."""
    p0 = float(pair.cdf0(hi) - pair.cdf0(lo))
    p1 = float(pair.cdf1(hi) - pair.cdf1(lo))
    llr_c = math.log(p1 / p0)
    post = _send_region_kl(pair, lo, hi) + p1 * llr_c
    return post, p0, p1, llr_c


def _golden_max(f, lo: float, hi: float, tol: float = 1e-9) -> float:
    """Golden-section maximizer on [lo, hi]; returns the abscissa."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def optimize(pair, epsilon: float) -> CensoringStrategy:
    """Strategy with pre-change send probability ``epsilon`` and maximal post-censoring K-L.

    The no-send interval's lower endpoint is searched on a 256-point grid
    (refined by golden section); for each candidate the upper endpoint is
    pinned by the rate constraint cdf0(hi) - cdf0(lo) = 1 - epsilon.  Ties
    within 1e-10 nats resolve to the smallest lower endpoint.  Requires a
    monotone-LLR pair; epsilon = 1 short-circuits to the full-rate strategy
    and rates below 1e-3 are rejected as degenerate.
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return full_rate_strategy(pair)
    if epsilon < MIN_RATE:
        raise ValueError(
            f"epsilon={epsilon} below {MIN_RATE}: censored drift degenerates to zero"
        )
    if not getattr(pair, "monotone_llr", False):
        raise NotImplementedError(
            "the interval optimizer searches in observation space and needs a "
            "monotone likelihood ratio; build the strategy manually otherwise"
        )

    quantile0 = _quantile0(pair)
    nosend_mass = 1.0 - epsilon

    def upper_for(lo: float) -> float:
        return float(quantile0(float(pair.cdf0(lo)) + nosend_mass))

    def objective(lo: float) -> float:
        return _evaluate_interval(pair, lo, upper_for(lo))[0]

    # Feasible lower endpoints satisfy cdf0(lo) <= epsilon so the pinned upper
    # endpoint stays inside the support; a 1e-6 margin keeps both solvable.
    l_min = float(quantile0(_QUANTILE_MARGIN))
    l_max = float(quantile0(epsilon - _QUANTILE_MARGIN))
    grid = np.linspace(l_min, l_max, _GRID_POINTS)
    values = np.array([objective(l) for l in grid])

    best_value = values.max()
    best_idx = int(np.nonzero(values >= best_value - _TIE_TOL)[0][0])
    lo_bracket = grid[max(best_idx - 1, 0)]
    hi_bracket = grid[min(best_idx + 1, len(grid) - 1)]
    lo_star = _golden_max(objective, float(lo_bracket), float(hi_bracket))
    if objective(lo_star) < values[best_idx]:
        lo_star = float(grid[best_idx])

    hi_star = upper_for(lo_star)
    post, p0, p1, llr_c = _evaluate_interval(pair, lo_star, hi_star)
    llr_at_lo = float(pair.llr(lo_star))
    llr_at_hi = float(pair.llr(hi_star))
    return CensoringStrategy(
        rate=float(epsilon),
        nosend_llr_lo=min(llr_at_lo, llr_at_hi),
        nosend_llr_hi=max(llr_at_lo, llr_at_hi),
        nosend_x_lo=float(lo_star),
        nosend_x_hi=float(hi_star),
        llr_censored=llr_c,
        p0_nosend=p0,
        p1_nosend=p1,
        post_kl=post,
        monotone=True,
    )
