"""Observation models: pre/post-change distribution pairs and K-L divergences.

A distribution pair bundles everything the detectors and simulators need to
know about the observation model: densities, CDFs, samplers and the
log-likelihood ratio (LLR).  The LLR is always a first-class function of the
pair, never reconstructed from density ratios at run time, and densities are
evaluated in log space so the tails do not underflow.

Only the Gaussian mean-shift pair ships built in.  Any object exposing the
same surface (``f0``, ``f1``, ``cdf0``, ``cdf1``, ``sample0``, ``sample1``,
``llr``, ``monotone_llr``) can be passed wherever a pair is expected;
``CustomPair`` is a convenience wrapper for that case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.stats import norm

__all__ = [
    "GaussianPair",
    "CustomPair",
    "KlReport",
    "gaussian_mean_shift",
    "kl_divergence",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianPair:
    """Mean shift in Gaussian noise: N(mu0, sigma^2) before, N(mu1, sigma^2) after.

    The LLR is affine, ``llr(x) = llr_slope * x + llr_intercept``, hence
    monotone, so censoring regions can be expressed directly in observation
    space.  Immutable and safely shareable across concurrent replications;
    samplers take the RNG stream as an explicit argument.
    """

    mu0: float
    mu1: float
    sigma: float

    @property
    def monotone_llr(self) -> bool:
        return True

    @property
    def llr_slope(self) -> float:
        return (self.mu1 - self.mu0) / self.sigma**2

    @property
    def llr_intercept(self) -> float:
        return -(self.mu1**2 - self.mu0**2) / (2.0 * self.sigma**2)

    def llr(self, x):
        """Log-likelihood ratio ln(f1(x)/f0(x)); scalar or ndarray."""
        return self.llr_slope * np.asarray(x, dtype=float) + self.llr_intercept

    def logf0(self, x):
        z = (np.asarray(x, dtype=float) - self.mu0) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def logf1(self, x):
        z = (np.asarray(x, dtype=float) - self.mu1) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def f0(self, x):
        return np.exp(self.logf0(x))

    def f1(self, x):
        return np.exp(self.logf1(x))

    def cdf0(self, x):
        return norm.cdf(x, loc=self.mu0, scale=self.sigma)

    def cdf1(self, x):
        return norm.cdf(x, loc=self.mu1, scale=self.sigma)

    def quantile0(self, q):
        return norm.ppf(q, loc=self.mu0, scale=self.sigma)

    def sample0(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu0, self.sigma, size)

    def sample1(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu1, self.sigma, size)

    def closed_form_kl(self) -> tuple[float, float]:
        d = (self.mu1 - self.mu0) ** 2 / (2.0 * self.sigma**2)
        return d, d


@dataclass(frozen=True)
class CustomPair:
    """User-supplied distribution pair.

    All callables must be vectorized over numpy arrays if the pair is to be
    used with the Monte Carlo engine.  ``quantile0`` is optional; when absent
    the censoring optimizer falls back to root finding on ``cdf0``.
    """

    f0: Callable
    f1: Callable
    cdf0: Callable
    cdf1: Callable
    sample0: Callable
    sample1: Callable
    llr: Callable
    monotone_llr: bool = False
    quantile0: Optional[Callable] = None


@dataclass(frozen=True)
class KlReport:
    """Both K-L divergences of a pair, in nats, and how they were computed."""

    i_f1_f0: float
    i_f0_f1: float
    method: str  # "closed_form" | "quadrature"


def gaussian_mean_shift(mu0: float, mu1: float, sigma: float) -> GaussianPair:
    """Build the Gaussian mean-shift pair N(mu0, sigma^2) -> N(mu1, sigma^2).

    Rejects ``sigma <= 0`` and ``mu0 == mu1``: identical distributions have
    zero divergence and make every detection statistic degenerate.
    """
    if not (sigma > 0.0) or not math.isfinite(sigma):
        raise ValueError(f"sigma must be a positive finite real, got {sigma}")
    if not (math.isfinite(mu0) and math.isfinite(mu1)):
        raise ValueError("mu0 and mu1 must be finite")
    if mu0 == mu1:
        raise ValueError("mu0 == mu1 gives zero divergence; the pair is inadmissible")
    return GaussianPair(float(mu0), float(mu1), float(sigma))


def _kl_by_quadrature(pair) -> tuple[float, float]:
    # E1[llr] and E_inf[-llr], each as an adaptive quadrature over the real
    # line; a non-convergent integral means the divergence is not finite.
    def post(x):
        return pair.f1(x) * pair.llr(x)

    def pre(x):
        return -pair.f0(x) * pair.llr(x)

    values = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for name, fn in (("I(f1||f0)", post), ("I(f0||f1)", pre)):
            try:
                value, _ = integrate.quad(fn, -np.inf, np.inf, epsabs=1e-8, limit=200)
            except integrate.IntegrationWarning as warn:
                raise ValueError(
                    f"quadrature for {name} did not converge ({warn}); "
                    "the divergence appears infinite and the pair is inadmissible"
                ) from None
            values.append(value)
    return values[0], values[1]


def kl_divergence(pair, zero_tol: float = 1e-12) -> KlReport:
    """Compute I(f1||f0) and I(f0||f1) for an admitted pair.

    Uses the pair's closed form when it provides one, otherwise adaptive
    quadrature with absolute tolerance 1e-8.  Non-finite or (numerically)
    zero divergences violate the finiteness assumption and are rejected.
    """
    if hasattr(pair, "closed_form_kl"):
        i10, i01 = pair.closed_form_kl()
        method = "closed_form"
    else:
        i10, i01 = _kl_by_quadrature(pair)
        method = "quadrature"
    for name, value in (("I(f1||f0)", i10), ("I(f0||f1)", i01)):
        if not math.isfinite(value):
            raise ValueError(f"{name} is not finite; pair violates the divergence assumption")
        if value <= zero_tol:
            raise ValueError(
                f"{name} = {value:g} is not strictly positive; pair is inadmissible"
            )
    return KlReport(float(i10), float(i01), method)
