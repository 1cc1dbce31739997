"""Normal-approximation achievable rate over a quasi-static Rayleigh block-fading link."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .specfun import (DEFAULT_LOG_STEP, DEFAULT_MC_SAMPLES, RandomStream, expectation,
                      gaussian_q_inv, sample_exponential)

LOG2E = 1.0 / math.log(2.0)


class Fading(enum.Enum):
    """Distribution of the squared envelope ``Z = |h|**2``."""

    RAYLEIGH = "rayleigh"  # Z ~ Exp(1)


@dataclass(frozen=True)
class ChannelConfig:
    n: int = 500
    fading: Fading = Fading.RAYLEIGH

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ValueError("blocklength n must be an integer >= 2")
        if not isinstance(self.fading, Fading):
            raise ValueError(f"unknown fading law {self.fading!r}")


@dataclass(frozen=True)
class OperatingPoint:
    """Linear SNR, decoding error probability and delay exponent (per symbol)."""

    rho: float
    epsilon: float
    theta: float

    def __post_init__(self):
        if not self.rho >= 0.0:
            raise ValueError("rho must be >= 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0,1)")
        if not self.theta >= 0.0:
            raise ValueError("theta must be >= 0")


@dataclass(frozen=True)
class Quadrature:
    step: float = DEFAULT_LOG_STEP


@dataclass
class MonteCarlo:
    stream: RandomStream
    count: int = DEFAULT_MC_SAMPLES


def dispersion_coefficient(cfg: ChannelConfig, epsilon: float, shannon: bool = False) -> float:
    """``Q^-1(eps) * log2(e) / sqrt(n)``, or 0 for the Shannon rate."""
    if shannon:
        return 0.0
    return float(gaussian_q_inv(epsilon)) * LOG2E / math.sqrt(cfg.n)


def _rate(rho_z, coef):
    log_u = np.log1p(rho_z)
    gamma = np.sqrt(-np.expm1(-2.0 * log_u))
    return log_u * LOG2E - coef * gamma


def achievable_rate(cfg: ChannelConfig, rho, z, epsilon: float, clamp: bool = False,
                    shannon: bool = False):
    """Rate in bpcu at SNR ``rho`` and fading power ``z`` (array-friendly in ``z``).

    With ``shannon=True`` the dispersion penalty is dropped.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0,1)")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("fading power z must be >= 0")
    r = _rate(rho * z, dispersion_coefficient(cfg, epsilon, shannon))
    if clamp:
        r = np.maximum(r, 0.0)
    return r[()]


def zero_rate_threshold(coef: float) -> float:
    """The positive ``w = rho*z`` at which the rate changes sign.

    The rate is 0 at ``w = 0``, dips below zero, has a single minimum and
    then increases, so for ``coef > 0`` there is exactly one positive root.
    Returns 0 when ``coef <= 0`` (the rate is never negative).
    """
    if coef <= 0.0:
        return 0.0
    hi = (coef + 1.0) * math.log(2.0)  # log(1+w) > coef*ln2 >= coef*gamma*ln2 here
    root = optimize.brentq(lambda s: float(_rate(math.exp(s), coef)), -690.0, hi,
                           xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return math.exp(root)


def expected_rate(cfg: ChannelConfig, rho: float, epsilon: float, shannon: bool = False) -> float:
    """``E[max(r, 0)]`` over the fading law, in bpcu.

    The clamp is integrated exactly: with ``z0`` the rate's zero crossing,
    memorylessness of ``Z`` gives ``exp(-z0) * E[r(z0 + Z)]``.
    """
    if not rho >= 0.0:
        raise ValueError("rho must be >= 0")
    if rho == 0.0:
        return 0.0
    coef = dispersion_coefficient(cfg, epsilon, shannon)
    z0 = zero_rate_threshold(coef) / rho
    if z0 > 745.0:
        return 0.0
    tail = expectation(lambda w: _rate(rho * (z0 + w), coef))
    return math.exp(-z0) * max(tail, 0.0)


def expected_rate_derivative(cfg: ChannelConfig, rho: float, epsilon: float,
                             shannon: bool = False) -> float:
    """``d/drho E[max(r, 0)]``; the clamp boundary contributes nothing since r = 0 there."""
    if not rho > 0.0:
        raise ValueError("rho must be > 0")
    coef = dispersion_coefficient(cfg, epsilon, shannon)
    z0 = zero_rate_threshold(coef) / rho
    if z0 > 745.0:
        return 0.0

    def dr_drho(w):
        z = z0 + w
        u = 1.0 + rho * z
        out = z / u * LOG2E
        if coef:
            gamma = np.sqrt(-np.expm1(-2.0 * np.log1p(rho * z)))
            out = out - coef * z / (u**3 * gamma)
        return out

    return math.exp(-z0) * expectation(dr_drho)


def _psi_integrand(cfg, rho, epsilon, theta, coef):
    # (psi - 1) integrand: (1 - eps) * expm1(-n*theta*r)
    def f(z):
        return (1.0 - epsilon) * np.expm1(-cfg.n * theta * _rate(rho * z, coef))
    return f


def rate_functional_expectation(cfg: ChannelConfig, rho: float, epsilon: float, theta: float,
                                method=None, shannon: bool = False) -> float:
    """``psi = E[eps + (1 - eps) * exp(-n*theta*r(Z))]`` with the unclamped rate.

    ``method`` is :class:`Quadrature` (default) or :class:`MonteCarlo`.
    """
    return 1.0 + rate_functional_excess(cfg, rho, epsilon, theta, method, shannon)


def rate_functional_excess(cfg: ChannelConfig, rho: float, epsilon: float, theta: float,
                           method=None, shannon: bool = False) -> float:
    """``psi - 1`` evaluated without cancellation (useful for small ``theta``)."""
    _check_psi_args(rho, epsilon, theta)
    if rho == 0.0 or epsilon == 1.0:
        return 0.0
    method = method or Quadrature()
    coef = dispersion_coefficient(cfg, epsilon, shannon)
    f = _psi_integrand(cfg, rho, epsilon, theta, coef)
    if isinstance(method, MonteCarlo):
        return float(np.mean(f(sample_exponential(method.stream, method.count))))
    return expectation(f, step=method.step)


def rate_functional_monte_carlo(cfg: ChannelConfig, rho: float, epsilon: float, theta: float,
                                stream: RandomStream, count: int = DEFAULT_MC_SAMPLES,
                                shannon: bool = False) -> tuple[float, float]:
    """Monte Carlo ``psi`` and its standard error."""
    _check_psi_args(rho, epsilon, theta)
    if count < 1:
        raise ValueError("Monte Carlo needs count >= 1")
    coef = dispersion_coefficient(cfg, epsilon, shannon)
    values = _psi_integrand(cfg, rho, epsilon, theta, coef)(sample_exponential(stream, count))
    stderr = float(np.std(values, ddof=1) / math.sqrt(count)) if count > 1 else math.inf
    return 1.0 + float(np.mean(values)), stderr


def _check_psi_args(rho, epsilon, theta):
    if not rho >= 0.0:
        raise ValueError("rho must be >= 0")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0,1)")
    if not theta > 0.0:
        raise ValueError("theta must be > 0")
