"""Effective capacity, its incomplete-gamma closed form, and effective energy efficiency.

Two ways of computing ``psi = E[eps + (1 - eps) exp(-n theta r)]`` are exposed:

* ``Method.ORACLE`` integrates the exact rate expression numerically;
* ``Method.CLOSED_FORM`` uses ``psi ~ eps + (1 - eps) J`` where

      J = T1 * E[(1+rho Z)**alpha] - T2 * E[(1+rho Z)**(alpha-2)]
        = exp(1/rho) rho**alpha [T1 Gamma(alpha+1, 1/rho) - T2 Gamma(alpha-1, 1/rho) / rho**2]

  with ``alpha = -theta n / ln 2``, ``beta = theta sqrt(n) Q^-1(eps) log2(e)``,
  ``T1 = beta**2/2 + beta + 1`` and ``T2 = T1 - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import (LOG2E, ChannelConfig, OperatingPoint, Quadrature, expected_rate,
                      rate_functional_excess)
from .specfun import gaussian_q_inv, scaled_gamma_combo, scaled_gamma_combo_derivative

# below this SNR the regrouped derivative cancels badly; differentiate under the expectation instead
_J_PRIME_DIRECT_BELOW = 1e-2


class InfeasibleError(ValueError):
    """The operating point violates a modelling assumption (e.g. an unstable queue)."""


class Method(enum.Enum):
    ORACLE = "oracle"
    CLOSED_FORM = "closed-form"


class BufferMode(enum.Enum):
    FULL = "full"
    EMPTY_AWARE = "ebp"


@dataclass(frozen=True)
class QosConfig:
    """Delay requirement: either ``theta`` directly or the pair ``(delta, lambda_out)``."""

    arrival_rate: float = 1.0
    theta: float | None = None
    delta: float | None = None
    lambda_out: float | None = None

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be > 0")
        pair = (self.delta is not None, self.lambda_out is not None)
        if self.theta is not None:
            if any(pair):
                raise ValueError("give either theta or (delta, lambda_out), not both")
            if not self.theta > 0:
                raise ValueError("theta must be > 0")
            return
        if not all(pair):
            raise ValueError("delta and lambda_out are both required when theta is not given")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if not 0 < self.lambda_out < 1:
            raise ValueError("lambda_out must lie in (0,1)")

    def resolve_theta(self, p_nb: float = 1.0) -> float:
        """Delay exponent in force at non-empty-buffer probability ``p_nb``.

        A slack delay constraint (``p_nb <= lambda_out``) resolves to 0.
        """
        if self.theta is not None:
            return self.theta
        return max(theta_from_outage(self.arrival_rate, self.delta, self.lambda_out, p_nb), 0.0)


@dataclass(frozen=True)
class PowerModelConfig:
    zeta: float = 0.2
    p_c: float = 0.2
    buffer_mode: BufferMode = BufferMode.FULL

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be > 0")
        if not self.p_c >= 0:
            raise ValueError("p_c must be >= 0")
        if not isinstance(self.buffer_mode, BufferMode):
            raise ValueError(f"unknown buffer mode {self.buffer_mode!r}")


@dataclass(frozen=True)
class ApproxTerms:
    alpha: float
    beta: float
    t1: float
    t2: float
    j_value: float | None = None
    j_prime: float | None = None


def theta_from_outage(arrival_rate: float, delta: float, lambda_out: float, p_nb: float = 1.0) -> float:
    """Delay exponent making ``p_nb * exp(-theta * lambda * delta) == lambda_out``."""
    return math.log(p_nb / lambda_out) / (arrival_rate * delta)


def delay_outage(theta: float, ec: float, delta: float) -> float:
    """Delay-violation probability ``exp(-theta * ec * delta)``."""
    if theta < 0 or ec < 0 or delta < 0:
        raise ValueError("theta, ec and delta must be >= 0")
    return math.exp(-theta * ec * delta)


def delay_bound(theta: float, ec: float, lambda_out: float) -> float:
    """Largest delay (symbols) tolerated at outage ``lambda_out``: inverse of :func:`delay_outage`."""
    if not (theta > 0 and ec > 0 and 0 < lambda_out < 1):
        raise ValueError("need theta > 0, ec > 0 and lambda_out in (0,1)")
    return -math.log(lambda_out) / (theta * ec)


def approx_terms(cfg: ChannelConfig, theta: float, epsilon: float, shannon: bool = False) -> ApproxTerms:
    alpha = -theta * cfg.n / math.log(2.0)
    beta = 0.0 if shannon else theta * math.sqrt(cfg.n) * float(gaussian_q_inv(epsilon)) * LOG2E
    t2 = 0.5 * beta * beta + beta
    return ApproxTerms(alpha=alpha, beta=beta, t1=t2 + 1.0, t2=t2)


def _check_j_args(rho, theta, epsilon):
    if not rho > 0:
        raise ValueError("rho must be > 0")
    if not theta > 0:
        raise ValueError("theta must be > 0")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0,1)")


def gamma_moments(cfg: ChannelConfig, rho: float, theta: float) -> tuple[float, float]:
    """``(E[(1+rho Z)**alpha], E[(1+rho Z)**(alpha-2)])``; independent of epsilon."""
    alpha = -theta * cfg.n / math.log(2.0)
    return scaled_gamma_combo(alpha, rho), scaled_gamma_combo(alpha - 2.0, rho)


def j_function(cfg: ChannelConfig, rho: float, theta: float, epsilon: float,
               shannon: bool = False) -> ApproxTerms:
    """Closed-form approximation of ``E[exp(-n theta r)]`` for Rayleigh fading."""
    _check_j_args(rho, theta, epsilon)
    terms = approx_terms(cfg, theta, epsilon, shannon)
    c0 = scaled_gamma_combo(terms.alpha, rho)
    c2 = scaled_gamma_combo(terms.alpha - 2.0, rho) if terms.t2 else 0.0
    return ApproxTerms(terms.alpha, terms.beta, terms.t1, terms.t2, j_value=terms.t1 * c0 - terms.t2 * c2)


def j_prime(cfg: ChannelConfig, rho: float, theta: float, epsilon: float, shannon: bool = False) -> float:
    """``dJ/drho``.

    Uses ``d/drho E[(1+rho Z)**a] = ((a rho - 1) E[(1+rho Z)**a] + 1) / rho**2``, which
    regroups to ``J' = -[(1 - alpha rho) J - 2 rho T2 E[(1+rho Z)**(alpha-2)] - 1] / rho**2``.
    """
    _check_j_args(rho, theta, epsilon)
    terms = approx_terms(cfg, theta, epsilon, shannon)
    a = terms.alpha
    if rho < _J_PRIME_DIRECT_BELOW:
        out = terms.t1 * scaled_gamma_combo_derivative(a, rho)
        if terms.t2:
            out -= terms.t2 * scaled_gamma_combo_derivative(a - 2.0, rho)
        return out
    c0 = scaled_gamma_combo(a, rho)
    c2 = scaled_gamma_combo(a - 2.0, rho) if terms.t2 else 0.0
    j = terms.t1 * c0 - terms.t2 * c2
    return -((1.0 - a * rho) * j - 2.0 * rho * terms.t2 * c2 - 1.0) / rho**2


def psi_excess(cfg: ChannelConfig, point: OperatingPoint, method: Method = Method.CLOSED_FORM,
               shannon: bool = False) -> float:
    """``psi - 1`` for either method."""
    if point.rho == 0.0:
        return 0.0
    if method is Method.ORACLE:
        return rate_functional_excess(cfg, point.rho, point.epsilon, point.theta, Quadrature(), shannon)
    j = j_function(cfg, point.rho, point.theta, point.epsilon, shannon).j_value
    return (1.0 - point.epsilon) * (j - 1.0)


def effective_capacity(cfg: ChannelConfig, point: OperatingPoint, method: Method = Method.CLOSED_FORM,
                       shannon: bool = False) -> float:
    """Effective capacity ``-log(psi) / (n theta)`` in bpcu."""
    if not point.theta > 0:
        raise ValueError("effective capacity needs theta > 0")
    excess = psi_excess(cfg, point, method, shannon)
    if not excess > -1.0:
        raise ArithmeticError(f"psi = {1.0 + excess!r} <= 0 at {point}; effective capacity undefined")
    return -math.log1p(excess) / (cfg.n * point.theta)


def non_empty_buffer_probability(cfg: ChannelConfig, rho: float, epsilon: float, arrival_rate: float,
                                 shannon: bool = False) -> float:
    """``lambda / E[r]``; infinite when the mean service rate is zero."""
    mean_rate = expected_rate(cfg, rho, epsilon, shannon)
    return arrival_rate / mean_rate if mean_rate > 0 else math.inf


def transmit_probability(cfg: ChannelConfig, qos: QosConfig, pm: PowerModelConfig, rho: float,
                         epsilon: float, shannon: bool = False) -> float:
    """``P_nb`` for the buffer mode: 1 under full buffer, ``lambda / E[r]`` otherwise."""
    if pm.buffer_mode is BufferMode.FULL:
        return 1.0
    return non_empty_buffer_probability(cfg, rho, epsilon, qos.arrival_rate, shannon)


def power_consumption(pm: PowerModelConfig, rho: float, p_nb: float = 1.0) -> float:
    return p_nb * pm.zeta * rho + pm.p_c


def resolve_point(cfg: ChannelConfig, qos: QosConfig, pm: PowerModelConfig, rho: float, epsilon: float,
                  shannon: bool = False) -> OperatingPoint:
    """Operating point whose delay exponent comes from ``qos`` at the buffer mode's ``P_nb``."""
    if qos.theta is not None:
        return OperatingPoint(rho, epsilon, qos.theta)
    p_nb = transmit_probability(cfg, qos, pm, rho, epsilon, shannon)
    if not p_nb <= 1.0:
        raise InfeasibleError(f"queue unstable at rho={rho!r}: arrival rate exceeds E[r] (P_nb={p_nb:.6g})")
    return OperatingPoint(rho, epsilon, qos.resolve_theta(p_nb))


def eee(cfg: ChannelConfig, qos: QosConfig, pm: PowerModelConfig, point: OperatingPoint,
        method: Method = Method.CLOSED_FORM, strict: bool = True, shannon: bool = False) -> float:
    """Effective energy efficiency in bpcu/W for the configured buffer mode.

    Under ``EMPTY_AWARE`` the amplifier term is scaled by ``P_nb = lambda / E[r]``;
    ``strict`` raises :class:`InfeasibleError` when ``P_nb > 1`` (unstable queue),
    otherwise the formula is evaluated as written. A negative effective
    capacity (possible where the normal approximation gives negative rates
    at extremely low SNR) is reported as zero efficiency.
    """
    p_nb = transmit_probability(cfg, qos, pm, point.rho, point.epsilon, shannon)
    if strict and not p_nb <= 1.0:
        raise InfeasibleError(
            f"queue unstable at rho={point.rho!r}: arrival rate {qos.arrival_rate} exceeds E[r] (P_nb={p_nb:.6g})")
    power = power_consumption(pm, point.rho, p_nb)
    if point.rho == 0.0 or not np.isfinite(power):
        return 0.0
    return max(effective_capacity(cfg, point, method, shannon), 0.0) / power


def shannon_baseline_eee(cfg: ChannelConfig, qos: QosConfig, pm: PowerModelConfig, point: OperatingPoint,
                         method: Method = Method.CLOSED_FORM, strict: bool = True) -> float:
    """:func:`eee` with the dispersion penalty removed (``beta = 0``); ``eps`` stays in ``psi``."""
    return eee(cfg, qos, pm, point, method, strict, shannon=True)
