"""Special functions, exponential-weight quadrature and seeded sampling.

Everything that needs an expectation over a unit-mean exponential variable
``Z`` (the squared Rayleigh envelope) goes through :func:`expectation`.

Gauss-Laguerre rules are provided, but they are not the default for
expectations. Functionals like ``(1 + rho*z)**a`` with ``a`` around -100
and ``rho`` around 100 concentrate their mass in a boundary layer of width
``1/(|a|*rho)`` next to ``z = 0``, well inside the first Laguerre node. The
default rule is therefore the trapezoidal rule in ``t = log z``. After that
substitution the integrand is analytic in the strip ``|Im t| < pi/2`` and
decays at both ends, so the rule converges geometrically whatever the
boundary-layer width.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

DEFAULT_SEED = 20180611
DEFAULT_MC_SAMPLES = 1_000_000

# log-variable trapezoid defaults; the coarse self-check rule uses every other node
DEFAULT_LOG_STEP = 0.125
LOG_T_MIN = -50.0
LOG_T_MAX = 4.6
SELF_CHECK_RTOL = 1e-7
MAX_REFINEMENTS = 3

_LOG_DBL_MAX = math.log(np.finfo(float).max)
_NEAR_INTEGER = 1e-4  # recurrence loses about 1e-16/dist digits near integer a <= 0


class QuadratureError(ArithmeticError):
    """An integrand produced a non-finite value at a quadrature node."""


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights approximating ``int_0^inf f(z) exp(-z) dz``."""

    nodes: np.ndarray
    weights: np.ndarray
    name: str = ""

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if nodes.size == 0:
            raise ValueError("a quadrature rule needs at least one node")
        if not np.all(nodes > 0) or not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if not np.all(weights > 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size


@functools.lru_cache(maxsize=8)
def gauss_laguerre(order: int = 64) -> QuadratureRule:
    """Gauss-Laguerre rule, exact for polynomials up to degree ``2*order - 1``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    nodes, weights = np.polynomial.laguerre.laggauss(order)
    # the far tail weights underflow to zero for large orders; they carry no mass
    keep = weights > 0
    return QuadratureRule(nodes[keep], weights[keep], name=f"gauss-laguerre-{order}")


@functools.lru_cache(maxsize=8)
def log_trapezoid(step: float = DEFAULT_LOG_STEP, t_min: float = LOG_T_MIN,
                  t_max: float = LOG_T_MAX) -> QuadratureRule:
    """Trapezoidal rule in ``t = log z`` for the weight ``exp(-z)``.

    Node ``k`` sits at ``z = exp(t_min + k*step)`` with weight
    ``step * z * exp(-z)``. Halving ``step`` keeps every existing node.
    """
    count = int(round((t_max - t_min) / step)) + 1
    t = t_min + step * np.arange(count)
    z = np.exp(t)
    return QuadratureRule(z, step * z * np.exp(-z), name=f"log-trapezoid-{step:g}")


def exp_weight_quadrature(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Return ``sum(weights * f(nodes))``.

    ``f`` is called once with the whole node array. A non-finite value raises
    :class:`QuadratureError` naming the first offending node.
    """
    values = np.asarray(f(rule.nodes), dtype=float)
    if values.shape != rule.nodes.shape:
        values = np.broadcast_to(values, rule.nodes.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        raise QuadratureError(
            f"integrand is not finite at node z={rule.nodes[i]!r} (index {i}, value {values[i]!r})")
    return float(np.dot(rule.weights, values))


def expectation(f: Callable[[np.ndarray], np.ndarray], step: float = DEFAULT_LOG_STEP,
                rtol: float = SELF_CHECK_RTOL) -> float:
    """``E[f(Z)]`` for ``Z ~ Exp(1)`` with a built-in accuracy self-check.

    The fine rule and the nested coarse rule (double step, every other node)
    are compared. If they disagree by more than ``rtol`` relative, the step
    is halved, up to ``MAX_REFINEMENTS`` times.
    """
    for _ in range(MAX_REFINEMENTS + 1):
        rule = log_trapezoid(step)
        values = np.asarray(f(rule.nodes), dtype=float)
        if not np.all(np.isfinite(values)):
            # reuse the error reporting of the plain rule
            exp_weight_quadrature(lambda _: values, rule)
        terms = rule.weights * values
        fine = float(terms.sum())
        coarse = 2.0 * float(terms[::2].sum())
        if abs(fine - coarse) <= rtol * max(abs(fine), 1e-300):
            return fine
        step /= 2.0
    return fine


# -- Gaussian tail ---------------------------------------------------------

def gaussian_q(x):
    """Standard normal tail probability ``Q(x) = P(N(0,1) > x)``."""
    return special.ndtr(-np.asarray(x, dtype=float))[()]


def gaussian_q_inv(p):
    """Inverse of :func:`gaussian_q` on ``(0, 1)``.

    Starts from scipy's inverse normal CDF and applies two Newton steps
    against :func:`gaussian_q`.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0)) or np.any(~(p < 1.0)):
        raise ValueError("gaussian_q_inv needs p in (0, 1)")
    x = -special.ndtri(p)
    for _ in range(2):
        density = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        x = x + (special.ndtr(-x) - p) / density
    return x[()]


# -- upper incomplete gamma --------------------------------------------------

def _scaled_gamma_cf(s: float, x: float, tol: float = 1e-16, max_iter: int = 100_000) -> float:
    """``exp(x) * x**-s * Gamma(s, x)`` from Legendre's continued fraction (modified Lentz)."""
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / (b if abs(b) >= tiny else tiny)
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"continued fraction for Gamma({s}, {x}) did not converge")


def _log_upper_gamma_positive(s: float, x: float) -> float:
    if x > s + 1.0:
        return math.log(_scaled_gamma_cf(s, x)) + s * math.log(x) - x
    q = special.gammaincc(s, x)
    return math.log(q) + special.gammaln(s)


def _log_upper_gamma(a: float, x: float) -> tuple[float, float]:
    """Return ``(sign, log|Gamma(a, x)|)``. The sign is always +1 for x > 0."""
    if a > 0:
        return 1.0, _log_upper_gamma_positive(a, x)
    if x > 2.0:
        return 1.0, math.log(_scaled_gamma_cf(a, x)) + a * math.log(x) - x
    if 0.0 < abs(a - round(a)) < _NEAR_INTEGER:
        # the recurrence below would divide a cancelled difference by s ~ 0; use
        # Gamma(a, x) = exp(-x) x**(a-1) E[(1 + Z/x)**(a-1)], integrand in (0, 1]
        mean = expectation(lambda z: np.exp((a - 1.0) * np.log1p(z / x)), rtol=1e-13)
        return 1.0, math.log(mean) + (a - 1.0) * math.log(x) - x
    # downward recurrence on the scaled value G(s) = exp(x) x**-s Gamma(s, x):
    #   G(s) = (x*G(s+1) - 1) / s
    steps = math.ceil(abs(a)) + 1
    start = a + steps
    if float(a).is_integer():
        start = 0.0
        steps = int(-a)
        g = special.exp1(x) * math.exp(x)
    elif start > x + 1.0:
        g = math.exp(_log_upper_gamma_positive(start, x) + x - start * math.log(x))
    else:
        g = _scaled_gamma_cf(start, x)
    s = start
    for _ in range(steps):
        s -= 1.0
        g = (x * g - 1.0) / s
    return 1.0, math.log(g) + a * math.log(x) - x


def upper_inc_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma ``Gamma(a, x) = int_x^inf t**(a-1) exp(-t) dt``.

    Valid for any real ``a`` (negative values included) and ``x > 0``.
    Raises ``OverflowError`` when the value is not representable.
    """
    a = float(a)
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise ValueError("upper_inc_gamma needs finite x > 0")
    if not math.isfinite(a):
        raise ValueError("upper_inc_gamma needs finite a")
    sign, log_value = _log_upper_gamma(a, x)
    if log_value > _LOG_DBL_MAX:
        raise OverflowError(f"Gamma({a}, {x}) = exp({log_value:.6g}) exceeds the double range")
    return sign * math.exp(log_value)


def scaled_gamma_combo(a: float, rho: float) -> float:
    """``E[(1 + rho*Z)**a] = exp(1/rho) * rho**a * Gamma(a + 1, 1/rho)`` for ``a <= 0``.

    Evaluated as an expectation, which never forms the huge and tiny
    factors of the incomplete-gamma product separately.
    """
    if not rho > 0.0:
        raise ValueError("scaled_gamma_combo needs rho > 0")
    if a > 0.0:
        raise ValueError("scaled_gamma_combo needs a <= 0")
    if a == 0.0:
        return 1.0
    return expectation(lambda z: np.exp(a * np.log1p(rho * z)))


def scaled_gamma_combo_derivative(a: float, rho: float) -> float:
    """``d/drho E[(1 + rho*Z)**a] = a * E[Z * (1 + rho*Z)**(a - 1)]``."""
    if not rho > 0.0:
        raise ValueError("scaled_gamma_combo_derivative needs rho > 0")
    if a == 0.0:
        return 0.0
    return a * expectation(lambda z: z * np.exp((a - 1.0) * np.log1p(rho * z)))


# -- random streams ------------------------------------------------------------

@dataclass
class RandomStream:
    """A seeded generator. Not shared between threads; parallel work uses separate seeds."""

    seed: int = DEFAULT_SEED
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.generator = np.random.Generator(np.random.PCG64(int(self.seed)))

    def spawn(self, count: int) -> list[RandomStream]:
        """Independent child streams, deterministic in the parent seed."""
        seq = np.random.SeedSequence(int(self.seed))
        return [RandomStream(int(child.generate_state(1, np.uint64)[0])) for child in seq.spawn(count)]


def sample_exponential(stream: RandomStream, count: int) -> np.ndarray:
    """``count`` i.i.d. unit-mean exponential variates drawn from ``stream``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return stream.generator.standard_exponential(int(count))
