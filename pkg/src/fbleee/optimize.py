"""Error-probability, power and delay-exponent optimizers and the buffer-constrained solve."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sciopt

from .channel import (ChannelConfig, OperatingPoint, Quadrature, expected_rate, expected_rate_derivative,
                      rate_functional_excess)
from .effcap import (BufferMode, InfeasibleError, Method, PowerModelConfig, QosConfig, effective_capacity,
                     gamma_moments, j_function, j_prime, power_consumption, theta_from_outage)
from .specfun import gaussian_q_inv

log = logging.getLogger(__name__)

EPS_MIN = 1e-12
EPS_MAX = 1.0 - 1e-12
EPS_TOL = 1e-6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi
POWER_ROUTE_AGREEMENT_DB = 0.05


class DegenerateProblemError(ArithmeticError):
    """The objective is numerically flat over the search interval."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class GoldenResult:
    x: float
    value: float
    iterations: int
    bracket: tuple[float, float]
    history: list[tuple[float, float]] = field(default_factory=list)


def golden_section_max(f, lo: float, hi: float, tol: float, max_iter: int = 500,
                       record: bool = False) -> GoldenResult:
    """Maximize a unimodal ``f`` on ``[lo, hi]`` until the bracket is shorter than ``tol``."""
    if not lo < hi:
        raise ValueError("golden_section_max needs lo < hi")
    history = []
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        it += 1
        if record:
            history.append((a, b))
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x, fx = (c, fc) if fc >= fd else (d, fd)
    return GoldenResult(x, fx, it, (a, b), history)


# -- optimal error probability -------------------------------------------------

@dataclass
class EpsilonSolution:
    epsilon: float
    objective: float
    iterations: int
    at_boundary: bool


def psi_objective(cfg: ChannelConfig, rho: float, theta: float, shannon: bool = False):
    """Vectorized ``eps -> eps + (1 - eps) J(eps)``; the gamma moments are computed once."""
    c0, c2 = gamma_moments(cfg, rho, theta)
    k = theta * math.sqrt(cfg.n) / math.log(2.0)  # beta = k * Q^-1(eps)

    def objective(eps):
        eps = np.asarray(eps, dtype=float)
        beta = np.zeros_like(eps) if shannon else k * gaussian_q_inv(eps)
        t2 = 0.5 * beta * beta + beta
        j = (t2 + 1.0) * c0 - t2 * c2
        return (eps + (1.0 - eps) * j)[()]

    return objective


def optimal_epsilon_details(cfg: ChannelConfig, rho: float, theta: float, shannon: bool = False,
                            tol: float = EPS_TOL) -> EpsilonSolution:
    if not rho > 0:
        raise ValueError("rho must be > 0")
    if not theta > 0:
        raise ValueError("theta must be > 0")
    objective = psi_objective(cfg, rho, theta, shannon)
    # search in log(eps): unimodality is preserved and a log-width of tol bounds |d eps| by tol
    res = golden_section_max(lambda s: -float(objective(math.exp(s))),
                             math.log(EPS_MIN), math.log(EPS_MAX), tol)
    eps = min(max(math.exp(res.x), EPS_MIN), EPS_MAX)
    at_boundary = res.x - math.log(EPS_MIN) < 2 * tol or math.log(EPS_MAX) - res.x < 2 * tol
    return EpsilonSolution(eps, -res.value, res.iterations, at_boundary)


def optimal_epsilon(cfg: ChannelConfig, rho: float, theta: float, shannon: bool = False) -> float:
    """Error probability minimizing ``eps + (1 - eps) J``, hence maximizing EC and EEE."""
    return optimal_epsilon_details(cfg, rho, theta, shannon).epsilon


# -- optimal delay exponent ----------------------------------------------------

@dataclass(frozen=True)
class ThetaSolution:
    theta: float
    slack: bool  # True: delay constraint holds for every theta >= 0; theta is the 0 sentinel


def optimal_theta(qos: QosConfig, p_nb: float) -> ThetaSolution:
    """Delay exponent putting the outage constraint ``P_nb exp(-theta lambda delta) <= Lambda`` at equality."""
    if qos.delta is None or qos.lambda_out is None:
        raise ValueError("optimal_theta needs delta and lambda_out")
    if not 0.0 < p_nb <= 1.0:
        raise ValueError("p_nb must lie in (0, 1]")
    if p_nb <= qos.lambda_out:
        return ThetaSolution(0.0, True)
    return ThetaSolution(theta_from_outage(qos.arrival_rate, qos.delta, qos.lambda_out, p_nb), False)


# -- optimal transmit power ----------------------------------------------------

@dataclass
class PowerSolution:
    rho: float
    eee: float
    rho_root: float | None
    rho_golden: float
    bracketed: bool
    disagreement_db: float | None
    diagnostics: dict = field(default_factory=dict)


def _stable_rho(cfg, epsilon, arrival_rate, shannon, lo_db=-40.0, hi_db=60.0):
    """Smallest SNR with ``E[r] >= lambda`` (queue stability threshold)."""
    g = lambda d: expected_rate(cfg, float(db_to_linear(d)), epsilon, shannon) - arrival_rate  # noqa: E731
    if g(hi_db) < 0:
        return math.inf
    if g(lo_db) >= 0:
        return float(db_to_linear(lo_db))
    return float(db_to_linear(sciopt.brentq(g, lo_db, hi_db, xtol=1e-10)))


def _power_eee(cfg, qos, pm, rho, epsilon, theta, shannon, method=Method.CLOSED_FORM):
    """EEE at fixed epsilon; ``theta=None`` re-resolves it from (delta, Lambda) at this SNR."""
    p_nb = 1.0
    if pm.buffer_mode is BufferMode.EMPTY_AWARE:
        mean_rate = expected_rate(cfg, rho, epsilon, shannon)
        p_nb = qos.arrival_rate / mean_rate if mean_rate > 0 else math.inf
        if p_nb > 1.0:
            return 0.0
    if theta is None:
        theta = qos.resolve_theta(p_nb)
        if theta <= 0.0:
            theta = 1e-12
    ec = effective_capacity(cfg, OperatingPoint(rho, epsilon, theta), method, shannon)
    return max(ec, 0.0) / power_consumption(pm, rho, p_nb)


def stationarity_residual(cfg, qos, pm, rho, epsilon, theta, shannon=False):
    """``eta(rho) + psi'/(n theta P'(rho) psi)``; zero at the EEE-optimal power.

    ``d eta/d rho = -(P'/P) * residual``, so the residual goes from negative to
    positive across the maximizer.
    """
    terms = j_function(cfg, rho, theta, epsilon, shannon)
    psi = epsilon + (1.0 - epsilon) * terms.j_value
    dpsi = (1.0 - epsilon) * j_prime(cfg, rho, theta, epsilon, shannon)
    if pm.buffer_mode is BufferMode.EMPTY_AWARE:
        mean_rate = expected_rate(cfg, rho, epsilon, shannon)
        d_mean = expected_rate_derivative(cfg, rho, epsilon, shannon)
        p_nb = qos.arrival_rate / mean_rate
        d_power = pm.zeta * qos.arrival_rate * (mean_rate - rho * d_mean) / mean_rate**2
    else:
        p_nb = 1.0
        d_power = pm.zeta
    eta = -math.log(psi) / (cfg.n * theta * power_consumption(pm, rho, p_nb))
    return eta + dpsi / (cfg.n * theta * d_power * psi)


def optimal_power(cfg: ChannelConfig, qos: QosConfig, pm: PowerModelConfig, epsilon: float,
                  rho_lo: float = 1e-2, rho_hi: float = 1e4, shannon: bool = False,
                  grid_step_db: float = 0.25, tol_db: float = 1e-4) -> PowerSolution:
    """EEE-maximizing linear SNR at fixed ``epsilon``.

    Two routes: bracketed root finding on the first-order condition
    (:func:`stationarity_residual`) and direct golden-section maximization
    after a coarse dB grid. The direct route is authoritative when they
    differ by more than ``POWER_ROUTE_AGREEMENT_DB``. The root route needs a
    delay exponent that does not depend on SNR, so it is skipped when the
    exponent comes from ``(delta, Lambda)`` under the empty-buffer model.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0,1)")
    if not 0 < rho_lo < rho_hi:
        raise ValueError("need 0 < rho_lo < rho_hi")
    diagnostics = {}
    ebp = pm.buffer_mode is BufferMode.EMPTY_AWARE
    fixed_theta = qos.theta
    if fixed_theta is None and not ebp:
        fixed_theta = qos.resolve_theta(1.0)
    if ebp:
        stable = _stable_rho(cfg, epsilon, qos.arrival_rate, shannon)
        if stable >= rho_hi:
            raise InfeasibleError("queue unstable over the whole SNR bracket")
        if stable > rho_lo:
            rho_lo = stable * (1.0 + 1e-9)
            diagnostics["rho_lo_raised_to_stability"] = rho_lo

    lo_db, hi_db = float(linear_to_db(rho_lo)), float(linear_to_db(rho_hi))
    f = lambda d: _power_eee(cfg, qos, pm, float(db_to_linear(d)), epsilon, fixed_theta, shannon)  # noqa: E731
    grid = np.linspace(lo_db, hi_db, max(3, int(math.ceil((hi_db - lo_db) / grid_step_db)) + 1))
    values = np.array([f(d) for d in grid])
    if values.max() - values.min() < 1e-12:
        raise DegenerateProblemError("EEE is numerically flat over the SNR bracket")
    k = int(np.argmax(values))
    lo_k, hi_k = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    gold = golden_section_max(f, lo_k, hi_k, tol_db)
    rho_golden = float(db_to_linear(gold.x))
    diagnostics["golden_iterations"] = gold.iterations
    diagnostics["grid_points"] = len(grid)

    rho_root = None
    bracketed = False
    disagreement = None
    if fixed_theta is not None:
        g = lambda d: stationarity_residual(cfg, qos, pm, float(db_to_linear(d)), epsilon,  # noqa: E731
                                            fixed_theta, shannon)
        g_lo, g_hi = g(lo_db), g(hi_db)
        bracketed = g_lo < 0.0 < g_hi
        if bracketed:
            root_db, info = sciopt.brentq(g, lo_db, hi_db, xtol=tol_db / 10, full_output=True)
            rho_root = float(db_to_linear(root_db))
            diagnostics["root_iterations"] = info.iterations
            disagreement = abs(root_db - gold.x)
            if disagreement > POWER_ROUTE_AGREEMENT_DB:
                log.warning("first-order root %.4f dB and direct maximizer %.4f dB differ by %.3f dB; "
                            "keeping the direct maximizer", root_db, gold.x, disagreement)
    else:
        diagnostics["root_route"] = "skipped: delay exponent varies with SNR"

    use_root = rho_root is not None and disagreement <= POWER_ROUTE_AGREEMENT_DB
    rho = rho_root if use_root else rho_golden
    return PowerSolution(rho=rho, eee=f(float(linear_to_db(rho))), rho_root=rho_root, rho_golden=rho_golden,
                         bracketed=bracketed, disagreement_db=disagreement, diagnostics=diagnostics)


# -- buffer-constrained maximization ------------------------------------------

@dataclass(frozen=True)
class SolveConstraints:
    """Caps and models for the buffer-constrained EEE maximization.

    ``require_rate`` selects how the ``EC >= lambda`` constraint is used: when
    True it filters candidates; when False it is only reported (the
    ``rate_ok`` diagnostic), which is how the figure sweeps run.
    """

    rho_max: float
    epsilon_t: float
    qos: QosConfig
    power: PowerModelConfig
    rho_min_db: float = -20.0
    grid_step_db: float = 0.1
    refine_tol_db: float = 0.01
    method: Method = Method.CLOSED_FORM
    require_rate: bool = True

    def __post_init__(self):
        if not self.rho_max > 0:
            raise ValueError("rho_max must be > 0")
        if not 0 < self.epsilon_t < 1:
            raise ValueError("epsilon_t must lie in (0,1)")
        if self.qos.delta is None or self.qos.lambda_out is None:
            raise ValueError("the constrained problem needs delta and lambda_out")


@dataclass
class SolveResult:
    rho_star: float
    epsilon_star: float
    theta_star: float
    eee_star: float
    ec_star: float
    p_nb: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass
class _Candidate:
    rho_db: float
    rho: float
    p_nb: float
    theta: float
    slack: bool
    epsilon: float
    eps_at_boundary: bool
    ec: float
    eee: float

    @property
    def value(self):
        return self.eee


def _zero_theta_capacity(cfg, rho, epsilon, shannon):
    # theta -> 0 limit of -log(psi)/(n theta) is (1 - eps) E[r] with the unclamped rate
    h = 1e-9
    excess = rate_functional_excess(cfg, rho, epsilon, h, Quadrature(), shannon)
    return -math.log1p(excess) / (cfg.n * h)


def evaluate_candidate(cfg: ChannelConfig, cons: SolveConstraints, rho_db: float,
                       shannon: bool = False) -> _Candidate | None:
    """One line-search candidate; ``None`` when the queue is unstable at this SNR."""
    rho = float(db_to_linear(rho_db))
    qos, pm = cons.qos, cons.power
    # P_nb is tied to the design error target so that it depends on rho alone
    if pm.buffer_mode is BufferMode.EMPTY_AWARE:
        mean_rate = expected_rate(cfg, rho, cons.epsilon_t, shannon)
        if not mean_rate >= qos.arrival_rate:
            return None
        p_nb = qos.arrival_rate / mean_rate
    else:
        p_nb = 1.0
    theta_sol = optimal_theta(qos, p_nb)
    if theta_sol.slack:
        eps = cons.epsilon_t
        ec = _zero_theta_capacity(cfg, rho, eps, shannon)
        at_boundary = False
    else:
        eps_sol = optimal_epsilon_details(cfg, rho, theta_sol.theta, shannon)
        eps = min(eps_sol.epsilon, cons.epsilon_t)
        at_boundary = eps_sol.at_boundary
        ec = effective_capacity(cfg, OperatingPoint(rho, eps, theta_sol.theta), cons.method, shannon)
    value = max(ec, 0.0) / power_consumption(pm, rho, p_nb)
    return _Candidate(rho_db, rho, p_nb, theta_sol.theta, theta_sol.slack, eps, at_boundary, ec, value)


def solve_constrained(cfg: ChannelConfig, cons: SolveConstraints, shannon: bool = False) -> SolveResult:
    """Maximize EEE over SNR with theta from the outage constraint and eps = min(eps*, eps_t).

    A 0.1 dB grid over ``[rho_min_db, rho_max]`` is followed by golden-section
    refinement around the best grid point. When no candidate reaches
    ``EC >= lambda`` (or every SNR leaves the queue unstable) the result is
    marked infeasible; it still carries the best candidate found with the
    rate constraint relaxed, when one exists.
    """
    qos = cons.qos
    hi_db = float(linear_to_db(cons.rho_max))
    lo_db = min(cons.rho_min_db, hi_db)
    count = max(2, int(round((hi_db - lo_db) / cons.grid_step_db)) + 1)
    grid = np.linspace(lo_db, hi_db, count)
    candidates = [evaluate_candidate(cfg, cons, d, shannon) for d in grid]
    stable = [c for c in candidates if c is not None]
    diagnostics = {"grid_points": len(grid), "unstable_points": len(grid) - len(stable),
                   "shannon": shannon, "method": cons.method.value}
    if not stable:
        diagnostics["reason"] = "queue unstable (arrival rate exceeds E[r]) at every SNR up to rho_max"
        nan = math.nan
        return SolveResult(nan, nan, nan, nan, nan, nan, False, diagnostics)

    def rate_ok(c):
        return c.ec >= qos.arrival_rate

    rate_feasible = [c for c in stable if rate_ok(c)]
    diagnostics["rate_feasible_points"] = len(rate_feasible)
    enforce = cons.require_rate and bool(rate_feasible)
    pool = rate_feasible if enforce else stable
    best = max(pool, key=lambda c: c.value)

    def score(d):
        c = evaluate_candidate(cfg, cons, d, shannon)
        if c is None or (enforce and not rate_ok(c)):
            return -math.inf
        return c.value

    a = max(lo_db, best.rho_db - cons.grid_step_db)
    b = min(hi_db, best.rho_db + cons.grid_step_db)
    if b - a > cons.refine_tol_db:
        gold = golden_section_max(score, a, b, cons.refine_tol_db, record=True)
        diagnostics["golden_iterations"] = gold.iterations
        diagnostics["bracket_history"] = gold.history
        if gold.value > best.value:
            best = evaluate_candidate(cfg, cons, gold.x, shannon)

    feasible = rate_ok(best) and best.rho <= cons.rho_max * (1 + 1e-12) and best.epsilon <= cons.epsilon_t
    if not rate_feasible:
        diagnostics["reason"] = "no SNR up to rho_max reaches EC >= arrival rate"
    diagnostics["rate_ok"] = rate_ok(best)
    diagnostics["delay_slack"] = best.slack
    diagnostics["epsilon_at_boundary"] = best.eps_at_boundary
    diagnostics["rho_star_db"] = best.rho_db
    return SolveResult(rho_star=best.rho, epsilon_star=best.epsilon, theta_star=best.theta,
                       eee_star=best.eee, ec_star=best.ec, p_nb=best.p_nb, feasible=feasible,
                       diagnostics=diagnostics)
