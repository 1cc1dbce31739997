import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbleee.channel import ChannelConfig, OperatingPoint, expected_rate
from fbleee.effcap import BufferMode, PowerModelConfig, QosConfig, delay_outage, eee, effective_capacity
from fbleee.optimize import (EPS_MAX, EPS_MIN, DegenerateProblemError, SolveConstraints, db_to_linear,
                             golden_section_max, linear_to_db, optimal_epsilon, optimal_epsilon_details,
                             optimal_power, optimal_theta, psi_objective, solve_constrained,
                             stationarity_residual)

CFG = ChannelConfig(500)
REFERENCE_QOS = QosConfig(arrival_rate=1.0, delta=500.0, lambda_out=1e-2)
FULL = PowerModelConfig(0.2, 0.2, BufferMode.FULL)
EBP = PowerModelConfig(0.2, 0.2, BufferMode.EMPTY_AWARE)


def reference_constraints(**changes):
    cons = SolveConstraints(rho_max=10.0, epsilon_t=1e-3, qos=REFERENCE_QOS, power=FULL)
    return replace(cons, **changes)


def test_db_round_trip():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert linear_to_db(db_to_linear(-7.3)) == pytest.approx(-7.3)


@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=0.1, max_value=3))
def test_golden_section_finds_parabola_peak(centre, width):
    res = golden_section_max(lambda x: -((x - centre) / width) ** 2, centre - 7, centre + 11, 1e-8)
    assert res.x == pytest.approx(centre, abs=1e-7)


def test_golden_section_records_shrinking_brackets():
    res = golden_section_max(lambda x: -abs(x - 1), -3, 4, 1e-3, record=True)
    widths = [b - a for a, b in res.history]
    assert all(w2 < w1 for w1, w2 in zip(widths, widths[1:]))
    assert res.iterations == len(res.history)
    assert res.bracket[1] - res.bracket[0] <= 1e-3


def test_optimal_epsilon_worked_point():
    sol = optimal_epsilon_details(CFG, 10.0, 0.01)
    assert 0 < sol.epsilon < 0.5
    assert not sol.at_boundary
    f = psi_objective(CFG, 10.0, 0.01)
    assert f(sol.epsilon) <= f(sol.epsilon + 0.01)
    assert f(sol.epsilon) <= f(max(sol.epsilon - 0.01, 1e-12))
    grid = np.arange(1, 100_000) * 1e-5
    assert sol.epsilon == pytest.approx(grid[np.argmin(f(grid))], abs=1e-4)


def test_psi_objective_unimodal_on_grid():
    grid = np.arange(1, 100_000) * 1e-5
    signs = np.sign(np.diff(psi_objective(CFG, 10.0, 0.01)(grid)))
    signs = signs[signs != 0]
    assert np.count_nonzero(np.diff(signs)) == 1


def test_optimal_epsilon_shannon_runs_to_boundary():
    sol = optimal_epsilon_details(CFG, 10.0, 0.01, shannon=True)
    assert sol.at_boundary
    assert sol.epsilon == pytest.approx(EPS_MIN, rel=1e-3)
    assert EPS_MIN <= optimal_epsilon(CFG, 1e3, 0.1) <= EPS_MAX


def test_optimal_epsilon_rejects_bad_input():
    with pytest.raises(ValueError):
        optimal_epsilon(CFG, 0.0, 0.01)
    with pytest.raises(ValueError):
        optimal_epsilon(CFG, 1.0, 0.0)


@pytest.mark.parametrize("lam,expected", [(1e-2, math.log(100) / 500), (1e-3, math.log(1000) / 500)])
def test_optimal_theta_examples(lam, expected):
    qos = QosConfig(arrival_rate=1.0, delta=500.0, lambda_out=lam)
    sol = optimal_theta(qos, 1.0)
    assert sol.theta == pytest.approx(expected, rel=1e-14)
    assert not sol.slack
    assert math.exp(-sol.theta * 500.0) == pytest.approx(lam, rel=1e-12)


def test_optimal_theta_slack_sentinel():
    sol = optimal_theta(REFERENCE_QOS, 5e-3)
    assert sol.slack and sol.theta == 0.0
    with pytest.raises(ValueError):
        optimal_theta(QosConfig(theta=0.1), 1.0)
    with pytest.raises(ValueError):
        optimal_theta(REFERENCE_QOS, 1.5)


@pytest.mark.parametrize("pm", [FULL, EBP])
def test_optimal_power_local_certificate(pm):
    qos = QosConfig(theta=0.01)
    sol = optimal_power(CFG, qos, pm, 1e-3)

    def f(rho):
        return eee(CFG, qos, pm, OperatingPoint(rho, 1e-3, 0.01))

    assert f(sol.rho * 10**0.01) <= f(sol.rho)
    assert f(sol.rho * 10**-0.01) <= f(sol.rho)


def test_optimal_power_routes_agree_and_root_is_stationary():
    qos = QosConfig(theta=0.01)
    sol = optimal_power(CFG, qos, FULL, 1e-3)
    assert sol.bracketed
    assert sol.disagreement_db <= 0.05
    assert abs(stationarity_residual(CFG, qos, FULL, sol.rho_root, 1e-3, 0.01)) < 1e-6


def test_optimal_power_ebp_with_delay_pair_uses_direct_route():
    sol = optimal_power(CFG, REFERENCE_QOS, EBP, 1e-3)
    assert sol.rho_root is None
    assert "root_route" in sol.diagnostics


def test_optimal_power_flat_objective_is_degenerate():
    qos = QosConfig(theta=0.01)
    with pytest.raises(DegenerateProblemError):
        optimal_power(CFG, qos, FULL, 1 - 1e-15)


def test_solve_constraints_validation():
    with pytest.raises(ValueError, match="epsilon_t"):
        reference_constraints(epsilon_t=1.5)
    with pytest.raises(ValueError):
        reference_constraints(rho_max=0.0)
    with pytest.raises(ValueError):
        reference_constraints(qos=QosConfig(theta=0.01))


def test_solve_infeasible_at_low_cap():
    res = solve_constrained(CFG, reference_constraints(rho_max=float(db_to_linear(-20.0))))
    assert not res.feasible
    assert "reason" in res.diagnostics


@pytest.mark.parametrize("pm", [FULL, EBP])
def test_feasible_solution_satisfies_every_constraint(pm):
    cons = reference_constraints(rho_max=100.0, power=pm)
    res = solve_constrained(CFG, cons)
    assert res.feasible
    point = OperatingPoint(res.rho_star, res.epsilon_star, res.theta_star)
    ec = effective_capacity(CFG, point, cons.method)
    assert ec >= 1.0 - 1e-9
    assert res.rho_star <= cons.rho_max
    assert res.epsilon_star <= cons.epsilon_t
    if pm is EBP:
        assert res.p_nb == pytest.approx(1.0 / expected_rate(CFG, res.rho_star, cons.epsilon_t), abs=1e-9)
    outage = res.p_nb * delay_outage(res.theta_star, 1.0, 500.0)
    assert outage == pytest.approx(1e-2, abs=1e-9)
    assert len(res.diagnostics["bracket_history"]) > 1


def test_ebp_beats_full_buffer_at_reference_constants():
    full = solve_constrained(CFG, reference_constraints(require_rate=False))
    ebp = solve_constrained(CFG, reference_constraints(power=EBP, require_rate=False))
    assert ebp.eee_star > full.eee_star


@pytest.mark.parametrize("pm", [FULL, EBP])
def test_eee_star_monotone_in_delta_and_outage(pm):
    values = {}
    for lam_out in (1e-3, 1e-2):
        for delta in (100.0, 400.0, 700.0, 1000.0):
            qos = QosConfig(arrival_rate=1.0, delta=delta, lambda_out=lam_out)
            res = solve_constrained(CFG, reference_constraints(qos=qos, power=pm, require_rate=False))
            values[lam_out, delta] = res.eee_star
    for lam_out in (1e-3, 1e-2):
        series = [values[lam_out, d] for d in (100.0, 400.0, 700.0, 1000.0)]
        assert np.all(np.diff(series) >= 0)
    assert all(values[1e-2, d] >= values[1e-3, d] for d in (100.0, 400.0, 700.0, 1000.0))


def test_lower_arrival_rate_lowers_full_buffer_power():
    low = QosConfig(arrival_rate=0.3, delta=500.0, lambda_out=1e-2)
    assert (solve_constrained(CFG, reference_constraints(qos=low, require_rate=False)).rho_star
            < solve_constrained(CFG, reference_constraints(require_rate=False)).rho_star)


@pytest.mark.xfail(strict=True, reason="with the empty-buffer model a lower arrival rate makes transmit power "
                                       "cheaper (smaller P_nb), so the optimum moves up to the SNR cap")
def test_lower_arrival_rate_lowers_ebp_power():
    low = QosConfig(arrival_rate=0.3, delta=500.0, lambda_out=1e-2)
    assert (solve_constrained(CFG, reference_constraints(qos=low, power=EBP, require_rate=False)).rho_star
            < solve_constrained(CFG, reference_constraints(power=EBP, require_rate=False)).rho_star)


def test_solver_is_deterministic():
    a = solve_constrained(CFG, reference_constraints(power=EBP, require_rate=False))
    b = solve_constrained(CFG, reference_constraints(power=EBP, require_rate=False))
    assert (a.rho_star, a.eee_star, a.epsilon_star) == (b.rho_star, b.eee_star, b.epsilon_star)
