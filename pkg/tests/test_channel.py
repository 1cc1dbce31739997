import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbleee.channel import (ChannelConfig, MonteCarlo, OperatingPoint, Quadrature, achievable_rate,
                            dispersion_coefficient, expected_rate, expected_rate_derivative,
                            rate_functional_excess, rate_functional_expectation, rate_functional_monte_carlo,
                            zero_rate_threshold)
from fbleee.specfun import RandomStream

CFG = ChannelConfig(500)

eps_below_half = st.floats(min_value=1e-9, max_value=0.49)
snr = st.floats(min_value=1e-3, max_value=1e4)


def test_rate_examples():
    assert achievable_rate(CFG, 10.0, 0.0, 1e-3) == 0.0
    assert achievable_rate(CFG, 10.0, 1.0, 0.5) == pytest.approx(math.log2(11), rel=1e-14)
    expected = math.log2(11) - 3.090232306167813 / math.log(2) / math.sqrt(500) * math.sqrt(1 - 1 / 121)
    assert achievable_rate(CFG, 10.0, 1.0, 1e-3) == pytest.approx(expected, rel=1e-12)
    assert achievable_rate(CFG, 10.0, 1.0, 1e-3) == pytest.approx(3.261, abs=5e-4)


def test_rate_is_vectorized_and_clamps():
    z = np.array([0.0, 1e-4, 1.0])
    r = achievable_rate(CFG, 1.0, z, 1e-3)
    assert r.shape == (3,)
    assert r[1] < 0
    assert np.all(achievable_rate(CFG, 1.0, z, 1e-3, clamp=True) >= 0)


@pytest.mark.parametrize("bad", [dict(z=-1.0, epsilon=0.1), dict(z=1.0, epsilon=0.0), dict(z=1.0, epsilon=1.0)])
def test_rate_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        achievable_rate(CFG, 1.0, **bad)


@pytest.mark.parametrize("n", [1, 0, 2.5, True])
def test_config_validation(n):
    with pytest.raises(ValueError):
        ChannelConfig(n)


@pytest.mark.parametrize("kw", [dict(rho=-1, epsilon=0.1, theta=0.1), dict(rho=1, epsilon=1.0, theta=0.1),
                                dict(rho=1, epsilon=0.1, theta=-0.1)])
def test_operating_point_validation(kw):
    with pytest.raises(ValueError):
        OperatingPoint(**kw)


@given(snr, st.floats(min_value=0, max_value=50), st.floats(min_value=0.01, max_value=5), eps_below_half)
def test_clamped_rate_monotone_in_z_and_rho(rho, z, dz, eps):
    r = achievable_rate(CFG, rho, z, eps, clamp=True)
    assert achievable_rate(CFG, rho, z + dz, eps, clamp=True) >= r
    assert achievable_rate(CFG, rho * 1.5, z, eps, clamp=True) >= r


@given(snr, st.floats(min_value=0, max_value=50), eps_below_half, st.floats(min_value=0.01, max_value=0.99))
def test_rate_below_shannon_and_decreasing_in_reliability(rho, z, eps, shrink):
    r = achievable_rate(CFG, rho, z, eps)
    assert r <= achievable_rate(CFG, rho, z, 0.5) + 1e-12
    assert achievable_rate(CFG, rho, z, eps * shrink) <= r + 1e-12


@given(st.floats(min_value=1e-4, max_value=2.0))
def test_zero_rate_threshold_is_a_root(coef):
    w = zero_rate_threshold(coef)
    u = 1 + w
    assert math.log2(u) == pytest.approx(coef * math.sqrt(1 - u**-2), rel=1e-9)


def test_expected_rate_examples():
    assert expected_rate(CFG, 0.0, 1e-3) == 0.0
    oracle = float(mpmath.quad(lambda z: mpmath.log(1 + 10 * z, 2) * mpmath.exp(-z), [0, 1, 10, mpmath.inf]))
    assert expected_rate(CFG, 10.0, 0.5) == pytest.approx(oracle, rel=1e-9)
    assert oracle == pytest.approx(2.9065, abs=1e-4)
    assert expected_rate(CFG, 10.0, 1e-3) < expected_rate(CFG, 10.0, 0.5)


@pytest.mark.parametrize("rho", [0.05, 1.0, 10.0, 300.0])
def test_expected_rate_matches_direct_clamped_integral(rho):
    eps = 1e-4
    coef = dispersion_coefficient(CFG, eps)
    z0 = zero_rate_threshold(coef) / rho

    def r(z):
        u = 1 + rho * z
        return mpmath.log(u, 2) - coef * mpmath.sqrt(1 - u**-2)

    oracle = float(mpmath.quad(lambda z: r(z) * mpmath.exp(-z), [z0, z0 + 1, z0 + 10, mpmath.inf]))
    assert expected_rate(CFG, rho, eps) == pytest.approx(oracle, rel=1e-8)


def test_expected_rate_derivative_matches_differences():
    for rho in (0.3, 3.0, 30.0):
        h = 1e-5 * rho
        fd = (expected_rate(CFG, rho + h, 1e-3) - expected_rate(CFG, rho - h, 1e-3)) / (2 * h)
        assert expected_rate_derivative(CFG, rho, 1e-3) == pytest.approx(fd, rel=1e-6)


def test_psi_trivial_limits():
    assert rate_functional_expectation(CFG, 0.0, 1e-3, 0.01) == 1.0
    assert rate_functional_expectation(CFG, 10.0, 1 - 1e-15, 0.01) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        rate_functional_expectation(CFG, 1.0, 1e-3, 0.0)


def test_psi_excess_avoids_cancellation():
    excess = rate_functional_excess(CFG, 10.0, 1e-3, 1e-12)
    mean_rate_unclamped = (1 - 1e-3) * excess / (-500 * 1e-12)
    assert 2.0 < mean_rate_unclamped < 3.0


def test_psi_quadrature_vs_monte_carlo_worked_point():
    psi_q = rate_functional_expectation(CFG, 10.0, 1e-3, 0.01)
    psi_mc, se = rate_functional_monte_carlo(CFG, 10.0, 1e-3, 0.01, RandomStream(1), 1_000_000)
    assert abs(psi_mc - psi_q) < 3 * se
    via_method = rate_functional_expectation(CFG, 10.0, 1e-3, 0.01, MonteCarlo(RandomStream(1), 1_000_000))
    assert via_method == pytest.approx(psi_mc, rel=1e-12)


def test_psi_step_refinement_is_stable():
    coarse = rate_functional_expectation(CFG, 5.0, 1e-4, 0.05, Quadrature(0.25))
    fine = rate_functional_expectation(CFG, 5.0, 1e-4, 0.05, Quadrature(0.03125))
    assert coarse == pytest.approx(fine, rel=1e-7)


def test_monte_carlo_count_validation():
    with pytest.raises(ValueError):
        rate_functional_monte_carlo(CFG, 1.0, 0.1, 0.1, RandomStream(0), 0)


@given(st.floats(min_value=0.1, max_value=1000), st.floats(min_value=1e-3, max_value=0.1),
       st.floats(min_value=1e-6, max_value=0.2))
def test_psi_decreasing_in_rho_and_log_mgf_ratio_in_theta(rho, theta, eps):
    psi = rate_functional_expectation(CFG, rho, eps, theta)
    assert rate_functional_expectation(CFG, rho * 1.3, eps, theta) < psi
    # psi is a moment generating function in theta; -log(psi)/theta is what is monotone
    psi_up = rate_functional_expectation(CFG, rho, eps, theta * 1.3)
    assert -math.log(psi_up) / (theta * 1.3) <= -math.log(psi) / theta + 1e-12


@pytest.mark.parametrize("rho,theta", [(1.0, 0.01), (10.0, 0.01), (10.0, 0.1), (100.0, 0.001)])
def test_psi_convex_in_epsilon(rho, theta):
    # a uniform grid is needed for the three-point second difference
    eps = np.linspace(1e-6, 0.3, 400)
    psi = np.array([rate_functional_expectation(CFG, rho, e, theta) for e in eps])
    assert np.all(psi[:-2] - 2 * psi[1:-1] + psi[2:] >= -1e-9)
