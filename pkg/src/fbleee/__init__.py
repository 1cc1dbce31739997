"""Effective energy efficiency of delay-constrained links in the finite-blocklength regime."""

__version__ = "0.1.0"

from .channel import (ChannelConfig, Fading, MonteCarlo, OperatingPoint, Quadrature, achievable_rate,  # noqa: E402
                      expected_rate, rate_functional_expectation, rate_functional_monte_carlo)
from .config import ConfigError, ParameterBundle, default_bundle, parse_config  # noqa: E402
from .effcap import (BufferMode, InfeasibleError, Method, PowerModelConfig, QosConfig,  # noqa: E402
                     delay_bound, delay_outage, eee, effective_capacity, j_function, j_prime,
                     shannon_baseline_eee)
from .optimize import (DegenerateProblemError, SolveConstraints, SolveResult, optimal_epsilon,  # noqa: E402
                       optimal_power, optimal_theta, solve_constrained)
from .specfun import (RandomStream, expectation, gaussian_q, gaussian_q_inv, scaled_gamma_combo,  # noqa: E402
                      upper_inc_gamma)
from .sweeps import CsvTable, Figure, SweepSpec, cross_check, default_spec, run_sweep  # noqa: E402

__all__ = [
    "BufferMode", "ChannelConfig", "ConfigError", "CsvTable", "DegenerateProblemError", "Fading", "Figure",
    "InfeasibleError", "Method", "MonteCarlo", "OperatingPoint", "ParameterBundle", "PowerModelConfig",
    "QosConfig", "Quadrature", "RandomStream", "SolveConstraints", "SolveResult", "SweepSpec",
    "achievable_rate", "cross_check", "default_bundle", "default_spec", "delay_bound", "delay_outage",
    "eee", "effective_capacity", "expectation", "expected_rate", "gaussian_q", "gaussian_q_inv",
    "j_function", "j_prime", "optimal_epsilon", "optimal_power", "optimal_theta", "parse_config",
    "rate_functional_expectation", "rate_functional_monte_carlo", "run_sweep", "scaled_gamma_combo",
    "shannon_baseline_eee", "solve_constrained", "upper_inc_gamma",
]
