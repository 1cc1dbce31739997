import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbleee.config import default_bundle
from fbleee.sweeps import (CsvTable, Figure, Grid, Series, SweepSpec, cross_check, default_spec, format_number,
                           run_sweep)

BUNDLE = default_bundle()


@pytest.mark.parametrize("kw", [dict(start=0, stop=1, count=1), dict(start=1, stop=1, count=3),
                                dict(start=0, stop=1, count=3, spacing="log"),
                                dict(start=0, stop=1, count=3, spacing="cubic")])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        Grid(**kw)


def test_grid_points():
    np.testing.assert_allclose(Grid(1e-4, 1e-1, 4, "log").points(), [1e-4, 1e-3, 1e-2, 1e-1])
    np.testing.assert_allclose(Grid(-10, 20, 4, "db").points(), [-10, 0, 10, 20])


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_number_format_round_trip(x):
    text = format_number(x)
    assert format_number(float(text)) == text
    assert "," not in text


def test_csv_round_trip_is_exact():
    table = CsvTable(["x [unit]", "y"], [[0.1, 1 / 3], [2.0, None], [math.pi, 1e-300]], ["tool=t"])
    text = table.to_csv()
    again = CsvTable.from_csv(text)
    assert again.to_csv() == text
    assert again.rows[1][1] is None
    assert again.footer == ["tool=t"]


def test_csv_must_be_rectangular():
    with pytest.raises(ValueError):
        CsvTable(["a", "b"], [[1.0]])


def test_two_point_figure2_sweep():
    spec = SweepSpec(Figure.EEE_VS_SNR, Grid(0.0, 10.0, 2, "db"), BUNDLE,
                     (Series("theta=0.01", theta=0.01),))
    table = run_sweep(spec)
    lines = table.to_csv().splitlines()
    assert lines[0] == "snr_db,theta=0.01 [EEE (bpcu/W)]"
    assert len(table.rows) == 2
    assert any(line.startswith("# config_sha256=") for line in lines)


def test_figure2_series_unimodal_and_ordered_in_theta():
    table = run_sweep(default_spec(Figure.EEE_VS_SNR, BUNDLE, count=31))
    for method in ("closed-form", "oracle"):
        cols = [np.array(table.column(f"theta={t:g}_{method} [EEE (bpcu/W)]")) for t in (0.001, 0.01, 0.1)]
        for y in cols:
            k = int(np.argmax(y))
            assert np.all(np.diff(y[:k + 1]) > 0) and np.all(np.diff(y[k:]) < 0)
        assert np.all(cols[0] > cols[1]) and np.all(cols[1] > cols[2])


def test_point_errors_become_empty_cells():
    # the empty-buffer model is unstable at -10 dB: recorded, not raised
    spec = SweepSpec(Figure.EEE_VS_SNR, Grid(-10.0, 10.0, 2, "db"), BUNDLE,
                     (Series("ebp", buffer_mode=default_bundle({"buffer_mode": "ebp"}).power.buffer_mode,
                             lambda_out=1e-2),))
    table = run_sweep(spec)
    assert table.rows[0][1] is None
    assert table.rows[1][1] > 0
    assert any("note: row 0" in line for line in table.footer)


def test_solver_backed_sweep_has_flag_columns():
    spec = default_spec(Figure.EC_VS_DELTA, BUNDLE, count=2)
    table = run_sweep(spec)
    assert len(table.header) == 1 + 2 * len(spec.series)
    assert table.header[2].endswith("[rate_ok]")
    assert set(table.column(table.header[2])) <= {0, 1}


def test_parallel_sweep_is_identical():
    spec = default_spec(Figure.EEE_VS_EPSILON, BUNDLE, count=5)
    assert run_sweep(spec, jobs=2).to_csv() == run_sweep(spec, jobs=1).to_csv()


def test_cross_check_columns_and_determinism():
    spec = default_spec(Figure.EEE_VS_SNR, BUNDLE, count=2)
    table = cross_check(spec, 20_000, seed=3)
    assert len(table.header) == 1 + 3 * 6  # closed-form and oracle series collapse
    assert table.to_csv() == cross_check(spec, 20_000, seed=3).to_csv()
    assert "seed=3" in table.footer
    with pytest.raises(ValueError):
        cross_check(spec, 100)


def test_cross_check_monte_carlo_within_three_se():
    spec = default_spec(Figure.EEE_VS_SNR, BUNDLE, count=4)
    table = cross_check(spec, 1_000_000, seed=BUNDLE.seed)
    for theta in ("0.001", "0.01", "0.1"):
        mc = np.array(table.column(f"theta={theta} [ec_monte_carlo]"))
        se = np.array(table.column(f"theta={theta} [ec_monte_carlo_se]"))
        oracle = np.array(table.column(f"theta={theta} [ec_oracle]"))
        assert np.all(np.abs(mc - oracle) <= 3 * se)
    assert "monte_carlo_points_beyond_3se=0" in table.footer


@pytest.mark.xfail(strict=True, reason="the closed form is far off at low SNR and large theta "
                                       "(about 175% at -10 dB, theta=0.1)")
def test_cross_check_closed_form_within_five_percent_on_figure2_grid():
    spec = default_spec(Figure.EEE_VS_SNR, BUNDLE, count=7)
    footer = dict(line.split("=", 1) for line in cross_check(spec, 10_000).footer if "=" in line)
    assert float(footer["max_rel_err_closed_vs_oracle"]) <= 0.05
