"""Figure-reproduction sweeps, closed-form/oracle/Monte Carlo cross-checks and CSV tables."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .channel import OperatingPoint, rate_functional_monte_carlo
from .config import ParameterBundle
from .effcap import BufferMode, Method, PowerModelConfig, QosConfig, effective_capacity, eee, resolve_point
from .optimize import db_to_linear, linear_to_db, solve_constrained
from .specfun import RandomStream

FIGURE2_THETAS = (0.001, 0.01, 0.1)
OUTAGE_TARGETS = (1e-2, 1e-3)


class Figure(enum.Enum):
    EEE_VS_SNR = 2
    EEE_VS_EPSILON = 3
    EEE_VS_DELTA = 4
    POWER_VS_DELTA = 5
    EC_VS_DELTA = 6

    @property
    def solver_backed(self) -> bool:
        return self.value >= 4


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    count: int
    spacing: str = "linear"  # linear | log | db (linear in dB, converted to linear SNR downstream)

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("grid count must be >= 2")
        if not self.start < self.stop:
            raise ValueError("grid start must be < stop")
        if self.spacing not in ("linear", "log", "db"):
            raise ValueError("spacing must be linear, log or db")
        if self.spacing == "log" and self.start <= 0:
            raise ValueError("log spacing needs start > 0")

    def points(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class Series:
    label: str
    buffer_mode: BufferMode = BufferMode.FULL
    shannon: bool = False
    theta: float | None = None
    lambda_out: float | None = None
    arrival_rate: float | None = None
    method: Method | None = None


@dataclass(frozen=True)
class SweepSpec:
    figure: Figure
    grid: Grid
    bundle: ParameterBundle
    series: tuple[Series, ...]

    @property
    def axis(self) -> tuple[str, str]:
        return {
            Figure.EEE_VS_SNR: ("snr_db", "EEE (bpcu/W)"),
            Figure.EEE_VS_EPSILON: ("epsilon", "EEE (bpcu/W)"),
            Figure.EEE_VS_DELTA: ("delta_symbols", "max EEE (bpcu/W)"),
            Figure.POWER_VS_DELTA: ("delta_symbols", "optimal SNR (dB)"),
            Figure.EC_VS_DELTA: ("delta_symbols", "EC at max EEE (bpcu)"),
        }[self.figure]


def _delay_series(extra_low_rate: bool = False) -> tuple[Series, ...]:
    out = []
    for lam_out in OUTAGE_TARGETS:
        for mode in (BufferMode.FULL, BufferMode.EMPTY_AWARE):
            for shannon in (False, True):
                label = f"{mode.value}_{'shannon' if shannon else 'fbl'}_Lambda={lam_out:g}"
                out.append(Series(label, mode, shannon, lambda_out=lam_out))
    if extra_low_rate:
        out.append(Series("full_fbl_Lambda=0.01_lambda=0.3", BufferMode.FULL, False, lambda_out=1e-2,
                          arrival_rate=0.3))
    return tuple(out)


def default_spec(figure: Figure | int, bundle: ParameterBundle, count: int | None = None) -> SweepSpec:
    """Reference series and axis for ``figure`` with constants taken from ``bundle``."""
    figure = Figure(figure)
    if figure is Figure.EEE_VS_SNR:
        series = tuple(Series(f"theta={th:g}_{m.value}", bundle.power.buffer_mode, theta=th, method=m)
                       for th in FIGURE2_THETAS for m in (Method.CLOSED_FORM, Method.ORACLE))
        return SweepSpec(figure, Grid(-10.0, 20.0, count or 61, "db"), bundle, series)
    if figure is Figure.EEE_VS_EPSILON:
        return SweepSpec(figure, Grid(1e-6, 0.5, count or 61, "log"), bundle, _delay_series())
    grid = Grid(100.0, 1000.0, count or 10, "linear")
    return SweepSpec(figure, grid, bundle, _delay_series(extra_low_rate=figure is Figure.POWER_VS_DELTA))


# -- evaluation ----------------------------------------------------------------

def _series_models(bundle: ParameterBundle, series: Series, delta: float | None = None):
    arrival = series.arrival_rate if series.arrival_rate is not None else bundle.qos.arrival_rate
    if series.theta is not None:
        qos = QosConfig(arrival_rate=arrival, theta=series.theta)
    else:
        lam_out = series.lambda_out if series.lambda_out is not None else bundle.qos.lambda_out
        d = delta if delta is not None else bundle.qos.delta
        if d is None or lam_out is None:
            raise ValueError(f"series {series.label} needs delta and lambda_out")
        qos = QosConfig(arrival_rate=arrival, delta=d, lambda_out=lam_out)
    pm = PowerModelConfig(bundle.power.zeta, bundle.power.p_c, series.buffer_mode)
    return qos, pm


def operating_point(spec_figure: Figure, bundle: ParameterBundle, series: Series, x: float):
    """Resolve the operating point (and the models) for one grid point of a pointwise figure."""
    method = series.method or bundle.method
    if spec_figure is Figure.EEE_VS_SNR:
        qos, pm = _series_models(bundle, series)
        rho = float(db_to_linear(x))
        point = resolve_point(bundle.channel, qos, pm, rho, bundle.epsilon, series.shannon)
    elif spec_figure is Figure.EEE_VS_EPSILON:
        qos, pm = _series_models(bundle, series)
        point = resolve_point(bundle.channel, qos, pm, bundle.rho, float(x), series.shannon)
    else:
        raise ValueError(f"{spec_figure} is solver-backed")
    return point, qos, pm, method


def solve_point(bundle: ParameterBundle, series: Series, delta: float):
    qos, pm = _series_models(bundle, series, delta)
    cons = replace(bundle.constraints(require_rate=False), qos=qos, power=pm,
                   method=series.method or bundle.method)
    return solve_constrained(bundle.channel, cons, shannon=series.shannon)


def _evaluate(task):
    figure, bundle, series, x = task
    try:
        if figure.solver_backed:
            res = solve_point(bundle, series, float(x))
            if not math.isfinite(res.eee_star):
                return None, 0, res.diagnostics.get("reason", "no stable operating point")
            value = {Figure.EEE_VS_DELTA: res.eee_star,
                     Figure.POWER_VS_DELTA: float(linear_to_db(res.rho_star)),
                     Figure.EC_VS_DELTA: res.ec_star}[figure]
            return value, int(res.feasible), None
        point, qos, pm, method = operating_point(figure, bundle, series, float(x))
        return eee(bundle.channel, qos, pm, point, method, shannon=series.shannon), None, None
    except (ValueError, ArithmeticError) as exc:
        return None, None, str(exc)


def _map(fn, tasks, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [fn(t) for t in tasks]


# -- CSV -------------------------------------------------------------------------

def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return format(value, ".12g")


@dataclass
class CsvTable:
    header: list[str]
    rows: list[list]
    footer: list[str] = field(default_factory=list)

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, header has {width}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([c if isinstance(c, str) else format_number(c) for c in row])
        for line in self.footer:
            buf.write(f"# {line}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> CsvTable:
        body = [line for line in text.splitlines() if not line.startswith("#")]
        footer = [line[2:] for line in text.splitlines() if line.startswith("# ")]
        reader = csv.reader(body)
        header = next(reader)
        rows = [[float(c) if c != "" else None for c in row] for row in reader]
        return cls(header, rows, footer)

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


def _footer(spec: SweepSpec, kind: str, notes, seed=None, samples=None):
    lines = [f"tool=fbleee {__version__}", f"kind={kind}", f"figure={spec.figure.value}",
             f"config_sha256={spec.bundle.config_hash()}", f"method={spec.bundle.method.value}"]
    if seed is not None:
        lines.append(f"seed={seed}")
        lines.append(f"samples={samples}")
    lines.extend(notes)
    return lines


def run_sweep(spec: SweepSpec, jobs: int = 1) -> CsvTable:
    """One row per grid point; solver-backed figures add a feasibility column per series.

    Failed points leave empty cells and a footer note; the sweep never aborts.
    """
    xs = spec.grid.points()
    tasks = [(spec.figure, spec.bundle, s, x) for x in xs for s in spec.series]
    results = _map(_evaluate, tasks, jobs)
    x_name, unit = spec.axis
    header = [x_name]
    for s in spec.series:
        header.append(f"{s.label} [{unit}]")
        if spec.figure.solver_backed:
            header.append(f"{s.label} [rate_ok]")
    rows, notes = [], []
    k = 0
    for i, x in enumerate(xs):
        row = [float(x)]
        for s in spec.series:
            value, flag, error = results[k]
            k += 1
            row.append(value)
            if spec.figure.solver_backed:
                row.append(flag)
            if error:
                notes.append(f"note: row {i} series {s.label}: {error}")
        rows.append(row)
    return CsvTable(header, rows, _footer(spec, "sweep", notes))


def _cross_check_task(task):
    figure, bundle, series, x, seed, samples = task
    cfg = bundle.channel
    if figure.solver_backed:
        res = solve_point(bundle, series, float(x))
        if not math.isfinite(res.rho_star) or res.theta_star <= 0:
            raise ArithmeticError(res.diagnostics.get("reason", "no operating point with theta > 0"))
        point = OperatingPoint(res.rho_star, res.epsilon_star, res.theta_star)
    else:
        point = operating_point(figure, bundle, series, float(x))[0]
    closed = effective_capacity(cfg, point, Method.CLOSED_FORM, series.shannon)
    oracle = effective_capacity(cfg, point, Method.ORACLE, series.shannon)
    psi, psi_se = rate_functional_monte_carlo(cfg, point.rho, point.epsilon, point.theta,
                                              RandomStream(seed), samples, series.shannon)
    scale = cfg.n * point.theta
    mc = -math.log(psi) / scale
    mc_se = psi_se / (psi * scale)
    return closed, oracle, mc, mc_se


def _method_free(series):
    # every method is computed side by side, so series differing only in method collapse
    out = {}
    for s in series:
        key = replace(s, label="", method=None)
        if key not in out:
            suffix = f"_{s.method.value}" if s.method else ""
            label = s.label[:-len(suffix)] if suffix and s.label.endswith(suffix) else s.label
            out[key] = replace(s, label=label, method=None)
    return tuple(out.values())


def _safe_cross_check(task):
    try:
        return _cross_check_task(task), None
    except (ValueError, ArithmeticError) as exc:
        return None, str(exc)


def cross_check(spec: SweepSpec, samples: int, seed: int | None = None, jobs: int = 1) -> CsvTable:
    """Effective capacity by closed form, quadrature oracle and Monte Carlo at every grid point.

    Solver-backed figures are checked at the closed-form optimum of each point.
    Each (point, series) pair gets its own child stream of ``seed``.
    """
    if samples < 10_000:
        raise ValueError("cross_check needs samples >= 10^4")
    seed = spec.bundle.seed if seed is None else seed
    spec = replace(spec, series=_method_free(spec.series))
    xs = spec.grid.points()
    pairs = [(x, s) for x in xs for s in spec.series]
    streams = RandomStream(seed).spawn(len(pairs))
    tasks = [(spec.figure, spec.bundle, s, x, st.seed, samples) for (x, s), st in zip(pairs, streams)]
    results = _map(_safe_cross_check, tasks, jobs)
    x_name, _ = spec.axis
    cols = ("ec_closed_form", "ec_oracle", "ec_monte_carlo", "ec_monte_carlo_se",
            "rel_err_closed_vs_oracle", "rel_err_mc_vs_oracle")
    header = [x_name] + [f"{s.label} [{c}]" for s in spec.series for c in cols]
    rows, notes = [], []
    worst, beyond = 0.0, 0
    k = 0
    for i, x in enumerate(xs):
        row = [float(x)]
        for s in spec.series:
            values, error = results[k]
            k += 1
            if values is None:
                row.extend([None] * len(cols))
                notes.append(f"note: row {i} series {s.label}: {error}")
                continue
            closed, oracle, mc, mc_se = values
            rel_closed = abs(closed - oracle) / abs(oracle)
            rel_mc = abs(mc - oracle) / abs(oracle)
            worst = max(worst, rel_closed)
            beyond += abs(mc - oracle) > 3 * mc_se
            row.extend([closed, oracle, mc, mc_se, rel_closed, rel_mc])
        rows.append(row)
    summary = [f"max_rel_err_closed_vs_oracle={format_number(worst)}",
               f"monte_carlo_points_beyond_3se={beyond}"]
    return CsvTable(header, rows, _footer(spec, "cross-check", summary + notes, seed, samples))
