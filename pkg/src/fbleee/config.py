"""Key-value configuration files (INI sections) and the validated parameter bundle."""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .channel import ChannelConfig
from .effcap import BufferMode, Method, PowerModelConfig, QosConfig
from .optimize import SolveConstraints, db_to_linear
from .specfun import DEFAULT_MC_SAMPLES, DEFAULT_SEED


class ConfigError(ValueError):
    """A configuration file could not be parsed or failed validation."""


def _enum(kind):
    def parse(text):
        try:
            return kind(text.strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in kind)
            raise ValueError(f"expected one of {choices}") from None
    return parse


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


# key -> (section, parser, required)
FIELDS = {
    "n": ("channel", _int, True),
    "theta": ("qos", float, False),
    "delta": ("qos", float, False),
    "lambda_out": ("qos", float, False),
    "arrival_rate": ("qos", float, True),
    "zeta": ("power", float, True),
    "p_c": ("power", float, True),
    "buffer_mode": ("power", _enum(BufferMode), False),
    "rho_max_db": ("constraints", float, False),
    "epsilon_t": ("constraints", float, False),
    "snr_db": ("point", float, False),
    "epsilon": ("point", float, False),
    "seed": ("run", _int, False),
    "samples": ("run", _int, False),
    "method": ("run", _enum(Method), False),
}

REFERENCE_DEFAULTS = {
    "n": "500",
    "delta": "500",
    "lambda_out": "1e-2",
    "arrival_rate": "1",
    "zeta": "0.2",
    "p_c": "0.2",
    "buffer_mode": "full",
    "rho_max_db": "10",
    "epsilon_t": "1e-3",
    "snr_db": "10",
    "epsilon": "1e-3",
    "seed": str(DEFAULT_SEED),
    "samples": str(DEFAULT_MC_SAMPLES),
    "method": "closed-form",
}


@dataclass(frozen=True)
class ParameterBundle:
    channel: ChannelConfig
    qos: QosConfig
    power: PowerModelConfig
    rho_max_db: float = 10.0
    epsilon_t: float = 1e-3
    snr_db: float = 10.0
    epsilon: float = 1e-3
    seed: int = DEFAULT_SEED
    samples: int = DEFAULT_MC_SAMPLES
    method: Method = Method.CLOSED_FORM

    def __post_init__(self):
        if not 0 < self.epsilon_t < 1:
            raise ValueError("epsilon_t must lie in (0,1)")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0,1)")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def rho(self) -> float:
        return float(db_to_linear(self.snr_db))

    def constraints(self, require_rate: bool = True, **changes) -> SolveConstraints:
        cons = SolveConstraints(rho_max=float(db_to_linear(self.rho_max_db)), epsilon_t=self.epsilon_t,
                                qos=self.qos, power=self.power, method=self.method,
                                require_rate=require_rate)
        return replace(cons, **changes) if changes else cons

    def as_dict(self) -> dict:
        return {
            "n": self.channel.n, "fading": self.channel.fading.value,
            "theta": self.qos.theta, "delta": self.qos.delta, "lambda_out": self.qos.lambda_out,
            "arrival_rate": self.qos.arrival_rate,
            "zeta": self.power.zeta, "p_c": self.power.p_c, "buffer_mode": self.power.buffer_mode.value,
            "rho_max_db": self.rho_max_db, "epsilon_t": self.epsilon_t,
            "snr_db": self.snr_db, "epsilon": self.epsilon,
            "seed": self.seed, "samples": self.samples, "method": self.method.value,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _line_numbers(text: str) -> dict:
    lines = {}
    pattern = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*[=:]")
    for i, line in enumerate(text.splitlines(), start=1):
        m = pattern.match(line)
        if m:
            lines.setdefault(m.group(1).lower(), i)
    return lines


def build_bundle(raw: dict, lines: dict | None = None) -> ParameterBundle:
    """Convert and validate a flat ``key -> text`` mapping."""
    lines = lines or {}
    values = {}
    for key, text in raw.items():
        if key not in FIELDS:
            where = f"line {lines[key]}: " if key in lines else ""
            raise ConfigError(f"{where}unknown key '{key}'")
        if text is None or str(text).strip() == "":
            continue
        try:
            values[key] = FIELDS[key][1](str(text))
        except ValueError as exc:
            where = f"line {lines[key]}: " if key in lines else ""
            raise ConfigError(f"{where}bad value for {key} ({text!r}): {exc}") from None
    missing = [k for k, (_, _, required) in FIELDS.items() if required and k not in values]
    if missing:
        raise ConfigError("missing required field(s): " + ", ".join(missing))
    try:
        channel = ChannelConfig(n=values["n"])
        qos = QosConfig(arrival_rate=values["arrival_rate"], theta=values.get("theta"),
                        delta=values.get("delta"), lambda_out=values.get("lambda_out"))
        power = PowerModelConfig(zeta=values["zeta"], p_c=values["p_c"],
                                 buffer_mode=values.get("buffer_mode", BufferMode.FULL))
        rest = {k: values[k] for k in ("rho_max_db", "epsilon_t", "snr_db", "epsilon", "seed", "samples",
                                       "method") if k in values}
        return ParameterBundle(channel=channel, qos=qos, power=power, **rest)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, overrides: dict | None = None) -> ParameterBundle:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        prefix = f"line {lineno}: " if lineno is not None else ""
        raise ConfigError(f"{prefix}{exc.message.splitlines()[0]}") from None
    lines = _line_numbers(text)
    raw = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in FIELDS and FIELDS[key][0] != section:
                raise ConfigError(f"line {lines.get(key, '?')}: key '{key}' belongs in section "
                                  f"[{FIELDS[key][0]}], not [{section}]")
            raw[key] = value
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_bundle(raw, lines)


def parse_config(path, overrides: dict | None = None) -> ParameterBundle:
    """Read and validate a configuration file; ``overrides`` replace file values."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text, overrides)


def default_bundle(overrides: dict | None = None) -> ParameterBundle:
    """Reference operating constants, optionally overridden."""
    raw = dict(REFERENCE_DEFAULTS)
    if overrides and overrides.get("theta") is not None:
        # a direct exponent replaces the (delta, lambda_out) pair
        raw.pop("delta")
        raw.pop("lambda_out")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_bundle(raw)


def render_config(bundle: ParameterBundle) -> str:
    """Config-file text that parses back to ``bundle``."""
    d = bundle.as_dict()
    out = []
    for section in ("channel", "qos", "power", "constraints", "point", "run"):
        out.append(f"[{section}]")
        for key, (sec, _, _) in FIELDS.items():
            if sec == section and d.get(key) is not None:
                out.append(f"{key} = {d[key]!r}" if isinstance(d[key], float) else f"{key} = {d[key]}")
        out.append("")
    return "\n".join(out)
