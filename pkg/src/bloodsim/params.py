"""Physical parameters, unit-suffixed quantity parsing, and config loading.

One simulation regime is described by a :class:`RegimeConfig`: device operating
point, interface geometry, electrolyte screening, analyte concentrations,
measurement band, Monte Carlo sizes, and the RNG master seed.  Configs are
immutable after construction and safe to share across parallel workers.

Configuration files are flat JSON objects keyed by dotted names
(``"interface.t_ox": "3.5nm"``).  String values may carry a unit suffix from
the table below; bare JSON numbers are taken as SI.  Any key omitted from the
file keeps its built-in default.  The same key grammar backs the CLI's
``--set key=value`` overrides.

Supported unit suffixes (values stored in SI base units; concentrations in
mol/L, volumes in L):

    length         m, cm, mm, um, nm
    voltage        V
    conductance    S
    current        A, mA, uA, nA, pA, fA
    concentration  M, mM, uM, nM, pM, fM, aM
    volume         L, mL, uL
    frequency      Hz, kHz
    temperature    K
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path


class ConfigError(Exception):
    """Base class for configuration and quantity-parsing failures."""


class MalformedNumber(ConfigError):
    """The numeric part of a quantity literal could not be parsed."""


class UnknownUnit(ConfigError):
    """A unit suffix that appears in no dimension's suffix table."""


class DimensionMismatch(ConfigError):
    """A valid unit suffix used with the wrong physical dimension."""


class MissingKey(ConfigError):
    """A referenced configuration key is not in the documented key set."""


class ParseError(ConfigError):
    """The config file is not valid JSON, or a value has the wrong shape."""


class InvariantViolation(ConfigError):
    """A parameter value violates a documented invariant."""

    def __init__(self, field_name: str, reason: str):
        self.field = field_name
        self.reason = reason
        super().__init__(f"{field_name}: {reason}")


# Suffix tables per dimension.  Factors convert the literal to SI base units
# (mol/L for concentration, L for volume).
UNIT_TABLE: dict[str, dict[str, float]] = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "voltage": {"V": 1.0},
    "conductance": {"S": 1.0},
    "current": {"A": 1.0, "mA": 1e-3, "uA": 1e-6, "nA": 1e-9, "pA": 1e-12, "fA": 1e-15},
    "concentration": {
        "M": 1.0, "mM": 1e-3, "uM": 1e-6, "nM": 1e-9,
        "pM": 1e-12, "fM": 1e-15, "aM": 1e-18,
    },
    "volume": {"L": 1.0, "mL": 1e-3, "uL": 1e-6},
    "frequency": {"Hz": 1.0, "kHz": 1e3},
    "temperature": {"K": 1.0},
}

_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def parse_quantity(text: str, dimension: str, assume_si: bool = False) -> float:
    """Parse ``number [unit-suffix]`` into an SI value of the given dimension.

    A bare number is rejected for suffixed dimensions unless ``assume_si``
    is set.  Dimensions with no suffix table (plain scalars) accept bare
    numbers only.
    """
    if not isinstance(text, str):
        raise MalformedNumber(f"expected a string literal, got {type(text).__name__}")
    stripped = text.strip()
    match = _NUMBER_RE.match(stripped)
    if match is None or match.start() != 0:
        raise MalformedNumber(f"no leading number in {text!r}")
    value = float(match.group(0))
    suffix = stripped[match.end():].strip()
    table = UNIT_TABLE.get(dimension)
    if suffix == "":
        if table is None or assume_si:
            return value
        raise MalformedNumber(
            f"{text!r} has no unit suffix; expected one of "
            f"{sorted(table)} (pass assume_si to accept bare SI numbers)"
        )
    if table is None:
        raise UnknownUnit(f"dimension {dimension!r} takes bare numbers, got suffix {suffix!r}")
    if suffix not in table:
        for other, other_table in UNIT_TABLE.items():
            if suffix in other_table:
                raise DimensionMismatch(
                    f"unit {suffix!r} is a {other} suffix, expected {dimension}"
                )
        raise UnknownUnit(f"unknown unit suffix {suffix!r} in {text!r}")
    return value * table[suffix]


def format_quantity(value: float, dimension: str, unit: str | None = None) -> str:
    """Render an SI value as a suffixed literal that parse_quantity inverts.

    Picks the largest suffix whose factor does not exceed the magnitude, so
    mantissas stay human-scale.  Round-trips through parse_quantity to 15
    significant digits.
    """
    table = UNIT_TABLE.get(dimension)
    if table is None:
        return repr(float(value))
    if unit is not None:
        if unit not in table:
            raise UnknownUnit(f"unit {unit!r} is not a {dimension} suffix")
        chosen = unit
    else:
        candidates = sorted(table.items(), key=lambda item: item[1])
        chosen = candidates[0][0]
        magnitude = abs(value)
        for suffix, factor in candidates:
            if factor <= magnitude or magnitude == 0.0:
                chosen = suffix
            else:
                break
        if magnitude == 0.0:
            chosen = max(table, key=table.get)  # zero reads best in the base unit
    mantissa = value / table[chosen]
    return f"{mantissa:.17g}{chosen}"


@dataclass(frozen=True)
class NoiseParams:
    """Intrinsic current-noise settings.

    gamma_thermal scales the flat drain-referred thermal PSD
    4*k_B*T*gamma*g_m; k_flicker is the 1/f magnitude constant in A^2
    (PSD = k_flicker/f).  The default k_flicker is the output of
    ``bloodsim calibrate`` at the shipped anchor point (see README); rerun
    the calibration to regenerate it.
    """

    gamma_thermal: float = 2.0 / 3.0
    k_flicker: float = 2.6782399339410527e-25
    enabled: bool = True


# Table-row defaults for the swept parameters (t_ox, d_b, lambda_d, c_target)
# are the anchor values the result figures hold fixed while sweeping the
# others: t_ox=3.5nm, d_b=5nm, lambda_d=0.7nm, c_target=1fM.
@dataclass(frozen=True)
class RegimeConfig:
    """One fully-resolved operating regime. Immutable; validated on build."""

    v_sg: float = 0.3                 # V, gate bias
    v_sd: float = 0.1                 # V, drain bias
    g_m: float = 1.42e-7              # S, operating-point transconductance
    i_d0: float = 1.571e-6            # A, baseline drain current
    width: float = 670e-9             # m, channel width
    length: float = 1.0e-6            # m, channel length
    t_ox: float = 3.5e-9              # m, oxide thickness
    d_b: float = 5.0e-9               # m, biofunctional-layer thickness
    rho_r: float = 1.0e16             # 1/m^2, receptor surface density
    c_target: float = 1.0e-15         # mol/L, target (ctDNA) concentration
    c_background: float = 1.0e-15     # mol/L, cfDNA-like background concentration
    z_target: float = 1.0             # charge multiplier, target fragments
    z_background: float = 0.5         # charge multiplier, background fragments
    lambda_d: float = 0.7e-9          # m, Debye length
    v_sample: float = 0.1             # L, effective exposure volume
    f_min: float = 1.0                # Hz, measurement band lower edge
    f_max: float = 1000.0             # Hz, measurement band upper edge
    m_sensors: int = 2
    n_blank: int = 1000
    n_present: int = 1000
    target_bp_range: tuple[int, int] = (50, 250)
    background_bp_range: tuple[int, int] = (180, 360)
    target_weight_range: tuple[float, float] = (0.0, 1.0)
    background_weight_range: tuple[float, float] = (0.0, 0.5)
    eps_electrolyte_rel: float = 78.5
    eps_oxide_rel: float = 3.9        # SiO2
    temperature: float = 310.0        # K, body temperature
    noise: NoiseParams = field(default_factory=NoiseParams)
    occupancy_mode: str = "auto"      # auto | exact | batched
    batch_size: int = 65536
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_bp_range", _int_pair("target_bp_range", self.target_bp_range))
        object.__setattr__(self, "background_bp_range", _int_pair("background_bp_range", self.background_bp_range))
        object.__setattr__(self, "target_weight_range", _float_pair("target_weight_range", self.target_weight_range))
        object.__setattr__(self, "background_weight_range", _float_pair("background_weight_range", self.background_weight_range))
        _validate(self)


def _int_pair(name, value) -> tuple[int, int]:
    try:
        lo, hi = value
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be a pair [lo, hi]") from None
    if float(lo) != int(lo) or float(hi) != int(hi):
        raise InvariantViolation(name, "bounds must be integers")
    return (int(lo), int(hi))


def _float_pair(name, value) -> tuple[float, float]:
    try:
        lo, hi = value
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be a pair [lo, hi]") from None
    return (float(lo), float(hi))


def _validate(cfg: RegimeConfig) -> None:
    positive = [
        "g_m", "i_d0", "width", "length", "t_ox", "d_b", "rho_r", "lambda_d",
        "v_sample", "f_min", "f_max", "temperature",
        "eps_electrolyte_rel", "eps_oxide_rel",
    ]
    for name in positive:
        if not getattr(cfg, name) > 0:
            raise InvariantViolation(name, "must be strictly positive")
    # c = 0 is legal for either class and denotes a blank-style population
    for name in ("c_target", "c_background", "z_target", "z_background"):
        if getattr(cfg, name) < 0:
            raise InvariantViolation(name, "must be non-negative")
    if not cfg.f_max > cfg.f_min:
        raise InvariantViolation("f_max", f"must exceed f_min ({cfg.f_min} Hz)")
    for name, minimum in (("m_sensors", 1), ("n_blank", 2), ("n_present", 1), ("batch_size", 1)):
        value = getattr(cfg, name)
        if not isinstance(value, int) or value < minimum:
            raise InvariantViolation(name, f"must be an integer >= {minimum}")
    for name in ("target_bp_range", "background_bp_range"):
        lo, hi = getattr(cfg, name)
        if lo < 1 or lo > hi:
            raise InvariantViolation(name, "requires 1 <= lo <= hi")
    for name in ("target_weight_range", "background_weight_range"):
        lo, hi = getattr(cfg, name)
        if not (0.0 <= lo <= hi <= 1.0):
            raise InvariantViolation(name, "must be a sub-interval of [0, 1]")
    if cfg.occupancy_mode not in ("auto", "exact", "batched"):
        raise InvariantViolation("occupancy_mode", "must be one of auto, exact, batched")
    if not isinstance(cfg.master_seed, int) or not (0 <= cfg.master_seed < 2**64):
        raise InvariantViolation("master_seed", "must be a 64-bit unsigned integer")
    if cfg.noise.gamma_thermal < 0:
        raise InvariantViolation("noise.gamma_thermal", "must be non-negative")
    if cfg.noise.k_flicker < 0:
        raise InvariantViolation("noise.k_flicker", "must be non-negative")


# Documented key set: dotted config key -> (attribute path, value kind).
# Kinds: a dimension name from UNIT_TABLE (quantity), or one of
# "float" (bare scalar), "int", "seed", "bool", "int_pair", "float_pair",
# "choice:..." (enumerated string).
KEY_TABLE: dict[str, tuple[str, str]] = {
    "bias.v_sg": ("v_sg", "voltage"),
    "bias.v_sd": ("v_sd", "voltage"),
    "device.g_m": ("g_m", "conductance"),
    "device.i_d0": ("i_d0", "current"),
    "device.width": ("width", "length"),
    "device.length": ("length", "length"),
    "interface.t_ox": ("t_ox", "length"),
    "interface.d_b": ("d_b", "length"),
    "interface.rho_r": ("rho_r", "float"),
    "interface.eps_oxide_rel": ("eps_oxide_rel", "float"),
    "electrolyte.lambda_d": ("lambda_d", "length"),
    "electrolyte.eps_rel": ("eps_electrolyte_rel", "float"),
    "environment.temperature": ("temperature", "temperature"),
    "analyte.c_target": ("c_target", "concentration"),
    "analyte.c_background": ("c_background", "concentration"),
    "analyte.z_target": ("z_target", "float"),
    "analyte.z_background": ("z_background", "float"),
    "analyte.target_bp_range": ("target_bp_range", "int_pair"),
    "analyte.background_bp_range": ("background_bp_range", "int_pair"),
    "analyte.target_weight_range": ("target_weight_range", "float_pair"),
    "analyte.background_weight_range": ("background_weight_range", "float_pair"),
    "exposure.v_sample": ("v_sample", "volume"),
    "noise.f_min": ("f_min", "frequency"),
    "noise.f_max": ("f_max", "frequency"),
    "noise.gamma_thermal": ("noise.gamma_thermal", "float"),
    "noise.k_flicker": ("noise.k_flicker", "float"),
    "noise.enabled": ("noise.enabled", "bool"),
    "montecarlo.m_sensors": ("m_sensors", "int"),
    "montecarlo.n_blank": ("n_blank", "int"),
    "montecarlo.n_present": ("n_present", "int"),
    "montecarlo.master_seed": ("master_seed", "seed"),
    "occupancy.mode": ("occupancy_mode", "choice:auto,exact,batched"),
    "occupancy.batch_size": ("batch_size", "int"),
}


def _coerce(key: str, kind: str, value, assume_si: bool):
    """Convert a JSON value or CLI string to the native field value."""
    try:
        if kind in UNIT_TABLE:
            if isinstance(value, bool):
                raise ParseError(f"{key}: expected a quantity, got a boolean")
            if isinstance(value, (int, float)):
                return float(value)
            return parse_quantity(value, kind, assume_si=assume_si)
        if kind == "float":
            if isinstance(value, bool):
                raise ParseError(f"{key}: expected a number, got a boolean")
            if isinstance(value, (int, float)):
                return float(value)
            return parse_quantity(value, kind, assume_si=True)
        if kind in ("int", "seed"):
            if isinstance(value, bool):
                raise ParseError(f"{key}: expected an integer, got a boolean")
            if isinstance(value, str):
                try:
                    return int(value)
                except ValueError:
                    value = float(value)
            if isinstance(value, int):
                return value
            if value != int(value):
                raise InvariantViolation(key, "must be an integer")
            return int(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ParseError(f"{key}: expected true or false, got {value!r}")
        if kind in ("int_pair", "float_pair"):
            if isinstance(value, str):
                parts = value.split(":")
                if len(parts) != 2:
                    raise ParseError(f"{key}: expected lo:hi, got {value!r}")
                value = [float(p) for p in parts]
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ParseError(f"{key}: expected a pair [lo, hi]")
            return tuple(value)
        if kind.startswith("choice:"):
            choices = kind.split(":", 1)[1].split(",")
            if value not in choices:
                raise InvariantViolation(key, f"must be one of {choices}")
            return value
    except ValueError as exc:
        raise MalformedNumber(f"{key}: {exc}") from None
    raise AssertionError(f"unhandled kind {kind!r}")


def _set_attr_path(values: dict, noise_values: dict, attr: str, value) -> None:
    if attr.startswith("noise."):
        noise_values[attr.split(".", 1)[1]] = value
    else:
        values[attr] = value


def build_config(overrides: dict | None = None,
                 base: RegimeConfig | None = None,
                 assume_si: bool = False) -> RegimeConfig:
    """Build a validated config from dotted-key overrides on top of a base."""
    base = base if base is not None else RegimeConfig()
    values: dict = {}
    noise_values: dict = {}
    for key, raw in (overrides or {}).items():
        entry = KEY_TABLE.get(key)
        if entry is None:
            raise MissingKey(f"{key!r} is not a documented configuration key")
        attr, kind = entry
        _set_attr_path(values, noise_values, attr, _coerce(key, kind, raw, assume_si))
    if noise_values:
        values["noise"] = replace(base.noise, **noise_values)
    return replace(base, **values) if values else base


def load_config(path: str | Path, assume_si: bool = False) -> RegimeConfig:
    """Load a JSON config file; unspecified keys keep their defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8: {exc}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{path} must contain a JSON object of dotted keys")
    return build_config(payload, assume_si=assume_si)


def apply_overrides(config: RegimeConfig, overrides: dict,
                    assume_si: bool = False) -> RegimeConfig:
    """Return a new config with dotted-key overrides applied."""
    return build_config(overrides, base=config, assume_si=assume_si)


def coerce_key_value(key: str, value, assume_si: bool = False):
    """Coerce one documented key's value to its native (SI) representation."""
    entry = KEY_TABLE.get(key)
    if entry is None:
        raise MissingKey(f"{key!r} is not a documented configuration key")
    return _coerce(key, entry[1], value, assume_si)


def config_to_overrides(config: RegimeConfig) -> dict:
    """Flatten a config to its dotted-key form (SI numbers, JSON-safe)."""
    out: dict = {}
    for key, (attr, _kind) in KEY_TABLE.items():
        if attr.startswith("noise."):
            value = getattr(config.noise, attr.split(".", 1)[1])
        else:
            value = getattr(config, attr)
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def derived_area(config: RegimeConfig) -> float:
    """Active sensing area, the width-length product (m^2)."""
    return config.width * config.length
