"""Scenario configuration: a flat, typed ``key = value`` file.

Every key is optional; omitted keys take the values of the shipped
``default.cfg``. Unknown keys are rejected. Lists are comma separated.
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass, fields
from importlib import resources
from typing import Optional

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelParams, RadiationPattern
from .errors import ConfigError
from .frontend import AmplifierModel, SplitRatios
from .geometry import Pose, build_planar_array
from .power_cycle import ConvergenceCriteria
from .swipt import NoiseModel, RectifierModel, dbm_to_watts

_SECTION = "scenario"


@dataclass(frozen=True)
class ScenarioConfig:
    # channel
    carrier_frequency_hz: float
    bandwidth_hz: float
    absorption_db_per_m: float
    impedance_ohm: float
    tx_gain: float
    rx_gain: float
    element_pattern: str
    # geometry
    ris_rows: int
    ris_cols: int
    ue_rows: int
    ue_cols: int
    spacing_wavelengths: float
    distance_m: float
    angle_deg: float
    ue_aiming: str
    distances_m: tuple
    angles_deg: tuple
    array_sizes: tuple
    # front ends
    reflection_amplitude: float
    feedback_ratio: float
    information_ratio: float
    amplifier_mode: str
    amplifier_gain_db: float
    saturation_power_w: float
    power_density_w_m2: float
    # rectifier and noise
    rectifier_mode: str
    rectifier_efficiency: float
    breakdown_voltage_v: float
    breakdown_field_v_per_m: float
    electron_mobility_m2_per_vs: float
    noise_mode: str
    sigma_r_dbm: float
    sigma_a_dbm: float
    noise_figure_db: float
    noise_temperature_k: float
    snr_signal: str
    # convergence
    abs_tolerance_w: float
    rel_tolerance: float
    max_iterations: int
    consecutive_hits: int
    divergence_power_w: float
    seed: Optional[int]
    # analysis
    fov_threshold_w: float
    dmax_threshold_w: float
    dmax_min_m: float
    dmax_max_m: float
    dmax_resolution_m: float
    grid_samples: int
    grid_width_factor: float
    checkpoints: tuple
    calibration_target_w: float
    calibration_distance_m: float

    def __post_init__(self):
        _validate(self)

    # ---- derived model objects -------------------------------------------------

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def spacing(self) -> float:
        return self.spacing_wavelengths * self.wavelength

    def channel_params(self) -> ChannelParams:
        pattern = RadiationPattern(self.element_pattern)
        return ChannelParams(self.carrier_frequency_hz, self.absorption_db_per_m, self.impedance_ohm,
                             self.tx_gain, self.rx_gain, pattern, pattern)

    def ris_array(self):
        return build_planar_array(self.ris_rows, self.ris_cols, self.spacing)

    def ue_position(self) -> np.ndarray:
        t = math.radians(self.angle_deg)
        return np.array([self.distance_m * math.sin(t), 0.0, self.distance_m * math.cos(t)])

    def ue_pose(self) -> Pose:
        centre = self.ue_position()
        if self.ue_aiming == "ris":
            return Pose.facing(centre, (0.0, 0.0, 0.0))
        return Pose.facing(centre, centre - np.array([0.0, 0.0, 1.0]))

    def ue_array(self):
        return build_planar_array(self.ue_rows, self.ue_cols, self.spacing, self.ue_pose())

    def amplifier(self) -> AmplifierModel:
        return AmplifierModel.from_db(self.amplifier_gain_db, self.saturation_power_w, self.amplifier_mode)

    def split_ratios(self) -> SplitRatios:
        return SplitRatios(self.feedback_ratio, self.information_ratio)

    def rectifier(self) -> RectifierModel:
        if self.rectifier_mode == "fixed":
            return RectifierModel(fixed_efficiency=self.rectifier_efficiency)
        return RectifierModel(None, self.breakdown_voltage_v, self.breakdown_field_v_per_m,
                              self.electron_mobility_m2_per_vs, 2 * math.pi * self.carrier_frequency_hz)

    def noise(self) -> NoiseModel:
        return NoiseModel(float(dbm_to_watts(self.sigma_r_dbm)), float(dbm_to_watts(self.sigma_a_dbm)),
                          self.noise_figure_db, self.bandwidth_hz, self.noise_temperature_k,
                          mode=self.noise_mode, impedance=self.impedance_ohm)

    def criteria(self) -> ConvergenceCriteria:
        return ConvergenceCriteria(self.abs_tolerance_w, self.rel_tolerance, self.max_iterations,
                                   self.consecutive_hits, self.divergence_power_w)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def default(cls) -> "ScenarioConfig":
        return load_config(None)


_CHOICES = {
    "element_pattern": RadiationPattern._KINDS,
    "ue_aiming": ("ris", "fixed"),
    "amplifier_mode": ("linear", "saturable"),
    "rectifier_mode": ("fixed", "device"),
    "noise_mode": ("standard", "tabulated"),
    "snr_signal": ("transmit", "information"),
}

_POSITIVE = (
    "carrier_frequency_hz", "bandwidth_hz", "impedance_ohm", "tx_gain", "rx_gain", "spacing_wavelengths",
    "distance_m", "saturation_power_w", "power_density_w_m2", "abs_tolerance_w", "rel_tolerance",
    "divergence_power_w", "dmax_threshold_w", "dmax_min_m", "dmax_resolution_m", "grid_width_factor",
    "calibration_distance_m", "noise_temperature_k",
)
_AT_LEAST_ONE = ("ris_rows", "ris_cols", "ue_rows", "ue_cols", "max_iterations", "consecutive_hits")
_OPEN_UNIT = ("feedback_ratio", "information_ratio")


def _validate(cfg: ScenarioConfig):
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(f"{key} must be one of {', '.join(choices)}")
    for key in _POSITIVE:
        value = getattr(cfg, key)
        if not (value > 0 and math.isfinite(value)):
            name = "distance" if key == "distance_m" else key
            raise ConfigError(f"{name} must be positive")
    for key in _AT_LEAST_ONE:
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    for key in _OPEN_UNIT:
        if not 0 < getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must lie in (0, 1)")
    if not cfg.feedback_ratio + cfg.information_ratio < 1:
        raise ConfigError("feedback_ratio + information_ratio must be < 1")
    if not 0 <= cfg.reflection_amplitude <= 1:
        raise ConfigError("reflection_amplitude must lie in [0, 1]")
    if not 0 <= cfg.rectifier_efficiency <= 1:
        raise ConfigError("rectifier_efficiency must lie in [0, 1]")
    if cfg.absorption_db_per_m < 0:
        raise ConfigError("absorption_db_per_m must be non-negative")
    if cfg.amplifier_gain_db < 0:
        raise ConfigError("amplifier_gain_db must be >= 0 (gain >= 1)")
    if any(not d > 0 for d in cfg.distances_m):
        raise ConfigError("distance must be positive")
    if any(not abs(a) < 90 for a in cfg.angles_deg + (cfg.angle_deg,)):
        raise ConfigError("angles must satisfy |angle| < 90 degrees")
    if any(n < 1 for n in cfg.array_sizes):
        raise ConfigError("array sizes must be >= 1")
    if any(c < 1 for c in cfg.checkpoints) or list(cfg.checkpoints) != sorted(cfg.checkpoints):
        raise ConfigError("checkpoints must be positive and sorted ascending")
    if cfg.grid_samples < 2:
        raise ConfigError("grid_samples must be >= 2")
    if not cfg.dmax_max_m > cfg.dmax_min_m:
        raise ConfigError("dmax_max_m must exceed dmax_min_m")
    if cfg.fov_threshold_w < 0 or cfg.calibration_target_w < 0:
        raise ConfigError("thresholds and calibration target must be non-negative")


# ---- parsing --------------------------------------------------------------------


def _field_types():
    return {f.name: f.type for f in fields(ScenarioConfig)}


def _parse_value(key, raw, ftype):
    raw = raw.strip()
    try:
        if ftype is float:
            return float(raw)
        if ftype is int:
            return int(raw)
        if ftype is str:
            return raw
        if ftype == Optional[int]:
            return None if raw.lower() == "none" else int(raw)
        if ftype is tuple:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            conv = int if key in ("array_sizes", "checkpoints") else float
            return tuple(conv(s) for s in items)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r}") from None
    raise ConfigError(f"key {key!r}: unsupported type")  # pragma: no cover


def parse_config_text(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines into a dict of typed values."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",), empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=source)
    except configparser.MissingSectionHeaderError as exc:  # pragma: no cover
        raise ConfigError(str(exc)) from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{source}, line {lineno - 1}" if lineno else source
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from None
    if parser.sections() != [_SECTION]:
        raise ConfigError(f"{source}: sections are not allowed in scenario files")
    types = _field_types()
    out = {}
    for key, raw in parser.items(_SECTION):
        if key not in types:
            raise ConfigError(f"{source}: unknown key {key!r}")
        out[key] = _parse_value(key, raw, types[key])
    return out


def _default_values() -> dict:
    text = resources.files("retrolink").joinpath("default.cfg").read_text()
    return parse_config_text(text, "default.cfg")


def load_config(path=None, **overrides) -> ScenarioConfig:
    """Load a scenario file on top of the shipped defaults.

    Args:
        path: Scenario file, or None for pure defaults.
        overrides: Extra key values applied last (already typed).
    """
    values = _default_values()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), str(path)))
    unknown = set(overrides) - set(_field_types())
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    values.update(overrides)
    missing = set(_field_types()) - set(values)
    if missing:
        raise ConfigError(f"missing keys: {', '.join(sorted(missing))}")
    return ScenarioConfig(**values)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))
