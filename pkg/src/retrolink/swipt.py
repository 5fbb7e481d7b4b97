"""SWIPT receiver metrics: rectified charging power, noise, SNR, capacity."""

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy.constants import Boltzmann

from .errors import InvalidParameterError


@dataclass(frozen=True)
class RectifierModel:
    """Rectifier conversion efficiency.

    Either a fixed efficiency, or the diode time-constant model driven by
    breakdown voltage, breakdown field, electron mobility and the angular
    carrier frequency.
    """

    fixed_efficiency: Optional[float] = 0.78
    breakdown_voltage: float = 0.0
    breakdown_field: float = 1.0
    mobility: float = 1.0
    angular_frequency: float = 0.0

    def __post_init__(self):
        if self.fixed_efficiency is not None and not 0.0 <= self.fixed_efficiency <= 1.0:
            raise InvalidParameterError("fixed rectifier efficiency must lie in [0, 1]")

    @property
    def time_constant(self) -> float:
        """``RC = 2 V_max / (mu E_c)``."""
        if not (self.mobility > 0 and self.breakdown_field > 0):
            raise InvalidParameterError("mobility and breakdown field must be positive")
        if self.breakdown_voltage < 0:
            raise InvalidParameterError("breakdown voltage must be non-negative")
        return 2.0 * self.breakdown_voltage / (self.mobility * self.breakdown_field)


def rectifier_efficiency(model: RectifierModel) -> float:
    if model.fixed_efficiency is not None:
        return model.fixed_efficiency
    rc = model.time_constant
    return 1.0 / (1.0 + 0.25 * (model.angular_frequency * rc) ** 2)


def charging_power(p_e: float, eta_rect: float) -> float:
    return eta_rect * p_e


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass(frozen=True)
class NoiseModel:
    """Receiver, active-RIS and amplifier noise.

    ``mode="standard"`` uses the thermal form ``k T0 B F`` for the amplifier
    noise. ``mode="tabulated"`` uses ``2 Z0 k T0 F B`` as literally tabulated;
    it is not dimensionally a power and is kept for traceability only.
    """

    sigma_r2: float = 1e-10
    sigma_a2: float = 1e-10
    noise_figure_db: float = 8.5
    bandwidth: float = 20e9
    temperature: float = 290.0
    boltzmann: float = Boltzmann
    mode: str = "standard"
    impedance: float = 120 * np.pi

    def __post_init__(self):
        if self.mode not in ("standard", "tabulated"):
            raise InvalidParameterError(f"unknown noise mode {self.mode!r}")
        if min(self.sigma_r2, self.sigma_a2) < 0:
            raise InvalidParameterError("noise variances must be non-negative")
        if not self.bandwidth > 0:
            raise InvalidParameterError("bandwidth must be positive")

    @property
    def amplifier_noise(self) -> float:
        f = 10.0 ** (self.noise_figure_db / 10.0)
        sp = self.boltzmann * self.temperature * self.bandwidth * f
        return 2.0 * self.impedance * sp if self.mode == "tabulated" else sp


def total_noise_power(model: NoiseModel, amplifier_gain: float) -> float:
    """``G (sigma_r^2 + sigma_a^2 + sigma_p^2)`` in watts."""
    return amplifier_gain * (model.sigma_r2 + model.sigma_a2 + model.amplifier_noise)


def snr(p_signal: float, noise_power: float) -> float:
    if not noise_power > 0:
        raise InvalidParameterError("noise power must be positive")
    return p_signal / noise_power


def channel_capacity(bandwidth: float, snr_value: float) -> float:
    """Shannon capacity in bit/s."""
    if snr_value < 0:
        raise InvalidParameterError("SNR must be non-negative")
    if not bandwidth > 0:
        raise InvalidParameterError("bandwidth must be positive")
    return bandwidth * np.log1p(snr_value) / np.log(2.0)


@dataclass(frozen=True)
class LinkMetrics:
    p_r: float
    p_e: float
    p_i: float
    p_ch: float
    p_t: float
    eta_d: float
    snr: float
    capacity: float
    iterations: int

    def as_dict(self) -> dict:
        return asdict(self)


def link_metrics(p_t: float, p_r: float, eta_d: float, iterations: int, ratios, rectifier: RectifierModel,
                 noise: NoiseModel, amplifier_gain: float, snr_signal: str = "transmit") -> LinkMetrics:
    """Assemble SWIPT metrics for a steady-state operating point.

    Args:
        snr_signal: ``"transmit"`` uses ``gamma * P_t`` as the SNR signal
            term, ``"information"`` uses the demodulator power
            ``gamma (1 - delta) P_r``.
    """
    d, g = ratios.feedback, ratios.information
    p_i = g * (1 - d) * p_r
    p_e = (1 - g) * (1 - d) * p_r
    p_ch = charging_power(p_e, rectifier_efficiency(rectifier))
    if snr_signal == "transmit":
        signal = g * p_t
    elif snr_signal == "information":
        signal = p_i
    else:
        raise InvalidParameterError(f"unknown SNR signal term {snr_signal!r}")
    s = snr(signal, total_noise_power(noise, amplifier_gain))
    return LinkMetrics(p_r=p_r, p_e=p_e, p_i=p_i, p_ch=p_ch, p_t=p_t, eta_d=eta_d, snr=s,
                       capacity=channel_capacity(noise.bandwidth, s), iterations=iterations)
