"""Per-element front ends: RIS reflection, phase conjugation, saturable
amplification and the UE power splitter."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, SingularImpedanceError


@dataclass(frozen=True)
class ReflectionCoefficient:
    amplitude: float
    phase: float

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0 + 1e-12:
            raise InvalidParameterError(f"passive reflection amplitude {self.amplitude} outside [0, 1]")

    @property
    def value(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)


def _wrap_phase(phi: float) -> float:
    # [-pi, pi): +pi maps to -pi
    return float((phi + np.pi) % (2 * np.pi) - np.pi)


def reflection_from_impedance(Z: complex, Z0: float) -> ReflectionCoefficient:
    """Reflection coefficient ``(Z - Z0) / (Z + Z0)`` of a loaded unit cell."""
    den = Z + Z0
    if den == 0:
        raise SingularImpedanceError("load impedance equals -Z0")
    gamma = (Z - Z0) / den
    return ReflectionCoefficient(float(abs(gamma)), _wrap_phase(np.arctan2(gamma.imag, gamma.real)))


def apply_reflection(gamma: ReflectionCoefficient, incident):
    return gamma.value * np.asarray(incident)


def phase_conjugate(a) -> np.ndarray:
    return np.conj(np.asarray(a))


@dataclass(frozen=True)
class AmplifierModel:
    """Phase-preserving per-element power amplifier.

    In ``"linear"`` mode the output power is ``G0 * P_in``. In
    ``"saturable"`` mode it follows the soft limiter
    ``G0 * P_in / (1 + G0 * P_in / P_sat)``: slope ``G0`` at small signal,
    asymptote ``P_sat``.
    """

    small_signal_gain: float
    saturation_power: float = np.inf
    mode: str = "saturable"

    def __post_init__(self):
        if self.mode not in ("linear", "saturable"):
            raise InvalidParameterError(f"unknown amplifier mode {self.mode!r}")
        if not self.small_signal_gain >= 1.0:
            raise InvalidParameterError("small-signal gain must be >= 1")
        if not self.saturation_power > 0:
            raise InvalidParameterError("saturation power must be positive")

    @classmethod
    def from_db(cls, gain_db, saturation_power=np.inf, mode="saturable"):
        return cls(10.0 ** (gain_db / 10.0), saturation_power, mode)

    def power_gain(self, p_in):
        """Power gain ``P_out / P_in`` at input power ``p_in`` (watts)."""
        g0 = self.small_signal_gain
        if self.mode == "linear":
            return np.full_like(np.asarray(p_in, dtype=float), g0)
        return g0 / (1.0 + g0 * np.asarray(p_in, dtype=float) / self.saturation_power)

    def output_power(self, p_in):
        return self.power_gain(p_in) * np.asarray(p_in, dtype=float)


def amplify_element(model: AmplifierModel, a):
    """Amplify complex amplitude(s) ``a`` without changing their phase."""
    a = np.asarray(a, dtype=complex)
    return np.sqrt(model.power_gain(np.abs(a) ** 2)) * a


def ris_retroreflect(model: AmplifierModel, reflection_amplitude: float, incoming) -> np.ndarray:
    """Conjugate, passively reflect and amplify the field arriving at the RIS.

    The result is the next transmit excitation.
    """
    return amplify_element(model, reflection_amplitude * phase_conjugate(incoming))


@dataclass(frozen=True)
class SplitRatios:
    """UE power splitter: ``feedback`` (delta) is returned to the BS and
    ``information`` (gamma) of the remainder goes to the demodulator."""

    feedback: float = 0.005
    information: float = 0.005

    def __post_init__(self):
        if not (0.0 < self.feedback < 1.0 and 0.0 < self.information < 1.0):
            raise InvalidParameterError("split ratios must lie in (0, 1)")
        if not self.feedback + self.information < 1.0:
            raise InvalidParameterError("feedback + information ratio must be < 1")


def split_powers(ratios: SplitRatios, p_r: float):
    """``(returned, P_e, P_i)`` for received power ``p_r``."""
    d, g = ratios.feedback, ratios.information
    return d * p_r, (1 - g) * (1 - d) * p_r, g * (1 - d) * p_r


def ue_retroreflect(ratios: SplitRatios, incoming):
    """Split the UE field: return a conjugated, scaled copy to the BS.

    Returns:
        ``(returned_field, P_e, P_i)`` where the returned field keeps the
        received spatial profile scaled by ``sqrt(delta)``.
    """
    incoming = np.asarray(incoming, dtype=complex)
    p_r = float(np.vdot(incoming, incoming).real)
    _, p_e, p_i = split_powers(ratios, p_r)
    returned = np.sqrt(ratios.feedback) * phase_conjugate(incoming)
    return returned, p_e, p_i
