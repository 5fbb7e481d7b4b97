"""THz line-of-sight channel between planar arrays.

Signals are power-wave amplitudes: ``|a|**2`` is power in watts. A link
coefficient ``h`` therefore carries the full Friis power ratio, including
the receive aperture, so that ``|h|**2 * P_t`` is the received power.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import DegenerateGeometryError, InvalidParameterError, ShapeError
from .geometry import PlanarArray, Pose, vec3

SPEED_OF_LIGHT = 3.0e8
FREE_SPACE_IMPEDANCE = 120 * np.pi

# Entries per chunk when materialising dense blocks (bounds peak memory).
_CHUNK = 1 << 21


@dataclass(frozen=True)
class RadiationPattern:
    """Normalised element power pattern ``F(theta)``.

    kind is one of ``"cosine"`` (cos theta over the front hemisphere),
    ``"isotropic_hemisphere"`` (1 over the front hemisphere) or
    ``"isotropic"`` (1 everywhere).
    """

    kind: str = "cosine"

    _KINDS = ("cosine", "isotropic_hemisphere", "isotropic")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidParameterError(f"unknown pattern kind {self.kind!r}")

    def value_from_cos(self, cos_theta):
        cos_theta = np.asarray(cos_theta, dtype=float)
        if self.kind == "cosine":
            return np.where(cos_theta > 0.0, cos_theta, 0.0)
        if self.kind == "isotropic_hemisphere":
            return np.where(cos_theta >= 0.0, 1.0, 0.0)
        return np.ones_like(cos_theta)

    @property
    def directivity(self) -> float:
        return directivity(self)


COSINE = RadiationPattern("cosine")
ISOTROPIC = RadiationPattern("isotropic")


def pattern_value(pattern: RadiationPattern, theta):
    """Pattern value at polar angle ``theta`` (radians, clamped to [0, pi])."""
    theta = np.clip(theta, 0.0, np.pi)
    out = pattern.value_from_cos(np.cos(theta))
    if pattern.kind == "cosine":
        # cos(pi/2) is 6e-17 in floating point; the hemisphere edge is a hard zero
        out = np.where(theta >= np.pi / 2, 0.0, out)
    return out[()] if np.ndim(out) == 0 else out


def directivity(pattern: RadiationPattern) -> float:
    """Peak directivity ``4 pi / integral(F sin theta dtheta dphi)``.

    The solid-angle integrals are analytic: pi for the cosine hemisphere,
    2 pi for the uniform hemisphere and 4 pi for the isotropic pattern.
    """
    integral = {"cosine": np.pi, "isotropic_hemisphere": 2 * np.pi, "isotropic": 4 * np.pi}[pattern.kind]
    return 4 * np.pi / integral


@dataclass(frozen=True)
class ChannelParams:
    carrier_frequency: float = 135e9
    absorption_db_per_m: float = 9.217e-4
    impedance: float = FREE_SPACE_IMPEDANCE
    tx_gain: float = np.pi
    rx_gain: float = np.pi
    tx_pattern: RadiationPattern = COSINE
    rx_pattern: RadiationPattern = COSINE

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise InvalidParameterError("carrier frequency must be positive")
        if not self.absorption_db_per_m >= 0:
            raise InvalidParameterError("absorption coefficient must be non-negative")
        if not self.impedance > 0:
            raise InvalidParameterError("characteristic impedance must be positive")
        if not (self.tx_gain > 0 and self.rx_gain > 0):
            raise InvalidParameterError("element gains must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def key(self) -> tuple:
        return (self.carrier_frequency, self.absorption_db_per_m, self.impedance,
                self.tx_gain, self.rx_gain, self.tx_pattern.kind, self.rx_pattern.kind)


def spreading_loss(f_c, d):
    """Free-space spreading loss ``(4 pi f_c d / c)**2``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise InvalidParameterError("distance must be positive")
    if not np.all(np.asarray(f_c) > 0):
        raise InvalidParameterError("frequency must be positive")
    out = (4 * np.pi * f_c * d / SPEED_OF_LIGHT) ** 2
    return out[()] if np.ndim(out) == 0 else out


def absorption_loss(alpha_db_per_m, d):
    """Molecular absorption loss ``10**(alpha d / 10)`` for alpha in dB/m."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise InvalidParameterError("distance must be non-negative")
    if np.any(np.asarray(alpha_db_per_m) < 0):
        raise InvalidParameterError("absorption coefficient must be non-negative")
    out = 10.0 ** (alpha_db_per_m * d / 10.0)
    return out[()] if np.ndim(out) == 0 else out


def _coefficients(params, disp, tx_boresight, rx_boresight, tx_gain, rx_gain,
                  tx_pattern, rx_pattern):
    """Link coefficients for displacement vectors ``disp = rx - tx`` (..., 3)."""
    d = np.sqrt(np.einsum("...i,...i->...", disp, disp))
    if np.any(d == 0.0):
        raise DegenerateGeometryError("coincident transmit and receive points")
    cos_t = (disp @ tx_boresight) / d
    cos_r = -(disp @ rx_boresight) / d
    lam = params.wavelength
    power = (tx_gain * rx_gain * lam ** 2
             * tx_pattern.value_from_cos(cos_t) * rx_pattern.value_from_cos(cos_r)
             / ((4 * np.pi * d) ** 2 * 10.0 ** (params.absorption_db_per_m * d / 10.0)))
    return np.sqrt(power) * np.exp(-2j * np.pi * d / lam)


def link_coefficient(params: ChannelParams, tx_point, tx_pose: Pose, rx_point, rx_pose: Pose) -> complex:
    """Complex power-wave coefficient of one transmit/receive element pair.

    ``|h|**2`` equals the Friis power ratio with absorption, patterns and
    element gains; the phase is ``-2 pi d / lambda``.
    """
    disp = vec3(rx_point) - vec3(tx_point)
    h = _coefficients(params, disp, tx_pose.boresight, rx_pose.boresight,
                      params.tx_gain, params.rx_gain, params.tx_pattern, params.rx_pattern)
    return complex(h)


def _fingerprint(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


@dataclass(eq=False)
class ChannelMatrix:
    """Complex channel ``H`` of shape ``(n_rx, n_tx)``.

    Two storage forms are supported. ``dense`` holds every entry. When the
    transmit and receive arrays share the row axis and row pitch, every
    entry depends on the row-index difference only, so the matrix is stored
    as a row-Toeplitz kernel ``K[m_rx, m_tx, n_rx - n_tx + N_tx - 1]`` and
    products use FFTs along the row dimension. Both forms give the same
    products to rounding error.
    """

    shape: tuple
    frequency: float
    fingerprint: str
    dense: np.ndarray = None
    kernel: np.ndarray = None
    grid: tuple = None  # (rows_rx, cols_rx, rows_tx, cols_tx) for kernel form
    _khat: np.ndarray = field(default=None, repr=False)
    _fft_len: int = field(default=0, repr=False)
    _transpose: "ChannelMatrix" = field(default=None, repr=False)

    @property
    def structured(self) -> bool:
        return self.kernel is not None

    def _prepare(self):
        if self._khat is None:
            nr, _, nt, _ = self.grid
            self._fft_len = scipy.fft.next_fast_len(nr + nt - 1)
            khat = scipy.fft.fft(self.kernel, n=self._fft_len, axis=-1)
            self._khat = np.ascontiguousarray(np.moveaxis(khat, -1, 0))
        return self._khat

    def matvec(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if a.shape != (self.shape[1],):
            raise ShapeError(f"vector of length {a.shape} does not match channel {self.shape}")
        if not self.structured:
            return self.dense @ a
        nr, mr, nt, mt = self.grid
        khat = self._prepare()
        ahat = scipy.fft.fft(a.reshape(nt, mt), n=self._fft_len, axis=0)
        yhat = np.matmul(khat, ahat[:, :, None])[:, :, 0]
        y = scipy.fft.ifft(yhat, axis=0)[nt - 1:nt - 1 + nr]
        return y.reshape(-1)

    __matmul__ = matvec

    @property
    def T(self) -> "ChannelMatrix":
        """Transpose (no conjugation): the reciprocal uplink channel."""
        if self._transpose is None:
            self._transpose = self._make_transpose()
            self._transpose._transpose = self
        return self._transpose

    def _make_transpose(self) -> "ChannelMatrix":
        shape = (self.shape[1], self.shape[0])
        fp = _fingerprint("T", self.fingerprint)
        if not self.structured:
            return ChannelMatrix(shape, self.frequency, fp, dense=self.dense.T)
        nr, mr, nt, mt = self.grid
        kernel = self.kernel.transpose(1, 0, 2)[:, :, ::-1]
        return ChannelMatrix(shape, self.frequency, fp, kernel=kernel, grid=(nt, mt, nr, mr))

    def to_dense(self) -> np.ndarray:
        if not self.structured:
            return self.dense
        nr, mr, nt, mt = self.grid
        n_r = np.repeat(np.arange(nr), mr)
        m_r = np.tile(np.arange(mr), nr)
        n_t = np.repeat(np.arange(nt), mt)
        m_t = np.tile(np.arange(mt), nt)
        s = n_r[:, None] - n_t[None, :] + nt - 1
        return self.kernel[m_r[:, None], m_t[None, :], s]


def _dense_block(params, tx: PlanarArray, rx_points, rx_boresight, rx_gain, rx_pattern):
    tx_pts = tx.positions
    out = np.empty((len(rx_points), len(tx_pts)), dtype=complex)
    step = max(1, _CHUNK // len(tx_pts))
    for lo in range(0, len(rx_points), step):
        disp = rx_points[lo:lo + step, None, :] - tx_pts[None, :, :]
        out[lo:lo + step] = _coefficients(params, disp, tx.pose.boresight, rx_boresight,
                                          params.tx_gain, rx_gain, params.tx_pattern, rx_pattern)
    return out


def _row_toeplitz_compatible(tx: PlanarArray, rx: PlanarArray) -> bool:
    return (tx.dy == rx.dy
            and np.max(np.abs(tx.pose.v - rx.pose.v)) <= 1e-15)


def build_channel_matrix(params: ChannelParams, tx: PlanarArray, rx: PlanarArray,
                         structure: str = "auto") -> ChannelMatrix:
    """Downlink channel from every ``tx`` element to every ``rx`` element.

    Args:
        params: Carrier, absorption and element-gain parameters.
        tx: Transmitting array (columns of the matrix).
        rx: Receiving array (rows of the matrix).
        structure: ``"auto"`` picks the row-Toeplitz form when the two
            arrays share row axis and pitch, ``"dense"`` forces full storage.
    """
    if structure not in ("auto", "dense"):
        raise ValueError(f"unknown structure {structure!r}")
    shape = (rx.size, tx.size)
    fp = _fingerprint(params.key(), tx.key(), rx.key())
    if structure == "auto" and _row_toeplitz_compatible(tx, rx):
        nr, mr, nt, mt = rx.rows, rx.cols, tx.rows, tx.cols
        p_r, p_t = rx.pose, tx.pose
        col_r = (np.arange(mr) - (mr - 1) / 2.0) * rx.dx
        col_t = (np.arange(mt) - (mt - 1) / 2.0) * tx.dx
        dn = np.arange(nr + nt - 1) - (nt - 1)
        row = (dn - (nr - 1) / 2.0 + (nt - 1) / 2.0) * rx.dy
        disp = ((p_r.origin - p_t.origin)
                + col_r[:, None, None, None] * p_r.u
                - col_t[None, :, None, None] * p_t.u
                + row[None, None, :, None] * p_r.v)
        kernel = _coefficients(params, disp, p_t.boresight, p_r.boresight, params.tx_gain,
                               params.rx_gain, params.tx_pattern, params.rx_pattern)
        return ChannelMatrix(shape, params.carrier_frequency, fp, kernel=kernel, grid=(nr, mr, nt, mt))
    dense = _dense_block(params, tx, rx.positions, rx.pose.boresight, params.rx_gain, params.rx_pattern)
    return ChannelMatrix(shape, params.carrier_frequency, fp, dense=dense)


def propagate(H: ChannelMatrix, a) -> np.ndarray:
    """Field at the receive elements, ``b = H a``."""
    return H.matvec(a)


def total_power(a) -> float:
    return float(np.vdot(a, a).real)
