"""Field maps, beamwidth, parameter sweeps, FoV / d_max search and the SVD
oracle used to check the power cycle."""

import hashlib
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, svds

from .channel import ISOTROPIC, ChannelMatrix, _coefficients, _CHUNK, build_channel_matrix
from .config import ScenarioConfig, dump_config
from .errors import (BracketError, CalibrationError, DegenerateGeometryError, DegenerateOracleError, DivergenceError,
                     EmptyFovError, InconclusiveBeamwidthError, InvalidParameterError)
from .geometry import PlanarArray, Pose
from .power_cycle import CycleTrace, run_to_convergence
from .swipt import LinkMetrics, link_metrics


# ---- field maps -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservationGrid:
    """Square grid of ``samples x samples`` points on the plane of ``pose``,
    spanning ``[-half_extent, half_extent]`` along ``pose.u`` and ``pose.v``."""

    pose: Pose
    half_extent: float
    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise InvalidParameterError("observation grid needs at least 2 samples per axis")
        if not self.half_extent > 0:
            raise InvalidParameterError("observation grid half-extent must be positive")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.samples)

    def points(self, rows=None) -> np.ndarray:
        """Grid points, shape ``(n_rows * samples, 3)``; ``rows`` selects v-indices."""
        x = self.axis
        y = x if rows is None else x[np.atleast_1d(rows)]
        pts = self.pose.origin + y[:, None, None] * self.pose.v + x[None, :, None] * self.pose.u
        return pts.reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class FieldMap:
    """Power (W) on an observation grid; ``power[iv, iu]``.

    ``source`` is the centre of the radiating array, used to express
    widths as angles. ``rows`` holds the ``v`` coordinate of each row of
    ``power`` (the full grid axis unless the map is a partial cut).
    """

    grid: ObservationGrid
    power: np.ndarray
    source: np.ndarray
    rows: np.ndarray = None

    def __post_init__(self):
        if self.rows is None:
            object.__setattr__(self, "rows", self.grid.axis)

    @property
    def peak(self) -> float:
        return float(self.power.max())

    @property
    def peak_index(self) -> tuple:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.power), self.power.shape))

    def normalized(self) -> np.ndarray:
        peak = self.peak
        return self.power / peak if peak > 0 else np.zeros_like(self.power)


def _radiate(params, ris: PlanarArray, excitation, points) -> np.ndarray:
    out = np.empty(len(points))
    step = max(1, _CHUNK // ris.size)
    for lo in range(0, len(points), step):
        disp = points[lo:lo + step, None, :] - ris.positions[None, :, :]
        h = _coefficients(params, disp, ris.pose.boresight, np.zeros(3), params.tx_gain, 1.0,
                          params.tx_pattern, ISOTROPIC)
        out[lo:lo + step] = np.abs(h @ excitation) ** 2
    return out


def _check_grid(ris: PlanarArray, grid: ObservationGrid, points):
    signed = (points - ris.pose.origin) @ ris.pose.boresight
    if np.any(signed <= 0):
        raise DegenerateGeometryError("observation grid intersects or lies behind the RIS plane")


def field_map(params, ris: PlanarArray, excitation, grid: ObservationGrid) -> FieldMap:
    """Power radiated by ``excitation`` at every grid point.

    The probe at each point is a unit-gain isotropic receiver, so the value
    is ``|sum_t h(t -> p) a_t|**2`` in watts.
    """
    excitation = np.asarray(excitation, dtype=complex)
    if excitation.shape != (ris.size,):
        raise InvalidParameterError("excitation length does not match the RIS element count")
    pts = grid.points()
    _check_grid(ris, grid, pts)
    power = _radiate(params, ris, excitation, pts).reshape(grid.samples, grid.samples)
    return FieldMap(grid, power, ris.pose.origin.copy())


def field_cut(params, ris: PlanarArray, excitation, grid: ObservationGrid) -> FieldMap:
    """Like :func:`field_map` but only the centre row (the ``u`` cut).

    The returned map has a single row; use it with ``cut_axis="u"``.
    """
    excitation = np.asarray(excitation, dtype=complex)
    pts = grid.points(rows=grid.samples // 2)
    _check_grid(ris, grid, pts)
    power = _radiate(params, ris, excitation, pts).reshape(1, grid.samples)
    return FieldMap(grid, power, ris.pose.origin.copy(), rows=grid.axis[[grid.samples // 2]])


def expected_beamwidth(config: ScenarioConfig, distance=None) -> float:
    """Diffraction-limited -3 dB spot width ``0.886 lambda d / D`` (meters)."""
    d = config.distance_m if distance is None else distance
    aperture = config.ris_cols * config.spacing
    return 0.886 * config.wavelength * d / aperture


def observation_grid(config: ScenarioConfig, samples=None) -> ObservationGrid:
    """Grid parallel to the RIS through the UE centre, ``grid_width_factor``
    times the expected -3 dB width across."""
    half = 0.5 * config.grid_width_factor * expected_beamwidth(config)
    centre = config.ue_position()
    pose = Pose(origin=centre)
    return ObservationGrid(pose, half, samples or config.grid_samples)


def beamwidth_3db(fmap: FieldMap, cut_axis: str = "u", unit: str = "deg") -> float:
    """Width of the contiguous half-power interval around the peak.

    The cut runs through the peak along ``cut_axis`` (``"u"`` or ``"v"``);
    crossings are linearly interpolated between samples.

    Args:
        unit: ``"deg"`` for the angle the interval subtends at the source
            centre, ``"m"`` for its length in the observation plane.

    Raises:
        InconclusiveBeamwidthError: the peak or a crossing hits the grid edge.
    """
    iv, iu = fmap.peak_index
    pose = fmap.grid.pose
    if cut_axis == "u":
        profile, i, x = fmap.power[iv, :], iu, fmap.grid.axis
        ax, other, fixed = pose.u, pose.v, fmap.rows[iv]
    elif cut_axis == "v":
        if fmap.power.shape[0] < 2:
            raise InconclusiveBeamwidthError("map has no v extent")
        profile, i, x = fmap.power[:, iu], iv, fmap.rows
        ax, other, fixed = pose.v, pose.u, fmap.grid.axis[iu]
    else:
        raise ValueError(f"unknown cut axis {cut_axis!r}")
    n = len(profile)
    peak = profile[i]
    if peak <= 0 or i == 0 or i == n - 1:
        raise InconclusiveBeamwidthError("peak lies on the grid boundary")
    half = peak / 2.0
    hi = i
    while hi < n - 1 and profile[hi + 1] >= half:
        hi += 1
    lo = i
    while lo > 0 and profile[lo - 1] >= half:
        lo -= 1
    if hi == n - 1 or lo == 0:
        raise InconclusiveBeamwidthError("half-power crossing lies outside the grid")
    x_hi = x[hi] + (profile[hi] - half) / (profile[hi] - profile[hi + 1]) * (x[hi + 1] - x[hi])
    x_lo = x[lo] - (profile[lo] - half) / (profile[lo] - profile[lo - 1]) * (x[lo] - x[lo - 1])
    if unit == "m":
        return float(x_hi - x_lo)
    if unit != "deg":
        raise ValueError(f"unknown unit {unit!r}")
    p_hi = pose.origin + x_hi * ax + fixed * other - fmap.source
    p_lo = pose.origin + x_lo * ax + fixed * other - fmap.source
    cosang = np.dot(p_hi, p_lo) / (np.linalg.norm(p_hi) * np.linalg.norm(p_lo))
    return float(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))


def peak_to_sidelobe_ratio(fmap: FieldMap) -> float:
    """Main-lobe peak over the strongest sidelobe, in dB.

    The main lobe is every sample reachable from the peak along a path that
    never increases in power (4-connected); the sidelobe level is the
    maximum over the rest of the map. Returns ``inf`` if the main lobe
    covers the whole map.
    """
    p = fmap.power
    rows, cols = p.shape
    start = fmap.peak_index
    lobe = np.zeros_like(p, dtype=bool)
    lobe[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        here = p[r, c]
        for rr, cc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= rr < rows and 0 <= cc < cols and not lobe[rr, cc] and p[rr, cc] <= here:
                lobe[rr, cc] = True
                queue.append((rr, cc))
    rest = p[~lobe]
    if rest.size == 0 or rest.max() <= 0:
        return float("inf")
    return float(10 * np.log10(p[start] / rest.max()))


# ---- single runs and sweeps -------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    value: float
    status: str
    metrics: LinkMetrics

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True)
class SweepResult:
    variable: str
    points: tuple
    fingerprint: str

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p.metrics, name) for p in self.points])


def config_fingerprint(config: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(config).encode()).hexdigest()[:16]


def trace_metrics(config: ScenarioConfig, trace: CycleTrace) -> LinkMetrics:
    """SWIPT metrics of the last recorded state of ``trace``."""
    s = trace.final
    return link_metrics(s.p_t, s.p_r, s.eta_d, trace.iterations, config.split_ratios(), config.rectifier(),
                        config.noise(), config.amplifier().small_signal_gain, config.snr_signal)


def trace_status(trace: CycleTrace) -> str:
    if trace.divergence_flag:
        return "diverged"
    return "converged" if trace.converged else "max_iterations"


def evaluate(config: ScenarioConfig):
    """Run one scenario; divergence is reported in the status, not raised.

    Returns:
        ``(trace, status, metrics)``.
    """
    try:
        trace = run_to_convergence(config)
    except DivergenceError as exc:
        trace = exc.trace
    return trace, trace_status(trace), trace_metrics(config, trace)


def _point(args):
    config, variable, value = args
    _, status, metrics = evaluate(config)
    return SweepPoint(value, status, metrics)


def _run_points(base, variable, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_point, tasks))
    else:
        points = [_point(t) for t in tasks]
    return SweepResult(variable, tuple(points), config_fingerprint(base))


def sweep_distance(config: ScenarioConfig, distances=None, jobs: int = 1) -> SweepResult:
    distances = sorted(config.distances_m if distances is None else distances)
    if any(not d > 0 for d in distances):
        raise InvalidParameterError("distance must be positive")
    tasks = [(config.replace(distance_m=float(d)), "distance_m", float(d)) for d in distances]
    return _run_points(config, "distance_m", tasks, jobs)


def sweep_angle(config: ScenarioConfig, distance=None, angles=None, jobs: int = 1) -> SweepResult:
    d = config.distance_m if distance is None else distance
    angles = sorted(config.angles_deg if angles is None else angles)
    if any(not abs(a) < 90 for a in angles):
        raise InvalidParameterError("angles must satisfy |angle| < 90 degrees")
    tasks = [(config.replace(distance_m=float(d), angle_deg=float(a)), "angle_deg", float(a)) for a in angles]
    return _run_points(config.replace(distance_m=float(d)), "angle_deg", tasks, jobs)


def sweep_array_size(config: ScenarioConfig, sizes=None, jobs: int = 1) -> SweepResult:
    sizes = sorted(config.array_sizes if sizes is None else sizes)
    tasks = [(config.replace(ris_rows=int(n), ris_cols=int(n)), "array_size", int(n)) for n in sizes]
    return _run_points(config, "array_size", tasks, jobs)


def field_of_view(sweep: SweepResult, power_threshold: float) -> float:
    """Angular width (degrees) of the region around 0 deg where ``P_ch``
    stays at or above ``power_threshold``.

    Edges are linearly interpolated; a region reaching the end of the sweep
    stops at the last swept angle.
    """
    angles = sweep.values
    p = sweep.column("p_ch")
    zero = np.flatnonzero(np.isclose(angles, 0.0))
    if zero.size == 0:
        raise InvalidParameterError("angle sweep must include 0 degrees")
    i0 = int(zero[0])
    if p[i0] < power_threshold:
        raise EmptyFovError("charging power at 0 degrees is below the threshold")

    def edge(step):
        i = i0
        while 0 <= i + step < len(p) and p[i + step] >= power_threshold:
            i += step
        j = i + step
        if not 0 <= j < len(p):
            return angles[i]
        frac = (p[i] - power_threshold) / (p[i] - p[j])
        return angles[i] + frac * (angles[j] - angles[i])

    return float(edge(1) - edge(-1))


def steady_received_power(config: ScenarioConfig) -> float:
    """Received power of the last recorded cycle state (divergent runs
    report their last finite state)."""
    trace, _, _ = evaluate(config)
    return trace.final.p_r


def find_dmax(config: ScenarioConfig, threshold=None, bracket=None, resolution=None) -> float:
    """Distance at which the steady-state received power falls to ``threshold``.

    Bisection over ``bracket``; the returned value lies within
    ``resolution / 2`` of a bracketed crossing.

    Raises:
        BracketError: the power does not cross the threshold inside the bracket.
    """
    thr = config.dmax_threshold_w if threshold is None else threshold
    lo, hi = bracket or (config.dmax_min_m, config.dmax_max_m)
    res = config.dmax_resolution_m if resolution is None else resolution

    def above(d):
        return steady_received_power(config.replace(distance_m=float(d))) >= thr

    if not above(lo):
        raise BracketError(f"received power at {lo} m is already below {thr:g} W")
    if above(hi):
        raise BracketError(f"received power at {hi} m is still above {thr:g} W")
    while hi - lo > res:
        mid = 0.5 * (lo + hi)
        if above(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_saturation_power(config: ScenarioConfig, target_pr=None, distance=None,
                               rtol: float = 0.01, max_expansions: int = 40):
    """Find the amplifier saturation power that yields steady-state ``P_r = target_pr``.

    Starting from the proportional estimate (the steady state scales with
    ``P_sat`` when the amplifier is saturable), a bracket is widened
    geometrically until the response changes sign, checked to be
    increasing, and refined with Brent's method.

    Returns:
        ``(p_sat, achieved_pr)``; ``achieved_pr`` is within ``rtol`` of the target.

    Raises:
        CalibrationError: non-positive target, linear amplifier, a response
            that never brackets the target, or a final miss beyond ``rtol``.
    """
    target = config.calibration_target_w if target_pr is None else float(target_pr)
    d = config.calibration_distance_m if distance is None else float(distance)
    if not target > 0:
        raise CalibrationError("calibration target must be positive")
    if config.amplifier_mode != "saturable":
        raise CalibrationError("saturation power only affects the saturable amplifier")
    base = config.replace(distance_m=d)
    cache = {}

    def received(p_sat):
        if p_sat not in cache:
            cache[p_sat] = steady_received_power(base.replace(saturation_power_w=float(p_sat)))
        return cache[p_sat]

    p0 = base.saturation_power_w
    r0 = received(p0)
    if not r0 > 0:
        raise CalibrationError("steady-state received power is zero; the cycle does not sustain")
    guess = p0 * target / r0
    lo, hi = guess / 1.5, guess * 1.5
    for _ in range(max_expansions):
        f_lo, f_hi = received(lo) - target, received(hi) - target
        if f_lo <= 0 <= f_hi:
            break
        if f_lo > 0:
            lo /= 2.0
        if f_hi < 0:
            hi *= 2.0
    else:
        raise CalibrationError(f"target {target:g} W is not bracketed by the saturation-power search")
    if not received(hi) > received(lo):
        raise CalibrationError("received power is not increasing in saturation power over the bracket")
    p_sat = brentq(lambda p: received(p) - target, lo, hi, rtol=1e-9, xtol=1e-30)
    achieved = received(p_sat)
    if abs(achieved - target) > rtol * target:
        raise CalibrationError(f"calibration reached {achieved:g} W, outside {rtol:.0%} of {target:g} W")
    return float(p_sat), float(achieved)


# ---- oracle --------------------------------------------------------------------------


def svd_dominant_mode(H):
    """Dominant singular triple ``(sigma1, v1, u1)`` of ``H``.

    Uses a full LAPACK SVD for matrices up to 4096 columns and an
    implicitly restarted Lanczos solver beyond that; neither shares code
    with the power cycle. ``v1`` is the right vector (RIS side).
    """
    if isinstance(H, ChannelMatrix):
        if H.shape[0] * H.shape[1] <= 4096 * 4096:
            dense = H.to_dense()
        else:
            op = LinearOperator(H.shape, dtype=complex,
                                matvec=lambda x: H.matvec(np.ravel(x)),
                                rmatvec=lambda y: np.conj(H.T.matvec(np.conj(np.ravel(y)))))
            u, s, vh = svds(op, k=1, tol=1e-12, random_state=0)
            return _finish(float(s[0]), vh[0].conj(), u[:, 0])
    else:
        dense = np.asarray(H, dtype=complex)
    if not np.any(dense):
        raise DegenerateOracleError("zero channel matrix has no dominant mode")
    u, s, vh = scipy.linalg.svd(dense, full_matrices=False)
    return _finish(float(s[0]), vh[0].conj(), u[:, 0])


def _finish(sigma, v, u):
    if sigma == 0.0:
        raise DegenerateOracleError("zero channel matrix has no dominant mode")
    return sigma, v / np.linalg.norm(v), u / np.linalg.norm(u)
