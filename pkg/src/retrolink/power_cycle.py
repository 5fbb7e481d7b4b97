"""Retro-reflective BS <-> UE power cycle.

One iteration maps the RIS excitation ``a`` through the downlink ``H``,
the UE splitter and conjugator, the reciprocal uplink ``H.T`` and the RIS
conjugator/amplifier. With a linear amplifier the net map is
``a -> c * (H^H H) a`` for a positive scalar ``c``, so the cycle is a power
iteration whose fixed direction is the dominant right singular vector of
``H``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelMatrix, total_power
from .errors import DivergenceError, InvalidParameterError, NotConvergedError, NumericalOverflowError
from .frontend import AmplifierModel, SplitRatios, ris_retroreflect, ue_retroreflect
from .geometry import PlanarArray


@dataclass(frozen=True)
class ConvergenceCriteria:
    absolute_tolerance: float = 1e-6
    relative_tolerance: float = 1e-6
    max_iterations: int = 500
    consecutive_hits_required: int = 3
    divergence_power: float = 1e6

    def __post_init__(self):
        if not (self.absolute_tolerance > 0 and self.relative_tolerance > 0):
            raise InvalidParameterError("tolerances must be positive")
        if self.max_iterations < 1 or self.consecutive_hits_required < 1:
            raise InvalidParameterError("max_iterations and consecutive_hits_required must be >= 1")

    def tolerance(self, reference: float) -> float:
        return max(self.absolute_tolerance, self.relative_tolerance * abs(reference))


@dataclass(frozen=True, eq=False)
class CycleState:
    """Completed record of iteration ``iteration``.

    ``ris_excitation`` is the excitation the iteration started from and
    ``next_excitation`` the amplified field that seeds the next one.
    """

    iteration: int
    ris_excitation: np.ndarray
    next_excitation: np.ndarray
    p_t: float
    p_r: float
    p_t_next: float
    eta_d: float
    eta_up: float
    p_up: float
    loss: float
    gain: float
    p_e: float
    p_i: float


@dataclass(eq=False)
class CycleTrace:
    states: list = field(default_factory=list)
    converged: bool = False
    divergence_flag: bool = False

    @property
    def final(self) -> CycleState:
        return self.states[-1]

    @property
    def iterations(self) -> int:
        return len(self.states)

    def rows(self):
        """Per-iteration export rows ``(i, P_t, P_r, eta_d, loss, gain)``."""
        return [(s.iteration, s.p_t, s.p_r, s.eta_d, s.loss, s.gain) for s in self.states]


def initial_excitation(ris: PlanarArray, power_density: float, seed: Optional[int] = None) -> np.ndarray:
    """Plane-wave feed illumination: ``S dx dy`` watts on every element.

    Phases are zero, or uniform in [-pi, pi) from ``numpy.random.default_rng(seed)``
    when a seed is given.
    """
    if not power_density > 0:
        raise InvalidParameterError("power density must be positive")
    amp = np.sqrt(power_density * ris.dx * ris.dy)
    if seed is None:
        return np.full(ris.size, amp, dtype=complex)
    rng = np.random.default_rng(seed)
    return amp * np.exp(1j * rng.uniform(-np.pi, np.pi, ris.size))


def cycle_step(excitation, H_down: ChannelMatrix, amplifier: AmplifierModel,
               reflection_amplitude: float, ratios: SplitRatios, iteration: int = 1) -> CycleState:
    """Run one downlink/uplink round trip starting from ``excitation``."""
    a = np.asarray(excitation, dtype=complex)
    p_t = total_power(a)
    b = H_down.matvec(a)
    p_r = total_power(b)
    returned, p_e, p_i = ue_retroreflect(ratios, b)
    c = H_down.T.matvec(returned)
    p_up = total_power(c)
    a_next = ris_retroreflect(amplifier, reflection_amplitude, c)
    p_t_next = total_power(a_next)
    if not (np.isfinite(p_t_next) and np.isfinite(p_r)):
        raise NumericalOverflowError(f"non-finite field at iteration {iteration}")

    eta_d = p_r / p_t if p_t > 0 else 0.0
    p_ret = ratios.feedback * p_r
    eta_up = p_up / p_ret if p_ret > 0 else 0.0
    round_trip = ratios.feedback * eta_up * eta_d
    return CycleState(
        iteration=iteration, ris_excitation=a, next_excitation=a_next,
        p_t=p_t, p_r=p_r, p_t_next=p_t_next, eta_d=eta_d, eta_up=eta_up,
        p_up=p_up, loss=(1.0 - round_trip) * p_t, gain=p_t_next - round_trip * p_t,
        p_e=p_e, p_i=p_i,
    )


def run_cycle(H_down: ChannelMatrix, excitation, amplifier: AmplifierModel,
              reflection_amplitude: float, ratios: SplitRatios,
              criteria: ConvergenceCriteria = ConvergenceCriteria(), on_state=None,
              min_iterations: int = 0) -> CycleTrace:
    """Iterate :func:`cycle_step` until the received power settles.

    An iteration counts as a hit when both ``|P_r^{i+1} - P_r^i|`` and
    ``|gain_i - loss_i|`` are below ``criteria.tolerance`` of the current
    power, the change in ``P_r`` is not growing from one iteration to the
    next (unless it is already below the relative tolerance), and ``eta_d``
    changed by at most the relative tolerance. The last two conditions keep a
    loop that starts very weak, where every step is below the absolute
    floor while the mode is still forming or ramping up, from being
    declared steady. ``consecutive_hits_required`` hits in a row end the run.

    Args:
        on_state: Optional callback invoked with every completed state.
        min_iterations: Keep iterating at least this long even once the
            convergence test passes (used to reach field-map checkpoints).

    Raises:
        DivergenceError: transmit power exceeded ``criteria.divergence_power``
            or became non-finite. The partial trace is attached.
    """
    trace = CycleTrace()
    a = np.asarray(excitation, dtype=complex)
    hits = 0
    prev = None
    prev_step = np.inf
    for i in range(1, criteria.max_iterations + 1):
        try:
            state = cycle_step(a, H_down, amplifier, reflection_amplitude, ratios, iteration=i)
        except NumericalOverflowError as exc:
            trace.divergence_flag = True
            exc.trace = trace
            raise
        trace.states.append(state)
        if on_state is not None:
            on_state(state)
        if state.p_t_next > criteria.divergence_power:
            trace.divergence_flag = True
            raise DivergenceError(
                f"transmit power {state.p_t_next:.3g} W exceeds {criteria.divergence_power:g} W "
                f"at iteration {i}", trace)
        if prev is not None:
            step = abs(state.p_r - prev.p_r)
            stable_r = step < criteria.tolerance(prev.p_r)
            # below the absolute floor a geometrically growing loop also has tiny steps
            settling = step <= criteria.relative_tolerance * prev.p_r or step <= prev_step
            mode_settled = abs(state.eta_d - prev.eta_d) <= criteria.relative_tolerance * prev.eta_d
            balanced = abs(state.gain - state.loss) < criteria.tolerance(state.p_t)
            hits = hits + 1 if (stable_r and settling and mode_settled and balanced) else 0
            prev_step = step
            if hits >= criteria.consecutive_hits_required and i >= min_iterations:
                trace.converged = True
                break
        prev = state
        a = state.next_excitation
    return trace


def run_to_convergence(config, criteria: Optional[ConvergenceCriteria] = None, H_down=None,
                       on_state=None, min_iterations: int = 0) -> CycleTrace:
    """Build the scenario described by ``config`` and run its power cycle.

    Args:
        config: A :class:`retrolink.config.ScenarioConfig`.
        criteria: Overrides the convergence criteria of ``config``.
        H_down: Pre-built downlink channel for this geometry, if any.
    """
    from .channel import build_channel_matrix

    ris = config.ris_array()
    if H_down is None:
        H_down = build_channel_matrix(config.channel_params(), ris, config.ue_array())
    a0 = initial_excitation(ris, config.power_density_w_m2, config.seed)
    return run_cycle(H_down, a0, config.amplifier(), config.reflection_amplitude, config.split_ratios(),
                     criteria or config.criteria(), on_state=on_state, min_iterations=min_iterations)


def transmission_efficiency(trace: CycleTrace) -> float:
    if not trace.converged:
        raise NotConvergedError("power cycle did not converge")
    return trace.final.eta_d


def ledger_residuals(state: CycleState, delta: float):
    """Relative residuals of the per-iteration loss/gain identities.

    The recorded loss and gain are compared against the powers actually
    measured in the loop: the round-trip factor ``delta eta_up eta_d P_t``
    must equal the uplink power arriving back at the RIS, and ``eta_d``
    must equal ``P_r / P_t``.

    Returns:
        ``(loss_residual, gain_residual, eta_d_residual)``, relative.
    """
    scale = max(state.p_t, state.p_t_next, np.finfo(float).tiny)
    loss = state.p_t - state.p_up
    gain = state.p_t_next - state.p_up
    eta = state.p_r / state.p_t if state.p_t > 0 else 0.0
    round_trip = delta * state.eta_up * state.eta_d * state.p_t
    return (abs(loss - state.loss) / scale,
            abs(gain - state.gain) / scale,
            max(abs(eta - state.eta_d), abs(round_trip - state.p_up) / scale))
