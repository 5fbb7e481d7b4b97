import numpy as np
import pytest
from hypothesis import given, strategies as st

from retrolink.errors import InvalidParameterError, SingularImpedanceError
from retrolink.frontend import (AmplifierModel, ReflectionCoefficient, SplitRatios, amplify_element,
                                apply_reflection, phase_conjugate, reflection_from_impedance, ris_retroreflect,
                                split_powers, ue_retroreflect)

Z0 = 120 * np.pi


def test_reflection_from_impedance_cases():
    matched = reflection_from_impedance(Z0, Z0)
    assert matched.amplitude == 0.0
    short = reflection_from_impedance(0.0, Z0)
    assert (short.amplitude, short.phase) == (1.0, -np.pi)
    reactive = reflection_from_impedance(1j * Z0, Z0)
    assert reactive.amplitude == pytest.approx(1.0, rel=1e-15)
    assert reactive.phase == pytest.approx(np.pi / 2, rel=1e-15)
    with pytest.raises(SingularImpedanceError):
        reflection_from_impedance(-Z0, Z0)


@given(st.floats(0, 1e4), st.floats(-1e4, 1e4))
def test_passive_loads_reflect_at_most_unity(r, x):
    if r == 0 and x == 0:
        return
    g = reflection_from_impedance(complex(r, x), Z0)
    assert g.amplitude <= 1 + 1e-12
    assert -np.pi <= g.phase < np.pi


def test_apply_reflection():
    assert apply_reflection(ReflectionCoefficient(1.0, 0.0), 0.3 + 0.4j) == 0.3 + 0.4j
    out = apply_reflection(ReflectionCoefficient(0.95, 0.0), 1.0)
    assert abs(out) ** 2 == pytest.approx(0.9025, rel=1e-15)
    quarter = ReflectionCoefficient(1.0, np.pi / 2)
    twice = apply_reflection(quarter, apply_reflection(quarter, 1.0))
    assert np.angle(twice) == pytest.approx(np.pi, rel=1e-12)


def test_phase_conjugate():
    assert phase_conjugate(np.exp(1j * np.pi / 3)) == pytest.approx(np.exp(-1j * np.pi / 3))
    assert phase_conjugate(2.5) == 2.5
    a = np.array([1 + 2j, -3j, 0.5])
    np.testing.assert_array_equal(phase_conjugate(phase_conjugate(a)), a)


def test_amplifier_points():
    g0 = 10 ** 2.563
    lin = AmplifierModel.from_db(25.63, mode="linear")
    assert lin.small_signal_gain == pytest.approx(365.6, rel=1e-4)
    out = amplify_element(lin, np.sqrt(1e-9))
    assert abs(out) ** 2 == pytest.approx(g0 * 1e-9, rel=1e-12)
    sat = AmplifierModel(g0, 1e-3)
    assert sat.output_power(1e-3 / g0) == pytest.approx(0.5e-3, rel=1e-12)
    assert sat.output_power(1e6) == pytest.approx(1e-3, rel=1e-6)
    # small-signal slope
    assert sat.output_power(1e-15) / 1e-15 == pytest.approx(g0, rel=1e-9)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_saturable_monotone_and_bounded(p1, p2):
    amp = AmplifierModel(365.6, 2e-5)
    lo, hi = sorted((p1, p2))
    assert amp.output_power(lo) <= amp.output_power(hi)
    assert amp.output_power(hi) <= 2e-5


@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=20), st.sampled_from(["linear", "saturable"]))
def test_retroreflect_negates_phase(values, mode):
    a = np.array(values)
    out = ris_retroreflect(AmplifierModel(365.6, 1e-3, mode), 0.95, a)
    # phases of very small values are checked where the product does not underflow
    nz = np.abs(out * a) > 0
    np.testing.assert_allclose(np.angle(out[nz] * a[nz]), 0.0, atol=1e-9)
    assert np.all(out[a == 0] == 0)
    assert np.all((out != 0) == (a != 0))


def test_retroreflect_linear_scaling():
    a = np.full(6, 0.2 + 0j)
    out = ris_retroreflect(AmplifierModel(365.6, mode="linear"), 0.95, a)
    np.testing.assert_allclose(np.abs(out) ** 2, 0.9025 * 365.6 * 0.04, rtol=1e-12)
    np.testing.assert_array_equal(ris_retroreflect(AmplifierModel(10.0), 0.95, np.zeros(3)), 0)


def test_ue_split_arithmetic():
    ratios = SplitRatios(0.005, 0.005)
    incoming = np.sqrt(np.array([4e-3, 6e-3])) * np.exp(1j * np.array([0.3, -1.1]))
    returned, p_e, p_i = ue_retroreflect(ratios, incoming)
    assert np.sum(np.abs(returned) ** 2) == pytest.approx(0.05e-3, rel=1e-12)
    assert p_i == pytest.approx(0.04975e-3, rel=1e-12)
    assert p_e == pytest.approx(9.90025e-3, rel=1e-12)
    np.testing.assert_allclose(np.angle(returned), -np.angle(incoming), atol=1e-15)


@given(st.floats(1e-6, 0.49), st.floats(1e-6, 0.49), st.floats(1e-12, 10))
def test_ue_energy_accounting(d, g, p):
    ret, p_e, p_i = split_powers(SplitRatios(d, g), p)
    assert ret + p_e + p_i == pytest.approx(p, rel=1e-12)
    assert p_e + p_i == pytest.approx((1 - d) * p, rel=1e-12)


def test_split_guards():
    for bad in ((1.0, 0.005), (0.0, 0.1), (0.6, 0.5)):
        with pytest.raises(InvalidParameterError):
            SplitRatios(*bad)
    with pytest.raises(InvalidParameterError):
        AmplifierModel(0.5)
    with pytest.raises(InvalidParameterError):
        ReflectionCoefficient(1.5, 0.0)
