import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from windtwin.atmosphere import (
    RHO_STANDARD,
    AtmosphericState,
    density,
    density_dry,
    density_humid,
    saturation_pressure,
)
from windtwin.errors import DomainError

temps = st.floats(240.0, 320.0)
pressures = st.floats(80000.0, 110000.0)
humidities = st.floats(0.0, 1.0)


def ideal_gas_oracle(T, p, pv=0.0):
    # mixture of dry air and vapour, written out independently
    return ((p - pv) * 0.0289652 + pv * 0.018016) / (8.31446 * T)


@pytest.mark.parametrize("T,expected", [(288.15, 1.2250), (293.15, 1.2041)])
def test_dry_density_examples(T, expected):
    assert density_dry(T, 101325.0) == pytest.approx(expected, abs=5e-4)


def test_standard_density_is_consistent_with_formula():
    assert abs(density_dry(288.15, 101325.0) / RHO_STANDARD - 1) < 1e-3


def test_dry_density_is_linear_in_pressure():
    assert density_dry(280.0, 2 * 95000.0) == pytest.approx(2 * density_dry(280.0, 95000.0), rel=1e-15)


def test_saturation_pressure_at_freezing_is_611_pa():
    assert saturation_pressure(273.15) == 611.0


def test_saturation_pressure_at_20c():
    # celsius form of the same relation as an independent oracle
    t = 20.0
    oracle = 611.0 * 10 ** (7.5 * t / (t + 237.3))
    assert saturation_pressure(293.15) == pytest.approx(oracle, rel=1e-12)
    assert abs(saturation_pressure(293.15) - 2339.0) < 5.0


def test_saturation_pressure_increases():
    assert saturation_pressure(303.15) > saturation_pressure(293.15)


def test_saturated_density_at_20c():
    assert density_humid(293.15, 101325.0, 1.0) == pytest.approx(1.1936, abs=1e-3)
    oracle = ideal_gas_oracle(293.15, 101325.0, saturation_pressure(293.15))
    assert density_humid(293.15, 101325.0, 1.0) == pytest.approx(oracle, rel=1e-12)


def test_arrays_broadcast():
    T = np.array([273.15, 288.15, 303.15])
    out = density_humid(T, 101325.0, 0.5)
    assert out.shape == (3,)
    assert np.all(np.diff(out) < 0)


@pytest.mark.parametrize("call", [
    lambda: density_dry(0.0, 101325.0),
    lambda: density_dry(-5.0, 101325.0),
    lambda: density_dry(280.0, 0.0),
    lambda: saturation_pressure(35.85),
    lambda: density_humid(280.0, 101325.0, 1.5),
    lambda: density_humid(280.0, 101325.0, float("nan")),
    lambda: density_humid(373.0, 1000.0, 1.0),
    lambda: AtmosphericState(0.0, 101325.0),
    lambda: AtmosphericState(280.0, 101325.0, -0.1),
    lambda: density(AtmosphericState(280.0, 101325.0), humid=True),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_state_dispatch():
    s = AtmosphericState(285.0, 100000.0, 0.7)
    assert density(s) == density_dry(285.0, 100000.0)
    assert density(s, humid=True) == density_humid(285.0, 100000.0, 0.7)


@given(temps, pressures)
def test_zero_humidity_equals_dry_exactly(T, p):
    assert density_humid(T, p, 0.0) == density_dry(T, p)


@given(temps, pressures, humidities)
def test_humid_never_exceeds_dry(T, p, phi):
    assert density_humid(T, p, phi) <= density_dry(T, p)


@given(temps, pressures, humidities, humidities)
def test_humid_density_decreases_with_humidity(T, p, a, b):
    lo, hi = sorted((a, b))
    assert density_humid(T, p, hi) <= density_humid(T, p, lo)


@given(temps, pressures, humidities)
def test_humid_matches_mixture_oracle(T, p, phi):
    pv = phi * 611.0 * 10 ** (7.5 * (T - 273.15) / (T - 273.15 + 237.3))
    assert density_humid(T, p, phi) == pytest.approx(ideal_gas_oracle(T, p, pv), rel=1e-12)
