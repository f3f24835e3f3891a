import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cryonoise.constants import HBAR, KB, QE
from cryonoise.errors import DomainError
from cryonoise.physics import (epsilon_from_temperature, epsilon_from_voltage, occupation_from_psd,
                               planck_occupation, psd_from_occupation, quantum_limit,
                               shot_occupation, source_qualification, temperature_from_epsilon,
                               voltage_from_epsilon)
from cryonoise.sparams import TwoPortSParams

freqs = st.floats(1e8, 5e10)
temps = st.floats(1e-4, 300.0)


def test_planck_zero_temperature_is_exactly_half():
    assert planck_occupation(5e9, 0.0) == 0.5
    assert np.all(planck_occupation(np.linspace(1e9, 1e10, 7), 0.0) == 0.5)


def test_planck_room_temperature_value():
    # hand value: coth(x)/2 with x = hbar w / 2kT
    x = HBAR * 2 * np.pi * 5e9 / (2 * KB * 295.0)
    assert planck_occupation(5e9, 295.0) == pytest.approx(0.5 / np.tanh(x), rel=1e-14)
    assert planck_occupation(5e9, 295.0) == pytest.approx(1229.36, abs=0.01)


@given(freqs, temps)
def test_planck_bounds_and_classical_limit(f, T):
    n = planck_occupation(f, T)
    classical = KB * T / (HBAR * 2 * np.pi * f)
    assert n >= 0.5
    assert n >= classical
    # coth(x)/2 - 1/(2x) lies in [0, x/6]
    assert n - classical <= 0.5 + 1e-12


@given(freqs, temps, temps)
def test_planck_monotone_in_temperature(f, t1, t2):
    lo, hi = sorted((t1, t2))
    assert planck_occupation(f, lo) <= planck_occupation(f, hi)


def test_planck_rejects_bad_domain():
    with pytest.raises(DomainError):
        planck_occupation(5e9, -1.0)
    with pytest.raises(DomainError):
        planck_occupation(0.0, 1.0)
    with pytest.raises(DomainError):
        planck_occupation(5e9, np.nan)


def test_planck_broadcasts():
    out = planck_occupation(np.array([4e9, 5e9])[:, None], np.array([0.0, 0.1, 1.0])[None, :])
    assert out.shape == (2, 3)
    assert np.all(out[:, 0] == 0.5)


def _shot_mp(f, V, T):
    mpmath.mp.dps = 40
    hw = mpmath.mpf(HBAR) * 2 * mpmath.pi * f
    ev = mpmath.mpf(QE) * V
    tkt = 2 * mpmath.mpf(KB) * T
    total = 0
    for x in (ev + hw, ev - hw):
        total += abs(x) if T == 0 else (tkt if x == 0 else x * mpmath.coth(x / tkt))
    return float(total / (4 * hw))


@given(st.floats(1e9, 2e10), st.floats(-1e-3, 1e-3), st.floats(0.0, 5.0))
def test_shot_matches_high_precision_oracle(f, V, T):
    assert shot_occupation(f, V, T) == pytest.approx(_shot_mp(f, V, T), rel=1e-11)


@given(freqs, temps)
def test_shot_reduces_to_planck_at_zero_bias(f, T):
    assert shot_occupation(f, 0.0, T) == pytest.approx(planck_occupation(f, T), rel=1e-12)


def test_shot_zero_bias_zero_temperature():
    assert shot_occupation(5e9, 0.0, 0.0) == 0.5


@pytest.mark.parametrize("T", [0.0, 0.01, 0.05])
def test_shot_large_bias_tends_to_epsilon(T):
    f = 5e9
    V = voltage_from_epsilon(100.0, f)
    assert shot_occupation(f, V, T) == pytest.approx(100.0, rel=0.01)


@given(st.floats(1e9, 1e10), st.floats(0, 1e-3), st.floats(0, 2.0))
def test_shot_even_in_bias(f, V, T):
    assert shot_occupation(f, V, T) == pytest.approx(shot_occupation(f, -V, T), rel=1e-13)


def test_quantum_limit_values():
    assert quantum_limit(1.0) == 0.0
    assert quantum_limit(100.0) == pytest.approx(0.495)
    assert quantum_limit(1e12) == pytest.approx(0.5, abs=1e-11)
    with pytest.raises(DomainError):
        quantum_limit(0.0)


@given(st.floats(1.0, 1e9))
def test_quantum_limit_monotone_below_half(G):
    q = quantum_limit(G)
    assert 0 <= q < 0.5
    assert quantum_limit(G * 2) >= q


@given(st.floats(0.5, 1e4), freqs, st.floats(1e5, 1e9), st.floats(0.1, 50))
def test_psd_roundtrip(n, f, g, t):
    psd = psd_from_occupation(n, f, g, t)
    assert occupation_from_psd(psd, f, g, t) == pytest.approx(n, rel=1e-9, abs=1e-9)


@given(st.floats(1e-3, 1e3), freqs)
def test_control_parameter_roundtrips(x, f):
    assert epsilon_from_temperature(temperature_from_epsilon(x, f), f) == pytest.approx(x, rel=1e-13)
    assert epsilon_from_voltage(voltage_from_epsilon(x, f), f) == pytest.approx(x, rel=1e-13)


def test_source_qualification_cases():
    f = [4e9, 5e9, 6e9]
    sp = TwoPortSParams.from_entries(f, 0, [0.1, 0.1, 0.5], [0.1, 0.1, 0.5], [0, 1, 0])
    assert source_qualification(sp, emitting_port=2).tolist() == [True, False, False]
    # port 1 sees S11 = 0 and S12 as transmission
    assert source_qualification(sp, emitting_port=1).tolist() == [True, True, False]
    with pytest.raises(DomainError):
        source_qualification(sp, threshold=1.5)
