import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsdi.pulse import (
    PulseParams,
    keldysh,
    ponderomotive,
    pulse_area,
    quiver_radius,
    time_fs,
    validate_vector_potential,
    vector_potential_quadrature,
    wavelength_nm,
)


def test_parameter_validation():
    with pytest.raises(ValueError):
        PulseParams(-0.1, 0.06)
    with pytest.raises(ValueError):
        PulseParams(0.1, 0.0)
    with pytest.raises(ValueError):
        PulseParams(0.1, 0.06, n_c=0)
    with pytest.raises(ValueError):
        PulseParams(0.1, 0.06, n_c=2.5)


def test_durations():
    p = PulseParams(0.1, 0.06, 0.0, 5)
    assert p.duration == pytest.approx(2 * np.pi * 5 / 0.06)
    assert p.simulation_time == pytest.approx(6 * 2 * np.pi / 0.06)


def test_field_vanishes_outside_and_at_edges():
    p = PulseParams(0.2, 0.094, 0.7, 2)
    t = np.array([-1.0, 0.0, p.duration, p.duration + 1.0])
    assert np.allclose(p.field(t), 0.0, atol=1e-16)
    assert np.allclose(p.vector_potential(t), 0.0, atol=1e-16)


def test_field_peak_with_zero_phase():
    p = PulseParams(0.3, 0.06, 0.0, 5)
    assert p.field(p.duration / 2) == pytest.approx(0.3)
    assert p.vector_potential(p.duration / 2) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(phi=st.floats(0, 2 * np.pi), n_c=st.integers(1, 10), omega=st.floats(0.02, 0.2))
def test_closed_form_derivative_is_minus_field(phi, n_c, omega):
    p = PulseParams(0.1, omega, phi, n_c)
    t = np.linspace(0.05, 0.95, 37) * p.duration
    h = 1e-4 * p.period
    dadt = (p.vector_potential(t + h) - p.vector_potential(t - h)) / (2 * h)
    # central-difference truncation error is about (omega h)^2 F0 / 6
    assert np.max(np.abs(dadt + p.field(t))) < 1e-6 * p.F0


@pytest.mark.parametrize("n_c", [1, 2, 5, 10])
def test_closed_form_matches_quadrature(n_c):
    for j in (0, 7, 13):
        p = PulseParams(0.15, 0.06, 2 * np.pi * j / 20, n_c)
        assert validate_vector_potential(p, 400) < 1e-8


def test_quadrature_of_points_outside_pulse():
    p = PulseParams(0.1, 0.1, 0.3, 1)
    a = vector_potential_quadrature(p, [-1.0, p.duration + 5.0])
    assert a[0] == 0.0
    assert abs(a[1]) < 1e-12


def test_zero_area_examples():
    p = PulseParams(0.1, 0.094, 1.1, 2)
    assert abs(pulse_area(p)) < 1e-10 * p.F0 * p.duration


def test_field_scales():
    p = PulseParams(0.16, 0.094, 0.0, 2)
    assert ponderomotive(p) == pytest.approx(0.16**2 / (4 * 0.094**2))
    assert quiver_radius(p) == pytest.approx(0.16 / 0.094**2)
    assert keldysh(p, 0.98) == pytest.approx(np.sqrt(2 * 0.98) * 0.094 / 0.16)
    with pytest.raises(ValueError):
        keldysh(PulseParams(0.0, 0.094), 0.98)


def test_unit_conversions():
    assert wavelength_nm(0.057) == pytest.approx(800, rel=2e-3)
    assert time_fs(100.0) == pytest.approx(2.4188843265857, rel=1e-12)
