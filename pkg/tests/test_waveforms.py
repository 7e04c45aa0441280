import numpy as np
import pytest
from hypothesis import given, strategies as st

from fieldcircuit.waveforms import (Constant, Sinusoid, Tabulated,
                                    WaveformStack, zero_input)


def test_constant():
    w = Constant(3.5)
    assert w(0.0) == 3.5
    assert w(1e9) == 3.5
    assert w.derivative(2.0) == 0.0


@given(st.floats(-10, 10), st.floats(-10, 10),
       st.floats(0.01, 1e4), st.floats(-3, 3), st.floats(-1, 1))
def test_sinusoid_matches_formula(off, amp, f, phase, t):
    w = Sinusoid(off, amp, f, phase)
    assert w(t) == pytest.approx(off + amp * np.sin(2 * np.pi * f * t + phase),
                                 rel=1e-12, abs=1e-12)


def test_sinusoid_derivative_finite_difference():
    w = Sinusoid(0.0, 2.0, 50e3, 0.3)
    t, eps = 1.7e-5, 1e-9
    fd = (w(t + eps) - w(t - eps)) / (2 * eps)
    assert w.derivative(t) == pytest.approx(fd, rel=1e-6)


def test_tabulated_interpolates():
    w = Tabulated((0.0, 1.0, 3.0), (0.0, 2.0, 2.0))
    assert w(0.5) == pytest.approx(1.0)
    assert w(2.0) == pytest.approx(2.0)
    assert w(-5.0) == 0.0       # clamped
    assert w(9.0) == 2.0
    assert w.derivative(0.5) == pytest.approx(2.0)
    assert w.derivative(9.0) == 0.0


def test_tabulated_rejects_unsorted():
    with pytest.raises(ValueError):
        Tabulated((0.0, 0.0), (1.0, 2.0))


def test_stack_evaluates_componentwise():
    u = WaveformStack((Constant(1.0), Sinusoid(0, 1, 1, 0)))
    assert u.dim == 2
    np.testing.assert_allclose(u(0.25), [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(u.derivative(0.0), [0.0, 2 * np.pi],
                               rtol=1e-12)


def test_zero_input():
    u = zero_input(3)
    assert u.dim == 3
    assert np.all(u(1.23) == 0.0)
