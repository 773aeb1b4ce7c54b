import math

import numpy as np
import pytest

from ptesc import PrescribedTime, dtau_dt, gain_schedule, t_of_tau, tau_of_t, v_of_t


@pytest.fixture
def pt5():
    return PrescribedTime(T=5.0)


def test_tau_of_t_values(pt5):
    assert tau_of_t(0.0, pt5) == 0.0
    assert tau_of_t(2.5, pt5) == 5.0
    assert tau_of_t(4.5, pt5) == pytest.approx(45.0, rel=1e-15)


def test_t_of_tau_values(pt5):
    assert t_of_tau(0.0, pt5) == 0.0
    assert t_of_tau(5.0, pt5) == 2.5
    val = t_of_tau(1e9, pt5)
    assert 4.999999 < val < 5.0


def test_dtau_dt_values(pt5):
    assert dtau_dt(0.0, pt5) == 1.0
    assert dtau_dt(2.5, pt5) == 4.0
    clamped = PrescribedTime(T=5.0, gain_clamp=1000.0)
    assert dtau_dt(4.95, clamped) == 1000.0  # raw value 10000 exceeds the clamp
    assert dtau_dt(4.95, pt5) == pytest.approx(10000.0, rel=1e-12)


def test_v_of_t_values(pt5):
    assert v_of_t(0.0, pt5) == 1.0
    assert v_of_t(2.5, pt5) == 0.25
    assert v_of_t(1.234, pt5) * dtau_dt(1.234, pt5) == pytest.approx(1.0, rel=1e-15)


def test_gain_schedule_values(pt5):
    assert gain_schedule(0.0, 25.0, pt5) == 50.0
    assert gain_schedule(2.5, 25.0, pt5) == 125.0
    clamped = PrescribedTime(T=5.0, gain_clamp=1000.0)
    assert gain_schedule(4.999, 25.0, clamped) == 25.0 * 1001.0


def test_round_trip_1000_points(pt5):
    rng = np.random.default_rng(0)
    ts = rng.uniform(0.0, 0.999 * pt5.T, 1000)
    for t in ts:
        back = t_of_tau(tau_of_t(float(t), pt5), pt5)
        assert abs(back - t) <= 1e-12 * max(1.0, abs(t))


def test_reciprocity_1000_points(pt5):
    rng = np.random.default_rng(1)
    for t in rng.uniform(0.0, 0.999 * pt5.T, 1000):
        prod = dtau_dt(float(t), pt5) * v_of_t(float(t), pt5)
        assert abs(prod - 1.0) <= 1e-12


def test_tau_strictly_increasing(pt5):
    grid = np.linspace(0.0, pt5.t_stop, 2000)
    taus = [tau_of_t(float(t), pt5) for t in grid]
    assert all(b > a for a, b in zip(taus, taus[1:]))


def test_gain_schedule_floor(pt5):
    grid = np.linspace(0.0, pt5.t_stop, 500)
    gains = [gain_schedule(float(t), 2.0, pt5) for t in grid]
    assert gains[0] == 4.0
    assert all(g > 4.0 for g in gains[1:])
    assert all(b >= a for a, b in zip(gains, gains[1:]))


@pytest.mark.parametrize("t", [-0.1, 5.0, 5.4, math.inf])
def test_domain_errors(pt5, t):
    with pytest.raises(ValueError, match="horizon"):
        tau_of_t(t, pt5)
    with pytest.raises(ValueError):
        dtau_dt(t, pt5)
    with pytest.raises(ValueError):
        v_of_t(t, pt5)


def test_t_of_tau_rejects_negative(pt5):
    with pytest.raises(ValueError, match="nonnegative"):
        t_of_tau(-1e-9, pt5)


def test_error_message_carries_value(pt5):
    with pytest.raises(ValueError, match="5.4"):
        tau_of_t(5.4, pt5)


def test_prescribed_time_invariants():
    with pytest.raises(ValueError):
        PrescribedTime(T=0.0)
    with pytest.raises(ValueError):
        PrescribedTime(T=-1.0)
    with pytest.raises(ValueError):
        PrescribedTime(T=5.0, stop_fraction=0.0)
    with pytest.raises(ValueError):
        PrescribedTime(T=5.0, stop_fraction=1.0)
    with pytest.raises(ValueError):
        PrescribedTime(T=5.0, gain_clamp=0.5)
    pt = PrescribedTime(T=5.0, stop_fraction=1e-3)
    assert pt.t_stop == pytest.approx(4.995)
    assert pt.t_stop < pt.T
