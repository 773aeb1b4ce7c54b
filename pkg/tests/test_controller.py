import math

import numpy as np
import pytest

from ptesc import (ControllerState, EscParams, PrescribedTime, averaged_rhs,
                   control_output, dither, general_nonlinear, hp_deriv,
                   initial_state, lie_lfh, lie_lgh, lp_deriv, nu_bar,
                   scalar_quadratic, steady_state_map, target_control,
                   tau_of_t, uhat_deriv)
from ptesc.sim import step_rk45


def make_params(A=25.0, omega=150.0, omega_h=2000.0, omega_l=3.0, k=25.0,
                tau_I=0.5, T=5.0, **pt_kwargs):
    return EscParams(pt=PrescribedTime(T=T, **pt_kwargs), A=A, omega=omega,
                     omega_h=omega_h, omega_l=omega_l, k=k, tau_I=tau_I)


def test_params_invariants():
    with pytest.raises(ValueError):
        make_params(A=-1.0)
    with pytest.raises(ValueError):
        make_params(omega=0.0)
    with pytest.raises(ValueError):
        make_params(omega_h=-5.0)
    with pytest.raises(ValueError):
        make_params(omega_l=0.0)
    with pytest.raises(ValueError):
        make_params(k=-0.1)
    with pytest.raises(ValueError):
        make_params(tau_I=0.0)
    # dither-off and feedback-off diagnostics are constructible
    make_params(A=0.0)
    make_params(k=0.0)


def test_frequency_separation_warning():
    with pytest.warns(UserWarning, match="separation"):
        make_params(omega=150.0, omega_h=100.0)
    with pytest.warns(UserWarning, match="separation"):
        make_params(omega=2.0, omega_l=3.0)


def test_dither_values():
    p = make_params()
    assert dither(0.0, p) == 0.0
    # sine peak: tau = pi/(2*omega)
    from ptesc import t_of_tau
    t_peak = t_of_tau(math.pi / (2.0 * p.omega), p.pt)
    assert dither(t_peak, p) == pytest.approx(p.A, rel=1e-12)
    ts = np.linspace(0.0, p.pt.t_stop, 5000)
    assert max(abs(dither(float(t), p)) for t in ts) <= p.A


def test_dither_zero_mean_over_period():
    p = make_params()
    tau0 = 11.0
    taus = np.linspace(tau0, tau0 + 2.0 * math.pi / p.omega, 40001)
    vals = p.A * np.sin(p.omega * taus)
    mean = np.trapezoid(vals, taus) / (2.0 * math.pi / p.omega)
    assert abs(mean) <= 1e-10


def test_hp_deriv_values():
    p = make_params()
    assert hp_deriv(1.0 / p.omega_h, 1.0, 1.3, p) == 0.0
    assert hp_deriv(0.0, 1.0, 0.0, p) == 1.0
    with pytest.raises(ValueError):
        hp_deriv(math.nan, 1.0, 0.0, p)


def test_hp_equilibrium_is_fixed_point():
    # constant measurement: eta started at y/omega_h stays there
    p = make_params()
    y = 3.7
    rhs = lambda t, z: np.array([hp_deriv(z[0], y, t, p)])
    z = np.array([y / p.omega_h])
    t, h = 0.0, 1e-4
    while t < 1.0:
        z, used, h = step_rk45(rhs, z, t, min(h, 1.0 - t), 1e-10, 1e-12)
        t += used
    assert z[0] == pytest.approx(y / p.omega_h, rel=1e-9)


def test_nu_bar_values():
    p = make_params()
    assert nu_bar(1.0 / p.omega_h, 1.0, 0.7, p) == 0.0
    assert nu_bar(0.0, 1.0, 0.0, p) == p.omega_h


def test_nu_bar_tracks_ramp_slope():
    # drive the filter with y(t) = t; after the transient the derivative
    # estimate must sit near the true slope 1
    p = make_params()
    rhs = lambda t, z: np.array([hp_deriv(z[0], t, t, p)])
    z = np.array([0.0])
    t, h = 0.0, 1e-5
    while t < 0.2:
        z, used, h = step_rk45(rhs, z, t, min(h, 0.2 - t), 1e-10, 1e-12)
        t += used
    assert nu_bar(z[0], 0.2, 0.2, p) == pytest.approx(1.0, rel=0.02)


def test_nu_bar_tracks_sinusoid_derivative():
    p = make_params()
    yfun = lambda t: math.sin(5.0 * t)
    rhs = lambda t, z: np.array([hp_deriv(z[0], yfun(t), t, p)])
    z = np.array([0.0])
    t, h = 0.0, 1e-5
    est, oracle = [], []
    for te in np.linspace(0.01, 1.0, 120):
        while t < te:
            z, used, h = step_rk45(rhs, z, t, min(h, te - t), 1e-10, 1e-12)
            t += used
        if te > 5.0 / p.omega_h:
            est.append(nu_bar(z[0], yfun(te), te, p))
            oracle.append(5.0 * math.cos(5.0 * te))
    est, oracle = np.array(est), np.array(oracle)
    rel_rms = np.sqrt(np.mean((est - oracle) ** 2) / np.mean(oracle ** 2))
    assert rel_rms <= 0.05


def test_lp_deriv_values():
    p = make_params(omega_l=3.0)
    tau = tau_of_t(1.1, p.pt)
    xi_eq = (2.0 / p.A) * math.sin(p.omega * tau) * 0.8
    assert lp_deriv(xi_eq, 0.8, 1.1, p) == 0.0
    assert lp_deriv(1.0, 0.0, 0.0, p) == -3.0
    assert lp_deriv(0.0, 0.0, 2.3, p) == 0.0


def test_lp_deriv_dither_off():
    # A = 0: no demodulation; xi relaxes toward zero
    p = make_params(A=0.0)
    assert lp_deriv(1.0, 123.0, 0.0, p) == -p.omega_l
    assert lp_deriv(0.0, 123.0, 0.0, p) == 0.0


def test_uhat_deriv_values():
    p = make_params(k=25.0, tau_I=0.5)
    assert uhat_deriv(0.0, 1.7, p) == 0.0
    assert uhat_deriv(1.0, 0.0, p) == -50.0
    rng = np.random.default_rng(5)
    for _ in range(50):
        xi = float(rng.uniform(0.01, 10.0))
        t = float(rng.uniform(0.0, 0.99 * p.pt.T))
        assert uhat_deriv(xi, t, p) < 0.0


def test_control_output_values():
    p = make_params(k=25.0, A=25.0)
    assert control_output(ControllerState(u_hat=0.0, xi=0.0), 0.0, p) == 0.0
    assert control_output(ControllerState(u_hat=2.0, xi=1.0), 0.0, p) == -48.0
    from ptesc import t_of_tau
    t_peak = t_of_tau(math.pi / (2.0 * p.omega), p.pt)
    out = control_output(ControllerState(u_hat=0.0, xi=0.0), t_peak, p)
    assert out == pytest.approx(25.0, rel=1e-12)


def test_target_control_examples():
    sq = scalar_quadratic()
    p = make_params(k=1.0, tau_I=0.5)
    u, duhat = target_control([1.0], 1.0, 0.3, p, sq)
    assert u == pytest.approx(1.0) and duhat == 0.0
    u, duhat = target_control([2.0], 0.0, 0.0, p, sq)
    assert u == -4.0            # K(0)=2, L_g h = 2
    assert duhat == -4.0        # (k/tau_I)*1*2

    gn = general_nonlinear()
    p25 = make_params(k=25.0)
    u, _ = target_control([1.0, 2.0], 0.0, 0.0, p25, gn)
    assert u == -200.0          # K(0)=50, L_g h = 4


def test_oracle_degeneration_exact():
    """With xi pinned to the true L_g h and the dither off, the ESC output
    reproduces the model-based law exactly."""
    rng = np.random.default_rng(11)
    for plant in (general_nonlinear(), scalar_quadratic()):
        p = make_params(A=0.0, k=3.0)
        for _ in range(200):
            x = rng.uniform(-2.0, 2.0, plant.n)
            u_hat = float(rng.uniform(-2.0, 2.0))
            t = float(rng.uniform(0.0, 0.99 * p.pt.T))
            lgh = lie_lgh(plant, x)
            u_esc = control_output(ControllerState(u_hat=u_hat, xi=lgh), t, p)
            u_tgt, _ = target_control(x, u_hat, t, p, plant)
            assert u_esc == u_tgt


def test_rates_scale_with_blowup_factor():
    p = make_params()
    t1, t2 = 0.7, 3.9
    from ptesc import dtau_dt
    ratio = dtau_dt(t1, p.pt) / dtau_dt(t2, p.pt)
    assert hp_deriv(0.2, 1.0, t1, p) / hp_deriv(0.2, 1.0, t2, p) == pytest.approx(ratio, rel=1e-12)
    assert uhat_deriv(0.4, t1, p) / uhat_deriv(0.4, t2, p) == pytest.approx(ratio, rel=1e-12)
    assert nu_bar(0.1, 7.0, t1, p) / nu_bar(0.1, 7.0, t2, p) == pytest.approx(ratio, rel=1e-12)


def test_demodulation_recovers_gradient():
    """Average of (2/A)sin(omega*tau)*dy/dt over one dither period at a
    frozen state equals L_g h (the input term is linear in u, so the
    identity is exact up to quadrature error)."""
    sq = scalar_quadratic()
    x = np.array([2.0])
    A, u_c = 0.01, 0.3
    p = make_params(A=A)
    lgh, lfh = lie_lgh(sq, x), lie_lfh(sq, x)
    tau0 = 7.0
    taus = np.linspace(tau0, tau0 + 2.0 * math.pi / p.omega, 20001)
    dy = lfh + lgh * (u_c + A * np.sin(p.omega * taus))
    integrand = (2.0 / A) * np.sin(p.omega * taus) * dy
    avg = np.trapezoid(integrand, taus) / (2.0 * math.pi / p.omega)
    assert avg == pytest.approx(lgh, rel=0.10)


def test_averaged_rhs_equilibrium():
    gn = general_nonlinear()
    p = make_params()
    dx, dxi, duhat, u_a = averaged_rhs([0.0, 0.0], 0.0, 0.0, 1.0, p, gn)
    np.testing.assert_allclose(dx, [0.0, 0.0])
    assert dxi == 0.0 and duhat == 0.0 and u_a == 0.0


def test_averaged_rhs_filter_equilibrium():
    gn = general_nonlinear()
    p = make_params()
    x = np.array([0.5, -0.8])
    dx, dxi, duhat, _ = averaged_rhs(x, lie_lgh(gn, x), 0.3, 2.0, p, gn)
    assert dxi == 0.0


def test_averaged_rhs_scalar_example():
    sq = scalar_quadratic()
    p = make_params(k=1.0, omega_l=3.0)
    dx, dxi, duhat, u_a = averaged_rhs([2.0], 0.0, 0.0, 0.0, p, sq)
    assert dx[0] == -2.0        # f(2) + g*u_a with u_a = 0
    assert dxi == 3.0 * 2.0     # omega_l * (L_g h - xi)
    assert duhat == 0.0


def test_initial_state_zeroes_derivative_estimate():
    gn = general_nonlinear()
    p = make_params()
    s = initial_state(gn, [1.0, 2.0], p)
    assert s.u_hat == 0.0 and s.xi == 0.0
    assert nu_bar(s.eta, 6.0, 0.0, p) == 0.0
