"""Dual-mode extremum-seeking control law on the compressed timescale.

The measured cost is perturbed through a chirped dither A*sin(omega*tau(t)),
its time derivative is estimated by a high-pass filter posed in the
compressed timescale, and demodulation through a low-pass filter produces
xi, the running estimate of the input-direction cost derivative L_g h.  The
input combines a time-varying proportional action -K(t)*xi with the integral
(dual-mode) state u_hat that supplies the steady-state input.

Also provided: the model-based target controller that uses the exact L_g h
in place of xi (the oracle the ESC law degenerates to when estimation is
perfect and the dither is off), and the period-averaged closed loop used for
cross-checking the full dithered simulation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .plant import PlantModel, eval_cost, lie_lgh
from .timescale import PrescribedTime, dtau_dt, gain_schedule, tau_of_t


@dataclass(frozen=True)
class EscParams:
    """Controller tuning: horizon policy, dither, filter constants, gains.

    omega, omega_h and omega_l are rates per unit of compressed time tau.
    The recommended separation omega_h >> omega >> omega_l is advisory; a
    warning is emitted when the strict ordering is violated.  A = 0 and
    k = 0 are permitted so that dither-off and feedback-off diagnostic runs
    can be built; scenario loading enforces A > 0 where estimation matters.
    """

    pt: PrescribedTime
    A: float
    omega: float
    omega_h: float
    omega_l: float
    k: float
    tau_I: float
    u_hat0: float = 0.0

    def __post_init__(self) -> None:
        if not self.A >= 0.0:
            raise ValueError(f"dither amplitude A must be nonnegative, got {self.A}")
        for name in ("omega", "omega_h", "omega_l", "tau_I"):
            val = getattr(self, name)
            if not val > 0.0:
                raise ValueError(f"{name} must be positive, got {val}")
        if not self.k >= 0.0:
            raise ValueError(f"proportional gain k must be nonnegative, got {self.k}")
        if not math.isfinite(self.u_hat0):
            raise ValueError(f"u_hat0 must be finite, got {self.u_hat0}")
        if not self.omega_h > self.omega > self.omega_l:
            warnings.warn(
                f"frequency separation omega_h > omega > omega_l violated "
                f"({self.omega_h}, {self.omega}, {self.omega_l}); the gradient "
                f"estimate may be unreliable", stacklevel=2)


@dataclass
class ControllerState:
    """Dynamic controller variables: integral input u_hat, derivative-direction
    estimate xi, and high-pass filter state eta."""

    u_hat: float
    xi: float = 0.0
    eta: float = 0.0


def initial_state(plant: PlantModel, x0, p: EscParams) -> ControllerState:
    """Start the estimator at its filter equilibrium: eta(0) = y(x0)/omega_h,
    so the derivative estimate is zero at t=0 and no artificial impulse enters."""
    return ControllerState(u_hat=p.u_hat0, xi=0.0,
                           eta=eval_cost(plant, x0) / p.omega_h)


def dither(t: float, p: EscParams) -> float:
    """Chirped perturbation A*sin(omega*tau(t)); bounded by A."""
    return p.A * math.sin(p.omega * tau_of_t(t, p.pt))


def hp_deriv(eta: float, y: float, t: float, p: EscParams) -> float:
    """High-pass filter state rate: -dtau_dt * (omega_h*eta - y)."""
    if not (math.isfinite(eta) and math.isfinite(y)):
        raise ValueError(f"nonfinite filter inputs eta={eta}, y={y}")
    return -dtau_dt(t, p.pt) * (p.omega_h * eta - y)


def nu_bar(eta: float, y: float, t: float, p: EscParams) -> float:
    """Cost-derivative estimate dy/dt: dtau_dt * (-omega_h^2*eta + omega_h*y)."""
    if not (math.isfinite(eta) and math.isfinite(y)):
        raise ValueError(f"nonfinite filter inputs eta={eta}, y={y}")
    return dtau_dt(t, p.pt) * (-p.omega_h * p.omega_h * eta + p.omega_h * y)


def lp_deriv(xi: float, nu_bar_val: float, t: float, p: EscParams) -> float:
    """Demodulating low-pass rate:
    -omega_l * dtau_dt * (xi - (2/A)*sin(omega*tau)*nu_bar).

    With A = 0 there is no excitation and the demodulation term is zero, so
    xi relaxes to 0 (no estimate without a dither).
    """
    if not (math.isfinite(xi) and math.isfinite(nu_bar_val)):
        raise ValueError(f"nonfinite filter inputs xi={xi}, nu_bar={nu_bar_val}")
    if p.A > 0.0:
        demod = (2.0 / p.A) * math.sin(p.omega * tau_of_t(t, p.pt)) * nu_bar_val
    else:
        demod = 0.0
    return -p.omega_l * dtau_dt(t, p.pt) * (xi - demod)


def uhat_deriv(xi: float, t: float, p: EscParams) -> float:
    """Integral-state rate: -(k/tau_I) * dtau_dt * xi."""
    if not math.isfinite(xi):
        raise ValueError(f"nonfinite estimate xi={xi}")
    return -(p.k / p.tau_I) * dtau_dt(t, p.pt) * xi


def control_output(state: ControllerState, t: float, p: EscParams) -> float:
    """Applied input u = -K(t)*xi + u_hat + A*sin(omega*tau)."""
    if not (math.isfinite(state.xi) and math.isfinite(state.u_hat)):
        raise ValueError(f"nonfinite controller state {state}")
    return -gain_schedule(t, p.k, p.pt) * state.xi + state.u_hat + dither(t, p)


def target_control(x, u_hat: float, t: float, p: EscParams,
                   plant: PlantModel) -> tuple[float, float]:
    """Model-based oracle controller: exact L_g h in place of xi, no dither.

    Returns (u, du_hat/dt) with u = -K(t)*L_g h + u_hat and
    du_hat/dt = -(k/tau_I)*dtau_dt*L_g h.
    """
    lgh = lie_lgh(plant, x)
    u = -gain_schedule(t, p.k, p.pt) * lgh + u_hat
    return u, -(p.k / p.tau_I) * dtau_dt(t, p.pt) * lgh


def averaged_rhs(x_a, xi_a: float, uhat_a: float, t: float, p: EscParams,
                 plant: PlantModel) -> tuple[np.ndarray, float, float, float]:
    """Period-averaged closed loop: the dither-dependent terms replaced by
    their mean, leaving xi_a chasing the exact L_g h.

    Returns (dx_a, dxi_a, duhat_a, u_a).  The dither frequency does not
    appear anywhere in these rates.
    """
    x_a = np.asarray(x_a, dtype=float)
    d = dtau_dt(t, p.pt)
    lgh = lie_lgh(plant, x_a)
    u_a = -gain_schedule(t, p.k, p.pt) * xi_a + uhat_a
    dx = plant.drift(x_a) + plant.input_map(x_a) * u_a
    dxi = -p.omega_l * d * (xi_a - lgh)
    duhat = -(p.k / p.tau_I) * d * xi_a
    return dx, dxi, duhat, u_a
