"""Time-horizon compression for prescribed-time control.

Maps the finite horizon [0, T) onto [0, inf) via tau = t*T/(T-t) and provides
the associated rate factor dtau/dt = T^2/(T-t)^2, its reciprocal, and the
time-varying proportional gain schedule K(t) = k*(1 + dtau/dt).

All quantities are computed from (T - t) directly; accumulated tau is never
used internally, so there is no cancellation as t approaches T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PrescribedTime:
    """Horizon T plus the numerical policies used near the t -> T singularity.

    Closed-loop simulations stop at t_stop = (1 - stop_fraction)*T; the
    transformation itself is valid on all of [0, T).  gain_clamp, when set,
    caps the rate factor dtau/dt (and therefore every gain built from it).
    """

    T: float
    stop_fraction: float = 1e-3
    gain_clamp: float | None = None

    def __post_init__(self) -> None:
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive and finite, got {self.T}")
        if not 0.0 < self.stop_fraction < 1.0:
            raise ValueError(f"stop_fraction must lie in (0, 1), got {self.stop_fraction}")
        if self.gain_clamp is not None and not self.gain_clamp >= 1.0:
            raise ValueError(f"gain_clamp must be >= 1 when set, got {self.gain_clamp}")

    @property
    def t_stop(self) -> float:
        return (1.0 - self.stop_fraction) * self.T


def _check_t(t: float, pt: PrescribedTime) -> None:
    if not 0.0 <= t < pt.T:
        raise ValueError(f"t={t} outside the horizon [0, {pt.T})")


def tau_of_t(t: float, pt: PrescribedTime) -> float:
    """Compressed time tau = t*T/(T-t); increases monotonically and blows up at t=T."""
    _check_t(t, pt)
    return t * pt.T / (pt.T - t)


def t_of_tau(tau: float, pt: PrescribedTime) -> float:
    """Inverse map t = T*tau/(T+tau); approaches T from below as tau grows."""
    if not tau >= 0.0:
        raise ValueError(f"tau={tau} must be nonnegative")
    return pt.T * tau / (pt.T + tau)


def dtau_dt(t: float, pt: PrescribedTime) -> float:
    """Rate factor T^2/(T-t)^2, clamped to pt.gain_clamp when configured.

    Equals 1 at t=0 and grows without bound (unclamped) as t -> T.
    """
    _check_t(t, pt)
    r = pt.T / (pt.T - t)
    d = r * r
    if pt.gain_clamp is not None and d > pt.gain_clamp:
        return pt.gain_clamp
    return d


def v_of_t(t: float, pt: PrescribedTime) -> float:
    """Reciprocal factor (T-t)^2/T^2 in (0, 1]; never clamped."""
    _check_t(t, pt)
    r = (pt.T - t) / pt.T
    return r * r


def gain_schedule(t: float, k: float, pt: PrescribedTime) -> float:
    """Proportional gain K(t) = k*(1 + dtau/dt); K(0) = 2k, nondecreasing in t."""
    if not k >= 0.0:
        raise ValueError(f"gain k must be nonnegative, got {k}")
    return k * (1.0 + dtau_dt(t, pt))
