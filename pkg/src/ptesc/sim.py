"""Closed-loop ODE integration.

Composes a plant with the ESC law (or its target / averaged variants) into
one augmented system and integrates it over [0, t_stop].  The adaptive
integrator is an embedded Dormand-Prince 5(4) pair; a classical fixed-step
RK4 is kept for order tests and determinism baselines.  In ESC mode the
step size is additionally capped so that the chirped dither stays resolved:
its instantaneous frequency in t grows like (T-t)^-2, so the cap shrinks
with v(t).

Recording uses a fixed output grid: the integrator is steered to land
exactly on each grid time and the state is recorded there, so trajectories
from different runs share an identical time base and can be compared
sample-by-sample without resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .controller import (ControllerState, EscParams, averaged_rhs, control_output,
                         hp_deriv, initial_state, lp_deriv, nu_bar, target_control,
                         uhat_deriv)
from .plant import PlantModel, eval_cost, eval_rhs, lie_lgh
from .timescale import tau_of_t, v_of_t

Array = np.ndarray


class StiffnessError(RuntimeError):
    """Adaptive step size underflowed; carries the time of failure."""

    def __init__(self, message: str, t: float, h: float):
        super().__init__(message)
        self.t = t
        self.h = h


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration and recording policy.

    method: "rk45" (adaptive embedded pair) or "rk4" (no error control).
    dither_resolution: samples per dither period used for the ESC step cap.
    n_record: size of the fixed output grid; record_stride decimates it.
    backend: "auto" uses the compiled fast path for builtin plants and the
    pure-python path otherwise; "python"/"numba" force one implementation.
    """

    method: str = "rk45"
    rtol: float = 1e-8
    atol: float = 1e-10
    dither_resolution: int = 20
    max_step_absolute: float = math.inf
    record_stride: int = 1
    n_record: int = 2000
    backend: str = "auto"

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"method must be 'rk4' or 'rk45', got {self.method!r}")
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError(f"tolerances must be positive, got rtol={self.rtol}, atol={self.atol}")
        if self.dither_resolution < 8:
            raise ValueError(f"dither_resolution must be >= 8, got {self.dither_resolution}")
        if not self.max_step_absolute > 0.0:
            raise ValueError(f"max_step_absolute must be positive, got {self.max_step_absolute}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")
        if self.n_record < 2:
            raise ValueError(f"n_record must be >= 2, got {self.n_record}")
        if self.backend not in ("auto", "python", "numba"):
            raise ValueError(f"backend must be auto/python/numba, got {self.backend!r}")


@dataclass
class Trajectory:
    """Time-indexed record of one closed-loop run.

    All arrays share the same length; t starts at 0, increases strictly, and
    ends at or before t_stop.  The xi/eta/nu_bar columns hold the estimator
    states in ESC mode; in target mode xi holds the exact L_g h and the
    filter columns are zero, and in averaged mode xi holds the averaged
    estimate.
    """

    t: Array
    tau: Array
    x: Array
    u: Array
    y: Array
    xi: Array
    u_hat: Array
    eta: Array
    nu_bar: Array
    status: str = "completed"
    divergence_time: Optional[float] = None
    divergence_reason: Optional[str] = None
    mode: str = "esc"
    plant_name: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def signal(self, name: str) -> Array:
        """Column lookup by CSV-schema name: t, tau, x1..xn, u, y, xi, u_hat, eta, nu_bar."""
        if name.startswith("x") and name[1:].isdigit():
            idx = int(name[1:]) - 1
            if not 0 <= idx < self.n:
                raise KeyError(f"no state column {name!r} (n={self.n})")
            return self.x[:, idx]
        try:
            return getattr(self, name)
        except AttributeError:
            raise KeyError(f"unknown signal {name!r}") from None

    def column_names(self) -> list[str]:
        return (["t", "tau"] + [f"x{i + 1}" for i in range(self.n)]
                + ["u", "y", "xi", "u_hat", "eta", "nu_bar"])


# ---------------------------------------------------------------------------
# Steppers
# ---------------------------------------------------------------------------

def step_rk4(rhs: Callable[[float, Array], Array], z: Array, t: float, h: float) -> Array:
    """One classical fourth-order Runge-Kutta step."""
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = rhs(t, z)
    k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2)
    k4 = rhs(t + h, z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau; the 5th-order solution is propagated.
_DP_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_DP_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_DP_E = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
         -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def step_rk45(rhs: Callable[[float, Array], Array], z: Array, t: float, h_try: float,
              rtol: float, atol: float, h_min: float = 1e-14,
              ) -> tuple[Array, float, float]:
    """One accepted embedded Dormand-Prince 5(4) step with internal rejection.

    Shrinks the step until the component-wise error satisfies
    |err_i| <= atol + rtol*max(|z_i|, |z_next_i|) in the RMS sense, then
    returns (z_next, h_used, h_next) where h_next is the unclipped proposal
    for the following step.  Raises StiffnessError when h falls below h_min.
    """
    if not h_try > 0.0:
        raise ValueError(f"step size must be positive, got {h_try}")
    h = h_try
    k = [np.empty_like(z) for _ in range(7)]
    while True:
        if h < h_min:
            raise StiffnessError(
                f"step size underflow at t={t} (h={h:.3e} < {h_min:.3e})", t=t, h=h)
        k[0] = rhs(t, z)
        failed = False
        for i in range(1, 7):
            zi = z.copy()
            for j, a in enumerate(_DP_A[i]):
                if a != 0.0:
                    zi += (h * a) * k[j]
            ki = rhs(t + _DP_C[i] * h, zi)
            if not np.all(np.isfinite(ki)):
                failed = True
                break
            k[i] = ki
        if failed:
            h *= _MIN_FACTOR
            continue
        z_next = z.copy()
        for j, b in enumerate(_DP_A[6]):
            if b != 0.0:
                z_next += (h * b) * k[j]
        err = np.zeros_like(z)
        for j, e in enumerate(_DP_E):
            if e != 0.0:
                err += (h * e) * k[j]
        scale = atol + rtol * np.maximum(np.abs(z), np.abs(z_next))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not math.isfinite(enorm):
            h *= _MIN_FACTOR
            continue
        if enorm <= 1.0:
            if enorm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * enorm ** -0.2))
            return z_next, h, h * factor
        h *= max(_MIN_FACTOR, _SAFETY * enorm ** -0.2)


def max_step(t: float, p: EscParams, cfg: IntegratorConfig) -> float:
    """Step cap resolving the chirped dither: N samples per instantaneous
    dither period in t, i.e. (2*pi/omega)*v(t)/N, bounded by the absolute cap."""
    return min(cfg.max_step_absolute,
               (2.0 * math.pi / p.omega) * v_of_t(t, p.pt) / cfg.dither_resolution)


# ---------------------------------------------------------------------------
# Closed-loop right-hand sides (reference implementations)
# ---------------------------------------------------------------------------

def closed_loop_rhs(z: Array, t: float, plant: PlantModel, p: EscParams) -> Array:
    """Full dithered interconnection; augmented state ordered [x; u_hat; xi; eta]."""
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        raise ValueError(f"nonfinite augmented-state component {int(bad[0])}")
    n = plant.n
    x = z[:n]
    state = ControllerState(u_hat=z[n], xi=z[n + 1], eta=z[n + 2])
    y = eval_cost(plant, x)
    u = control_output(state, t, p)
    dz = np.empty_like(z)
    dz[:n] = eval_rhs(plant, x, u)
    dz[n] = uhat_deriv(state.xi, t, p)
    dz[n + 1] = lp_deriv(state.xi, nu_bar(state.eta, y, t, p), t, p)
    dz[n + 2] = hp_deriv(state.eta, y, t, p)
    return dz


def _target_rhs(z: Array, t: float, plant: PlantModel, p: EscParams) -> Array:
    n = plant.n
    u, duhat = target_control(z[:n], z[n], t, p, plant)
    dz = np.empty_like(z)
    dz[:n] = eval_rhs(plant, z[:n], u)
    dz[n] = duhat
    return dz


def _averaged_rhs_vec(z: Array, t: float, plant: PlantModel, p: EscParams) -> Array:
    n = plant.n
    dx, dxi, duhat, _ = averaged_rhs(z[:n], z[n + 1], z[n], t, p, plant)
    dz = np.empty_like(z)
    dz[:n] = dx
    dz[n] = duhat
    dz[n + 1] = dxi
    return dz


# ---------------------------------------------------------------------------
# Generic grid-steered integration loop (python backend)
# ---------------------------------------------------------------------------

def _record_grid(p: EscParams, cfg: IntegratorConfig) -> Array:
    pts = np.linspace(0.0, p.pt.t_stop, cfg.n_record)
    grid = pts[::cfg.record_stride]
    if grid[-1] != pts[-1]:
        grid = np.append(grid, pts[-1])
    return grid


def _integrate_python(rhs, z0: Array, grid: Array, cfg: IntegratorConfig,
                      cap_fn, h_min: float):
    """Integrate steering onto each grid time; returns (states, n_rec, status, t_div, reason)."""
    states = np.empty((len(grid), len(z0)))
    states[0] = z0
    z = z0.copy()
    t = 0.0
    h = None
    for idx in range(1, len(grid)):
        target = float(grid[idx])
        while t < target:
            cap = min(cap_fn(t), cfg.max_step_absolute)
            gap = target - t
            snap = gap <= cap
            h_eff = gap if snap else cap
            try:
                if cfg.method == "rk4":
                    z_new = step_rk4(rhs, z, t, h_eff)
                    h_used = h_eff
                else:
                    if h is None:
                        h = h_eff
                    z_new, h_used, h = step_rk45(rhs, z, t, min(h, h_eff),
                                                 cfg.rtol, cfg.atol, h_min=h_min)
            except (StiffnessError, ValueError, FloatingPointError) as exc:
                return states, idx, "diverged", t, str(exc)
            if not np.all(np.isfinite(z_new)):
                return states, idx, "diverged", t, "nonfinite state"
            z = z_new
            t = target if (snap and h_used == h_eff) else t + h_used
        states[idx] = z
    return states, len(grid), "completed", None, None


def _finish(plant: PlantModel, p: EscParams, grid: Array, states: Array, n_rec: int,
            status: str, t_div, reason, mode: str, aux_fn) -> Trajectory:
    n = plant.n
    tvec = grid[:n_rec]
    nrec = len(tvec)
    tau = np.array([tau_of_t(float(tt), p.pt) for tt in tvec])
    u = np.empty(nrec)
    y = np.empty(nrec)
    xi = np.empty(nrec)
    u_hat = np.empty(nrec)
    eta = np.empty(nrec)
    nb = np.empty(nrec)
    for i in range(nrec):
        u[i], y[i], xi[i], u_hat[i], eta[i], nb[i] = aux_fn(float(tvec[i]), states[i])
    return Trajectory(
        t=tvec.copy(), tau=tau, x=states[:nrec, :n].copy(),
        u=u, y=y, xi=xi, u_hat=u_hat, eta=eta, nu_bar=nb,
        status=status, divergence_time=t_div, divergence_reason=reason,
        mode=mode, plant_name=plant.name)


def _use_numba(plant: PlantModel, cfg: IntegratorConfig) -> bool:
    if cfg.backend == "python":
        return False
    if cfg.backend == "numba":
        if plant.kernel_id is None:
            raise ValueError(
                f"plant {plant.name!r} has no compiled kernel; use backend='python'")
        return True
    return plant.kernel_id is not None


def _check_x0(plant: PlantModel, x0) -> Array:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (plant.n,):
        raise ValueError(f"x0 for {plant.name} must have shape ({plant.n},), got {x0.shape}")
    return x0


def simulate_esc(plant: PlantModel, p: EscParams, x0, cfg: IntegratorConfig | None = None,
                 ) -> Trajectory:
    """Integrate the full dithered ESC closed loop from x0 to t_stop."""
    cfg = cfg or IntegratorConfig()
    x0 = _check_x0(plant, x0)
    grid = _record_grid(p, cfg)
    h_min = 1e-14 * p.pt.T
    s0 = initial_state(plant, x0, p)
    z0 = np.concatenate([x0, [s0.u_hat, s0.xi, s0.eta]])
    if _use_numba(plant, cfg):
        from ._fast import run_esc
        states, n_rec, status, t_div, reason = run_esc(plant, p, z0, grid, cfg, h_min)
    else:
        rhs = lambda t, z: closed_loop_rhs(z, t, plant, p)
        cap_fn = lambda t: max_step(t, p, cfg)
        states, n_rec, status, t_div, reason = _integrate_python(
            rhs, z0, grid, cfg, cap_fn, h_min)

    n = plant.n

    def aux(t: float, z: Array):
        y = eval_cost(plant, z[:n])
        state = ControllerState(u_hat=z[n], xi=z[n + 1], eta=z[n + 2])
        return (control_output(state, t, p), y, z[n + 1], z[n], z[n + 2],
                nu_bar(z[n + 2], y, t, p))

    return _finish(plant, p, grid, states, n_rec, status, t_div, reason, "esc", aux)


def simulate_target(plant: PlantModel, p: EscParams, x0,
                    cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the model-based target controller (exact L_g h, no dither)."""
    cfg = cfg or IntegratorConfig()
    x0 = _check_x0(plant, x0)
    grid = _record_grid(p, cfg)
    h_min = 1e-14 * p.pt.T
    z0 = np.concatenate([x0, [p.u_hat0]])
    if _use_numba(plant, cfg):
        from ._fast import run_target
        states, n_rec, status, t_div, reason = run_target(plant, p, z0, grid, cfg, h_min)
    else:
        rhs = lambda t, z: _target_rhs(z, t, plant, p)
        cap_fn = lambda t: cfg.max_step_absolute
        states, n_rec, status, t_div, reason = _integrate_python(
            rhs, z0, grid, cfg, cap_fn, h_min)

    n = plant.n

    def aux(t: float, z: Array):
        u, _ = target_control(z[:n], z[n], t, p, plant)
        return (u, eval_cost(plant, z[:n]), lie_lgh(plant, z[:n]), z[n], 0.0, 0.0)

    return _finish(plant, p, grid, states, n_rec, status, t_div, reason, "target", aux)


def simulate_averaged(plant: PlantModel, p: EscParams, x0,
                      cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the period-averaged closed loop; its rates are dither-free,
    so the result is independent of the dither frequency."""
    cfg = cfg or IntegratorConfig()
    x0 = _check_x0(plant, x0)
    grid = _record_grid(p, cfg)
    h_min = 1e-14 * p.pt.T
    z0 = np.concatenate([x0, [p.u_hat0, 0.0]])
    if _use_numba(plant, cfg):
        from ._fast import run_averaged
        states, n_rec, status, t_div, reason = run_averaged(plant, p, z0, grid, cfg, h_min)
    else:
        rhs = lambda t, z: _averaged_rhs_vec(z, t, plant, p)
        cap_fn = lambda t: cfg.max_step_absolute
        states, n_rec, status, t_div, reason = _integrate_python(
            rhs, z0, grid, cfg, cap_fn, h_min)

    n = plant.n

    def aux(t: float, z: Array):
        _, _, _, u_a = averaged_rhs(z[:n], z[n + 1], z[n], t, p, plant)
        return (u_a, eval_cost(plant, z[:n]), z[n + 1], z[n], 0.0, 0.0)

    return _finish(plant, p, grid, states, n_rec, status, t_div, reason, "averaged", aux)
