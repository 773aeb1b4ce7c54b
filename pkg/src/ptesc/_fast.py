"""Compiled integration loops for the builtin plants.

The closed-loop right-hand sides and the adaptive Dormand-Prince 5(4) loop
are mirrored here as numba-jitted code so that runs which must resolve the
chirped dither all the way to t_stop (millions of steps) finish in seconds.
The formulas are kept line-for-line equivalent to the reference
implementations in controller.py and sim.py; tests cross-check the two
paths on short horizons.

Only plants with a kernel_id (the builtins) can use this path; everything
else runs the pure-python loop in sim.py.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# mode codes for _run
_MODE_ESC = 0
_MODE_TARGET = 1
_MODE_AVERAGED = 2

# status codes returned by _run
_OK = 0
_DIV_UNDERFLOW = 1
_DIV_NONFINITE = 2


@njit(inline="always")
def _plant_eval(pid, x, f, g):
    """Fill f(x), g(x) and return h(x) for builtin plant pid."""
    if pid == 0:  # general_nonlinear
        x1 = x[0]
        x2 = x[1]
        f[0] = -x1 + x2 * x2
        f[1] = -x1 + x2
        g[0] = 0.0
        g[1] = 1.0
        return 1.0 + x2 * x2 + x1 * x1
    elif pid == 1:  # fed_batch_bioreactor
        x1 = x[0]
        x2 = x[1]
        growth = x1 * x2 / (0.2 + x2)
        f[0] = growth
        f[1] = -2.0 * growth
        g[0] = -x1
        g[1] = 10.0 - x2
        return -growth
    else:  # scalar_quadratic
        xv = x[0]
        f[0] = -xv
        g[0] = 1.0
        return (xv - 1.0) * (xv - 1.0)


@njit(inline="always")
def _plant_lgh(pid, x):
    """Analytic grad(h) . g for builtin plant pid."""
    if pid == 0:
        return 2.0 * x[1]
    elif pid == 1:
        x1 = x[0]
        x2 = x[1]
        denom = 0.2 + x2
        return x1 * x2 / denom - 0.2 * x1 * (10.0 - x2) / (denom * denom)
    else:
        return 2.0 * (x[0] - 1.0)


@njit(inline="always")
def _rhs(mode, pid, n, t, z, dz, f, g, T, clamp, A, omega, omega_h, omega_l, k, tau_I):
    """Mode-dispatched closed-loop right-hand side.

    State layout: esc [x; u_hat; xi; eta], target [x; u_hat],
    averaged [x; u_hat; xi].
    """
    r = T / (T - t)
    d = r * r
    if clamp > 0.0 and d > clamp:
        d = clamp
    x = z[:n]
    if mode == _MODE_ESC:
        tau = t * T / (T - t)
        s = math.sin(omega * tau)
        y = _plant_eval(pid, x, f, g)
        u_hat = z[n]
        xi = z[n + 1]
        eta = z[n + 2]
        u = -(k * (1.0 + d)) * xi + u_hat + A * s
        for i in range(n):
            dz[i] = f[i] + g[i] * u
        nb = d * (-omega_h * omega_h * eta + omega_h * y)
        if A > 0.0:
            demod = (2.0 / A) * s * nb
        else:
            demod = 0.0
        dz[n] = -(k / tau_I) * d * xi
        dz[n + 1] = -omega_l * d * (xi - demod)
        dz[n + 2] = -d * (omega_h * eta - y)
    elif mode == _MODE_TARGET:
        _plant_eval(pid, x, f, g)
        lgh = _plant_lgh(pid, x)
        u = -(k * (1.0 + d)) * lgh + z[n]
        for i in range(n):
            dz[i] = f[i] + g[i] * u
        dz[n] = -(k / tau_I) * d * lgh
    else:
        _plant_eval(pid, x, f, g)
        lgh = _plant_lgh(pid, x)
        u_hat = z[n]
        xi = z[n + 1]
        u = -(k * (1.0 + d)) * xi + u_hat
        for i in range(n):
            dz[i] = f[i] + g[i] * u
        dz[n] = -(k / tau_I) * d * xi
        dz[n + 1] = -omega_l * d * (xi - lgh)


@njit(cache=True)
def _run(mode, pid, n, z0, grid, T, clamp, A, omega, omega_h, omega_l, k, tau_I,
         rtol, atol, max_step_abs, cap_coeff, use_rk4, h_min):
    """Grid-steered integration; records the state at every grid time.

    cap_coeff <= 0 disables the dither-resolution cap.  Returns
    (states, n_rec, status, t_div) with status one of the module codes.
    """
    nz = z0.shape[0]
    n_grid = grid.shape[0]
    states = np.empty((n_grid, nz))
    for i in range(nz):
        states[0, i] = z0[i]
    z = z0.copy()
    f = np.empty(n)
    g = np.empty(n)
    k1 = np.empty(nz)
    k2 = np.empty(nz)
    k3 = np.empty(nz)
    k4 = np.empty(nz)
    k5 = np.empty(nz)
    k6 = np.empty(nz)
    k7 = np.empty(nz)
    zw = np.empty(nz)
    z5 = np.empty(nz)

    t = 0.0
    h_prop = -1.0
    k1_valid = False

    for idx in range(1, n_grid):
        target = grid[idx]
        while t < target:
            rv = (T - t) / T
            v = rv * rv
            if cap_coeff > 0.0:
                cap = cap_coeff * v
                if cap > max_step_abs:
                    cap = max_step_abs
            else:
                cap = max_step_abs
            gap = target - t
            snap = gap <= cap
            h_eff = gap if snap else cap

            if use_rk4:
                _rhs(mode, pid, n, t, z, k1, f, g, T, clamp, A, omega, omega_h,
                     omega_l, k, tau_I)
                for i in range(nz):
                    zw[i] = z[i] + 0.5 * h_eff * k1[i]
                _rhs(mode, pid, n, t + 0.5 * h_eff, zw, k2, f, g, T, clamp, A,
                     omega, omega_h, omega_l, k, tau_I)
                for i in range(nz):
                    zw[i] = z[i] + 0.5 * h_eff * k2[i]
                _rhs(mode, pid, n, t + 0.5 * h_eff, zw, k3, f, g, T, clamp, A,
                     omega, omega_h, omega_l, k, tau_I)
                for i in range(nz):
                    zw[i] = z[i] + h_eff * k3[i]
                _rhs(mode, pid, n, t + h_eff, zw, k4, f, g, T, clamp, A,
                     omega, omega_h, omega_l, k, tau_I)
                ok = True
                for i in range(nz):
                    z[i] = z[i] + (h_eff / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    if not math.isfinite(z[i]):
                        ok = False
                if not ok:
                    return states, idx, _DIV_NONFINITE, t
                t = target if snap else t + h_eff
                continue

            if h_prop < 0.0:
                h_prop = h_eff
            h = h_prop if h_prop < h_eff else h_eff
            # inner acceptance loop (embedded Dormand-Prince 5(4))
            accepted = False
            while not accepted:
                if h < h_min:
                    return states, idx, _DIV_UNDERFLOW, t
                if not k1_valid:
                    _rhs(mode, pid, n, t, z, k1, f, g, T, clamp, A, omega,
                         omega_h, omega_l, k, tau_I)
                    k1_valid = True
                # stage 2
                for i in range(nz):
                    zw[i] = z[i] + h * (1.0 / 5.0) * k1[i]
                _rhs(mode, pid, n, t + (1.0 / 5.0) * h, zw, k2, f, g, T, clamp,
                     A, omega, omega_h, omega_l, k, tau_I)
                # stage 3
                for i in range(nz):
                    zw[i] = z[i] + h * ((3.0 / 40.0) * k1[i] + (9.0 / 40.0) * k2[i])
                _rhs(mode, pid, n, t + (3.0 / 10.0) * h, zw, k3, f, g, T, clamp,
                     A, omega, omega_h, omega_l, k, tau_I)
                # stage 4
                for i in range(nz):
                    zw[i] = z[i] + h * ((44.0 / 45.0) * k1[i] - (56.0 / 15.0) * k2[i]
                                        + (32.0 / 9.0) * k3[i])
                _rhs(mode, pid, n, t + (4.0 / 5.0) * h, zw, k4, f, g, T, clamp,
                     A, omega, omega_h, omega_l, k, tau_I)
                # stage 5
                for i in range(nz):
                    zw[i] = z[i] + h * ((19372.0 / 6561.0) * k1[i]
                                        - (25360.0 / 2187.0) * k2[i]
                                        + (64448.0 / 6561.0) * k3[i]
                                        - (212.0 / 729.0) * k4[i])
                _rhs(mode, pid, n, t + (8.0 / 9.0) * h, zw, k5, f, g, T, clamp,
                     A, omega, omega_h, omega_l, k, tau_I)
                # stage 6
                for i in range(nz):
                    zw[i] = z[i] + h * ((9017.0 / 3168.0) * k1[i]
                                        - (355.0 / 33.0) * k2[i]
                                        + (46732.0 / 5247.0) * k3[i]
                                        + (49.0 / 176.0) * k4[i]
                                        - (5103.0 / 18656.0) * k5[i])
                _rhs(mode, pid, n, t + h, zw, k6, f, g, T, clamp, A, omega,
                     omega_h, omega_l, k, tau_I)
                # 5th-order solution
                bad = False
                for i in range(nz):
                    z5[i] = z[i] + h * ((35.0 / 384.0) * k1[i]
                                        + (500.0 / 1113.0) * k3[i]
                                        + (125.0 / 192.0) * k4[i]
                                        - (2187.0 / 6784.0) * k5[i]
                                        + (11.0 / 84.0) * k6[i])
                    if not math.isfinite(z5[i]):
                        bad = True
                if bad:
                    h *= 0.2
                    continue
                _rhs(mode, pid, n, t + h, z5, k7, f, g, T, clamp, A, omega,
                     omega_h, omega_l, k, tau_I)
                # embedded error estimate
                esum = 0.0
                for i in range(nz):
                    err = h * ((71.0 / 57600.0) * k1[i]
                               - (71.0 / 16695.0) * k3[i]
                               + (71.0 / 1920.0) * k4[i]
                               - (17253.0 / 339200.0) * k5[i]
                               + (22.0 / 525.0) * k6[i]
                               - (1.0 / 40.0) * k7[i])
                    az = abs(z[i])
                    a5 = abs(z5[i])
                    scale = atol + rtol * (az if az > a5 else a5)
                    q = err / scale
                    esum += q * q
                enorm = math.sqrt(esum / nz)
                if not math.isfinite(enorm):
                    h *= 0.2
                    continue
                if enorm <= 1.0:
                    accepted = True
                else:
                    fac = 0.9 * enorm ** -0.2
                    if fac < 0.2:
                        fac = 0.2
                    h *= fac
            if enorm == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * enorm ** -0.2
                if fac > 5.0:
                    fac = 5.0
                elif fac < 0.2:
                    fac = 0.2
            h_prop = h * fac
            for i in range(nz):
                z[i] = z5[i]
            tmp = k1
            k1 = k7
            k7 = tmp  # FSAL: stage 7 is the next step's first stage
            t = target if (snap and h == h_eff) else t + h
        for i in range(nz):
            states[idx, i] = z[i]
    return states, n_grid, _OK, 0.0


_REASONS = {
    _DIV_UNDERFLOW: "step size underflow",
    _DIV_NONFINITE: "nonfinite state",
}


def _dispatch(mode, plant, p, z0, grid, cfg, h_min, cap_coeff):
    clamp = p.pt.gain_clamp if p.pt.gain_clamp is not None else -1.0
    states, n_rec, code, t_div = _run(
        mode, plant.kernel_id, plant.n, np.asarray(z0, dtype=float),
        np.asarray(grid, dtype=float), p.pt.T, clamp, p.A, p.omega, p.omega_h,
        p.omega_l, p.k, p.tau_I, cfg.rtol, cfg.atol, cfg.max_step_absolute,
        cap_coeff, cfg.method == "rk4", h_min)
    if code == _OK:
        return states, n_rec, "completed", None, None
    return states, n_rec, "diverged", float(t_div), _REASONS[code]


def run_esc(plant, p, z0, grid, cfg, h_min):
    cap_coeff = (2.0 * math.pi / p.omega) / cfg.dither_resolution
    return _dispatch(_MODE_ESC, plant, p, z0, grid, cfg, h_min, cap_coeff)


def run_target(plant, p, z0, grid, cfg, h_min):
    return _dispatch(_MODE_TARGET, plant, p, z0, grid, cfg, h_min, -1.0)


def run_averaged(plant, p, z0, grid, cfg, h_min):
    return _dispatch(_MODE_AVERAGED, plant, p, z0, grid, cfg, h_min, -1.0)
