"""Post-run verification of closed-loop trajectories.

Convergence metrics against a known or independently computed optimum,
a decay-envelope check for the prescribed-time bound (the cost excess scaled
by 1/v(t) must decay log-linearly in the stretched variable s = T*t/(T-t)),
sample-wise comparison of trajectories that share an output grid, and a
tracking diagnostic for the derivative estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .plant import PlantModel, lie_lgh
from .sim import Trajectory
from .timescale import PrescribedTime, v_of_t

Array = np.ndarray


@dataclass
class ConvergenceReport:
    """Terminal-error metrics of one run.

    Terminal quantities are point samples at the final record; the windowed
    mean averages the cost excess over the trailing 5% of the horizon, which
    damps the dither ripple of amplitude O(A).
    """

    terminal_state_error: float
    terminal_input_error: float
    terminal_cost_excess: float
    reduction_ratio: float
    window_mean_cost_excess: float

    def to_dict(self) -> dict:
        return {
            "terminal_state_error": self.terminal_state_error,
            "terminal_input_error": self.terminal_input_error,
            "terminal_cost_excess": self.terminal_cost_excess,
            "reduction_ratio": self.reduction_ratio,
            "window_mean_cost_excess": self.window_mean_cost_excess,
        }


def convergence_report(traj: Trajectory, optimum) -> ConvergenceReport:
    """Measure the run against optimum = (x_star, u_star, y_star)."""
    if traj.status != "completed":
        raise ValueError(
            f"cannot report on a diverged trajectory (diverged at "
            f"t={traj.divergence_time})")
    x_star = np.asarray(optimum[0], dtype=float)
    u_star = float(optimum[1])
    y_star = float(optimum[2])
    initial_excess = float(traj.y[0] - y_star)
    terminal_excess = float(traj.y[-1] - y_star)
    if initial_excess > 0.0:
        ratio = max(terminal_excess, 0.0) / initial_excess
    else:
        ratio = 0.0
    span = traj.t[-1] - traj.t[0]
    start = np.searchsorted(traj.t, traj.t[-1] - 0.05 * span)
    start = min(start, max(len(traj.t) - 10, 0))
    window = traj.y[start:] - y_star
    return ConvergenceReport(
        terminal_state_error=float(np.linalg.norm(traj.x[-1] - x_star)),
        terminal_input_error=abs(float(traj.u_hat[-1]) - u_star),
        terminal_cost_excess=terminal_excess,
        reduction_ratio=ratio,
        window_mean_cost_excess=float(np.mean(window)),
    )


def decay_envelope_check(traj: Trajectory, y_star: float, pt: PrescribedTime,
                         ) -> tuple[bool, float]:
    """Fit the scaled cost excess r(t) = (y - y_star)/v(t) as log-linear in
    s = T*t/(T-t) over the middle 80% of the samples.

    Returns (passes, fitted_rate): passes requires a negative fitted slope
    and r at the last positive sample below r at the first.  If essentially
    no sample has positive excess the trajectory is already converged and
    the check passes trivially with rate nan.
    """
    excess = traj.y - y_star
    eps = 1e-12 * max(1.0, abs(float(excess[0])))
    pos = np.flatnonzero(excess > eps)
    if pos.size < 10:
        return True, math.nan
    r = np.array([excess[i] / v_of_t(float(traj.t[i]), pt) for i in pos])
    s = np.array([pt.T * traj.t[i] / (pt.T - traj.t[i]) for i in pos])
    lo = int(math.floor(0.1 * len(pos)))
    hi = int(math.ceil(0.9 * len(pos)))
    if hi - lo < 2:
        return True, math.nan
    slope = float(np.polyfit(s[lo:hi], np.log(r[lo:hi]), 1)[0])
    return bool(slope < 0.0 and r[-1] < r[0]), slope


def compare_trajectories(a: Trajectory, b: Trajectory,
                         signals: Iterable[str] = ("x", "u", "y"),
                         ) -> tuple[dict[str, float], dict[str, float]]:
    """Sup and RMS differences per signal over the shared output grid.

    The grids must be identical; no resampling is performed.  The signal
    name "x" expands to every state column.  Swapping a and b leaves both
    error maps unchanged.
    """
    for traj in (a, b):
        if traj.status != "completed":
            raise ValueError("cannot compare a diverged trajectory")
    if a.t.shape != b.t.shape or not np.array_equal(a.t, b.t):
        raise ValueError("trajectories do not share an output grid")
    names: list[str] = []
    for name in signals:
        if name == "x":
            if a.n != b.n:
                raise ValueError(f"state dimensions differ ({a.n} vs {b.n})")
            names.extend(f"x{i + 1}" for i in range(a.n))
        else:
            names.append(name)
    sup: dict[str, float] = {}
    rms: dict[str, float] = {}
    for name in names:
        diff = np.abs(a.signal(name) - b.signal(name))
        sup[name] = float(np.max(diff))
        rms[name] = float(np.sqrt(np.mean(diff * diff)))
    return sup, rms


def estimate_tracking(traj: Trajectory, plant: PlantModel,
                      window: float = 0.5) -> float:
    """Mean |xi - L_g h(x)| over the trailing fraction of the run."""
    if not 0.0 < window <= 1.0:
        raise ValueError(f"window must lie in (0, 1], got {window}")
    start = len(traj.t) - max(int(math.ceil(window * len(traj.t))), 1)
    errs = [abs(traj.xi[i] - lie_lgh(plant, traj.x[i]))
            for i in range(start, len(traj.t))]
    return float(np.mean(errs))
