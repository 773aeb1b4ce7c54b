"""Plant definitions and equilibrium machinery.

A plant is a single-input nonlinear system

    dx/dt = f(x) + g(x) u,      y = h(x)

with state dimension n and scalar input u.  This module holds the plant
container, the three builtin benchmark plants, Lie derivatives of the cost
along f and g, the steady-state manifold solver (the equilibrium reached
under a frozen integral input plus proportional correction), the resulting
steady-state cost and its minimizer, and an empirical audit of the
regularity conditions the controller design relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

Array = np.ndarray


class EvaluationError(ValueError):
    """A plant function was evaluated at, or produced, a nonfinite point."""

    def __init__(self, message: str, x=None, u=None):
        super().__init__(message)
        self.x = x
        self.u = u


class SolverError(RuntimeError):
    """An equilibrium solve failed; carries the best residual reached."""

    def __init__(self, message: str, best_residual: float = math.inf, best_x=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_x = best_x


@dataclass
class PlantModel:
    """Container for one plant: dimension, vector fields, cost, and metadata.

    drift and input_map return length-n arrays; cost returns a scalar.
    grad_cost is optional; when absent a central-difference gradient is used.
    known_optimum, when set, is the pair (x_star, u_star) at the cost
    minimizer.  ss_box bounds the coarse grid that seeds equilibrium solves.
    kernel_id selects a compiled fast-path implementation (builtins only).
    """

    name: str
    n: int
    drift: Callable[[Array], Array]
    input_map: Callable[[Array], Array]
    cost: Callable[[Array], float]
    grad_cost: Optional[Callable[[Array], Array]] = None
    known_optimum: Optional[tuple[Array, float]] = None
    ss_box: Optional[tuple[tuple[float, float], ...]] = None
    kernel_id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"state dimension must be positive, got {self.n}")
        if self.known_optimum is not None:
            x_star, u_star = self.known_optimum
            self.known_optimum = (np.asarray(x_star, dtype=float), float(u_star))


def _as_state(plant: PlantModel, x) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape != (plant.n,):
        raise ValueError(f"state for {plant.name} must have shape ({plant.n},), got {x.shape}")
    return x


def eval_rhs(plant: PlantModel, x, u: float) -> Array:
    """Right-hand side f(x) + g(x)*u."""
    x = _as_state(plant, x)
    if not np.all(np.isfinite(x)) or not math.isfinite(u):
        raise EvaluationError(f"nonfinite evaluation point x={x}, u={u}", x=x, u=u)
    return plant.drift(x) + plant.input_map(x) * u


def eval_cost(plant: PlantModel, x) -> float:
    """Measured cost y = h(x)."""
    x = _as_state(plant, x)
    if not np.all(np.isfinite(x)):
        raise EvaluationError(f"nonfinite evaluation point x={x}", x=x)
    return float(plant.cost(x))


def numeric_grad(plant: PlantModel, x) -> Array:
    """Central-difference cost gradient, step 1e-6*max(1, |x_i|) per coordinate."""
    x = _as_state(plant, x)
    g = np.empty(plant.n)
    for i in range(plant.n):
        step = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (plant.cost(xp) - plant.cost(xm)) / (2.0 * step)
    return g


def cost_grad(plant: PlantModel, x) -> Array:
    """Cost gradient, analytic when the plant provides one."""
    x = _as_state(plant, x)
    if plant.grad_cost is not None:
        return np.asarray(plant.grad_cost(x), dtype=float)
    return numeric_grad(plant, x)


def lie_lgh(plant: PlantModel, x) -> float:
    """Directional derivative of the cost along the input field: grad(h) . g(x)."""
    x = _as_state(plant, x)
    val = float(np.dot(cost_grad(plant, x), plant.input_map(x)))
    if not math.isfinite(val):
        raise EvaluationError(f"nonfinite input-direction derivative at x={x}", x=x)
    return val


def lie_lfh(plant: PlantModel, x) -> float:
    """Directional derivative of the cost along the drift field: grad(h) . f(x)."""
    x = _as_state(plant, x)
    val = float(np.dot(cost_grad(plant, x), plant.drift(x)))
    if not math.isfinite(val):
        raise EvaluationError(f"nonfinite drift-direction derivative at x={x}", x=x)
    return val


def lie_lg2h(plant: PlantModel, x) -> float:
    """Iterated derivative grad(L_g h) . g, by central differences of lie_lgh."""
    x = _as_state(plant, x)
    grad = np.empty(plant.n)
    for i in range(plant.n):
        step = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (lie_lgh(plant, xp) - lie_lgh(plant, xm)) / (2.0 * step)
    return float(np.dot(grad, plant.input_map(x)))


# ---------------------------------------------------------------------------
# Steady-state manifold
# ---------------------------------------------------------------------------

def manifold_residual(plant: PlantModel, x, u_hat: float, k: float) -> Array:
    """Defining equation of the manifold: f + g*u_hat - k*g*(g . grad h)."""
    x = _as_state(plant, x)
    g = plant.input_map(x)
    return plant.drift(x) + g * u_hat - k * g * float(np.dot(g, cost_grad(plant, x)))


def _residual_jacobian(plant: PlantModel, x: Array, u_hat: float, k: float) -> Array:
    n = plant.n
    jac = np.empty((n, n))
    for j in range(n):
        step = 1e-6 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        jac[:, j] = (manifold_residual(plant, xp, u_hat, k)
                     - manifold_residual(plant, xm, u_hat, k)) / (2.0 * step)
    return jac


def _grid_seeds(plant: PlantModel, u_hat: float, k: float,
                max_seeds: int = 128) -> list[Array]:
    box = plant.ss_box
    if box is None:
        box = tuple((-5.0, 5.0) for _ in range(plant.n))
    axes = [np.linspace(lo, hi, 11) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    scores = np.empty(len(pts))
    for i, p in enumerate(pts):
        try:
            scores[i] = np.linalg.norm(manifold_residual(plant, p, u_hat, k))
        except Exception:
            scores[i] = math.inf
    order = np.argsort(scores)
    return [pts[i].copy() for i in order[:max_seeds]]


def _newton(plant: PlantModel, x0: Array, u_hat: float, k: float,
            max_iter: int = 100) -> tuple[Array, float]:
    x = x0.copy()
    res = manifold_residual(plant, x, u_hat, k)
    rnorm = float(np.linalg.norm(res))
    for _ in range(max_iter):
        if rnorm <= 1e-12 * (1.0 + float(np.linalg.norm(x))):
            break
        jac = _residual_jacobian(plant, x, u_hat, k)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            delta, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        # backtracking on the residual norm
        lam = 1.0
        for _ in range(40):
            x_try = x + lam * delta
            try:
                res_try = manifold_residual(plant, x_try, u_hat, k)
                rnorm_try = float(np.linalg.norm(res_try))
            except Exception:
                rnorm_try = math.inf
            if math.isfinite(rnorm_try) and rnorm_try < rnorm:
                x, res, rnorm = x_try, res_try, rnorm_try
                break
            lam *= 0.5
        else:
            break
    return x, rnorm


def _relaxation(plant: PlantModel, x0: Array, u_hat: float, k: float) -> Array:
    """Integrate dx/dt = residual(x) toward an attracting root (fallback only)."""
    x = x0.copy()
    h = 1e-3
    for _ in range(200_000):
        r1 = manifold_residual(plant, x, u_hat, k)
        if float(np.linalg.norm(r1)) <= 1e-9 * (1.0 + float(np.linalg.norm(x))):
            break
        r2 = manifold_residual(plant, x + 0.5 * h * r1, u_hat, k)
        r3 = manifold_residual(plant, x + 0.5 * h * r2, u_hat, k)
        r4 = manifold_residual(plant, x + h * r3, u_hat, k)
        x_new = x + (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        if not np.all(np.isfinite(x_new)):
            h *= 0.5
            if h < 1e-12:
                break
            continue
        if np.linalg.norm(manifold_residual(plant, x_new, u_hat, k)) < np.linalg.norm(r1):
            x = x_new
            h = min(h * 1.3, 0.1)
        else:
            h *= 0.5
            if h < 1e-12:
                break
    return x


def steady_state_map(plant: PlantModel, u_hat: float, k: float,
                     x_guess=None) -> Array:
    """Solve for the manifold point pi(u_hat).

    Damped Newton with numeric Jacobian, seeded from x_guess when supplied and
    otherwise from the best points of a coarse grid over the plant's search
    box; a relaxation integration of dx/dt = residual is used as a fallback.
    The returned point satisfies |residual| <= 1e-10*(1 + |x|).
    """
    if not math.isfinite(u_hat):
        raise EvaluationError(f"nonfinite input u_hat={u_hat}", u=u_hat)
    if x_guess is not None:
        seeds = [_as_state(plant, x_guess)]
    else:
        seeds = _grid_seeds(plant, u_hat, k)
    best_x, best_r = None, math.inf
    roots: list[Array] = []
    for seed in seeds:
        x, rnorm = _newton(plant, seed, u_hat, k)
        if rnorm < best_r:
            best_x, best_r = x, rnorm
        if rnorm <= 1e-10 * (1.0 + float(np.linalg.norm(x))):
            if x_guess is not None:
                return x
            if not any(np.allclose(x, r, atol=1e-8) for r in roots):
                roots.append(x)
    if roots:
        # several manifold branches can coexist (e.g. a washout equilibrium);
        # the relevant one is the branch carrying the cost minimizer
        return min(roots, key=lambda r: eval_cost(plant, r))
    # Newton stalled from every seed: relax, then polish
    start = best_x if best_x is not None else seeds[0]
    x, rnorm = _newton(plant, _relaxation(plant, start, u_hat, k), u_hat, k)
    if rnorm <= 1e-10 * (1.0 + float(np.linalg.norm(x))):
        return x
    if rnorm < best_r:
        best_x, best_r = x, rnorm
    raise SolverError(
        f"no equilibrium found for {plant.name} at u_hat={u_hat} "
        f"(best residual {best_r:.3e})",
        best_residual=best_r, best_x=best_x)


def steady_state_cost(plant: PlantModel, u_hat: float, k: float,
                      x_guess=None) -> float:
    """Cost along the manifold: h(pi(u_hat))."""
    return eval_cost(plant, steady_state_map(plant, u_hat, k, x_guess=x_guess))


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def find_equilibrium_optimum(plant: PlantModel, k: float,
                             u_range: tuple[float, float],
                             n_grid: int = 1001) -> tuple[float, Array, float]:
    """Minimize the steady-state cost over u_range.

    Dense grid sweep (warm-started equilibrium continuation) followed by
    golden-section refinement of the bracketing interval down to |du| <= 1e-8.
    Per-point solver failures are skipped; the optimum is taken over the
    points that solved.  Returns (u_star, x_star, y_star).
    """
    lo, hi = float(u_range[0]), float(u_range[1])
    if not lo < hi:
        raise ValueError(f"empty input range {u_range}")
    n_grid = max(int(n_grid), 1000)
    us = np.linspace(lo, hi, n_grid)
    costs = np.full(n_grid, np.nan)
    guess = None
    failures: list[tuple[float, str]] = []
    for i, u in enumerate(us):
        try:
            x = steady_state_map(plant, float(u), k, x_guess=guess)
            guess = x
            costs[i] = eval_cost(plant, x)
        except (SolverError, EvaluationError) as exc:
            failures.append((float(u), str(exc)))
            guess = None
    ok = np.isfinite(costs)
    if not ok.any():
        raise SolverError(
            f"steady-state sweep failed at every point in {u_range} "
            f"({len(failures)} failures)")
    i_best = int(np.nanargmin(costs))
    a = us[max(i_best - 1, 0)]
    b = us[min(i_best + 1, n_grid - 1)]
    x_seed = steady_state_map(plant, float(us[i_best]), k)

    def ell(u: float) -> float:
        return steady_state_cost(plant, u, k, x_guess=x_seed)

    # golden-section on [a, b]
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = ell(c), ell(d)
    while abs(b - a) > 1e-8:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = ell(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = ell(d)
    u_star = 0.5 * (a + b)
    x_star = steady_state_map(plant, u_star, k)
    return u_star, x_star, eval_cost(plant, x_star)


# ---------------------------------------------------------------------------
# Assumption audit
# ---------------------------------------------------------------------------

@dataclass
class AssumptionViolation:
    """One sampled point where a regularity bound failed; re-evaluating the
    recorded quantity at x reproduces the recorded value."""

    kind: str
    x: tuple[float, ...]
    value: float


@dataclass
class AssumptionReport:
    """Empirical constants for the controller's regularity conditions.

    alpha_h_min: smallest sampled cost-Hessian eigenvalue.
    beta1/beta2: sampled lower/upper bounds of |L_g h|^2 / (h - h_star).
    beta3/beta4: sampled lower/upper bounds of the iterated derivative
    grad(L_g h) . g.  violations lists every point where positivity of one
    of these bounds failed.
    """

    alpha_h_min: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    violations: list[AssumptionViolation] = field(default_factory=list)
    n_samples: int = 0
    box: tuple[tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha_h_min": self.alpha_h_min,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "beta3": self.beta3,
            "beta4": self.beta4,
            "n_samples": self.n_samples,
            "box": [list(b) for b in self.box],
            "violations": [
                {"kind": v.kind, "x": list(v.x), "value": v.value}
                for v in self.violations
            ],
        }


def hessian(plant: PlantModel, x) -> Array:
    """Numeric cost Hessian by second central differences."""
    x = _as_state(plant, x)
    n = plant.n
    hess = np.empty((n, n))
    steps = [1e-4 * max(1.0, abs(x[i])) for i in range(n)]
    h0 = plant.cost(x)
    for i in range(n):
        xp = x.copy(); xm = x.copy()
        xp[i] += steps[i]; xm[i] -= steps[i]
        hess[i, i] = (plant.cost(xp) - 2.0 * h0 + plant.cost(xm)) / steps[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            xpp = x.copy(); xpm = x.copy(); xmp = x.copy(); xmm = x.copy()
            xpp[i] += steps[i]; xpp[j] += steps[j]
            xpm[i] += steps[i]; xpm[j] -= steps[j]
            xmp[i] -= steps[i]; xmp[j] += steps[j]
            xmm[i] -= steps[i]; xmm[j] -= steps[j]
            hess[i, j] = hess[j, i] = (
                plant.cost(xpp) - plant.cost(xpm) - plant.cost(xmp) + plant.cost(xmm)
            ) / (4.0 * steps[i] * steps[j])
    return hess


_RATIO_FLOOR = 1e-9


def check_assumptions(plant: PlantModel, box: Sequence[tuple[float, float]],
                      k: float, samples: int = 256,
                      optimum: Optional[tuple[Array, float]] = None) -> AssumptionReport:
    """Sample the box and audit the regularity bounds the design relies on.

    Uses a Halton sequence over the box.  At each point it records the
    smallest Hessian eigenvalue, the ratio |L_g h|^2/(h - h_star) (skipped in
    a small neighborhood of the minimizer where it degenerates to 0/0), and
    the iterated derivative grad(L_g h) . g.  The worst ratio sample is then
    refined by a bounded local minimization: if the ratio can be driven
    (numerically) to zero at a point with positive cost excess, that point is
    recorded as a gradient-bound violation witness.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != plant.n:
        raise ValueError(f"box must have {plant.n} dimensions, got {len(box)}")
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    if optimum is None:
        optimum = plant.known_optimum
    if optimum is None:
        raise ValueError(f"{plant.name} has no known optimum; pass optimum=(x_star, u_star)")
    x_star = np.asarray(optimum[0], dtype=float)
    u_star = float(optimum[1])
    h_star = eval_cost(plant, x_star)
    # consistency of the supplied optimum with the manifold at the given gain
    res = np.linalg.norm(manifold_residual(plant, x_star, u_star, k))
    if res > 1e-6 * (1.0 + float(np.linalg.norm(x_star))):
        raise ValueError(
            f"(x_star, u_star) is not an equilibrium of {plant.name} at k={k} "
            f"(residual {res:.3e})")

    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = qmc.Halton(d=plant.n, scramble=False).random(samples)
    pts = lo + pts * (hi - lo)

    excess_tol = 1e-9 * (1.0 + abs(h_star))
    alpha_h_min = math.inf
    beta1, beta2 = math.inf, -math.inf
    beta3, beta4 = math.inf, -math.inf
    violations: list[AssumptionViolation] = []
    worst_ratio_pt = None
    worst_ratio = math.inf

    def ratio_at(x: Array) -> float:
        lgh = lie_lgh(plant, x)
        return lgh * lgh / (eval_cost(plant, x) - h_star)

    for x in pts:
        lam = float(np.linalg.eigvalsh(hessian(plant, x))[0])
        alpha_h_min = min(alpha_h_min, lam)
        if lam <= 0.0:
            violations.append(AssumptionViolation("hessian_not_positive", tuple(x), lam))
        excess = eval_cost(plant, x) - h_star
        if excess < -excess_tol:
            violations.append(AssumptionViolation("cost_below_minimum", tuple(x), excess))
        elif excess > excess_tol:
            r = ratio_at(x)
            beta1 = min(beta1, r)
            beta2 = max(beta2, r)
            if r <= _RATIO_FLOOR:
                violations.append(AssumptionViolation("gradient_ratio_vanishes", tuple(x), r))
            if r < worst_ratio:
                worst_ratio, worst_ratio_pt = r, x
        lg2 = lie_lg2h(plant, x)
        beta3 = min(beta3, lg2)
        beta4 = max(beta4, lg2)
        if lg2 <= 0.0:
            violations.append(AssumptionViolation("iterated_lie_not_positive", tuple(x), lg2))

    # polish the worst ratio sample toward a genuine witness of a vanishing bound
    if worst_ratio_pt is not None and worst_ratio > _RATIO_FLOOR:
        def objective(x: Array) -> float:
            x = np.clip(x, lo, hi)
            excess = eval_cost(plant, x) - h_star
            if excess <= 10.0 * excess_tol:
                return 1e6
            return ratio_at(x)

        opt = minimize(objective, worst_ratio_pt, method="Nelder-Mead",
                       options={"maxiter": 400 * plant.n, "xatol": 1e-10, "fatol": 1e-14})
        x_ref = np.clip(opt.x, lo, hi)
        if eval_cost(plant, x_ref) - h_star > 10.0 * excess_tol:
            r_ref = ratio_at(x_ref)
            if r_ref <= _RATIO_FLOOR:
                violations.append(
                    AssumptionViolation("gradient_ratio_vanishes", tuple(x_ref), r_ref))

    return AssumptionReport(
        alpha_h_min=alpha_h_min, beta1=beta1, beta2=beta2, beta3=beta3,
        beta4=beta4, violations=violations, n_samples=samples, box=box)


# ---------------------------------------------------------------------------
# Builtin plants
# ---------------------------------------------------------------------------

def _gn_drift(x: Array) -> Array:
    return np.array([-x[0] + x[1] * x[1], -x[0] + x[1]])


def _gn_input(x: Array) -> Array:
    return np.array([0.0, 1.0])


def _gn_cost(x: Array) -> float:
    return 1.0 + x[1] * x[1] + x[0] * x[0]


def _gn_grad(x: Array) -> Array:
    return np.array([2.0 * x[0], 2.0 * x[1]])


def _bio_drift(x: Array) -> Array:
    growth = x[0] * x[1] / (0.2 + x[1])
    return np.array([growth, -2.0 * growth])


def _bio_input(x: Array) -> Array:
    return np.array([-x[0], 10.0 - x[1]])


def _bio_cost(x: Array) -> float:
    return -x[0] * x[1] / (0.2 + x[1])


def _bio_grad(x: Array) -> Array:
    denom = 0.2 + x[1]
    return np.array([-x[1] / denom, -0.2 * x[0] / (denom * denom)])


def _sq_drift(x: Array) -> Array:
    return np.array([-x[0]])


def _sq_input(x: Array) -> Array:
    return np.array([1.0])


def _sq_cost(x: Array) -> float:
    return (x[0] - 1.0) ** 2


def _sq_grad(x: Array) -> Array:
    return np.array([2.0 * (x[0] - 1.0)])


def general_nonlinear() -> PlantModel:
    """Two-state benchmark with quadratic cost minimized at the origin."""
    return PlantModel(
        name="general_nonlinear", n=2,
        drift=_gn_drift, input_map=_gn_input, cost=_gn_cost, grad_cost=_gn_grad,
        known_optimum=(np.array([0.0, 0.0]), 0.0),
        ss_box=((-3.0, 3.0), (-3.0, 3.0)),
        kernel_id=0)


def fed_batch_bioreactor() -> PlantModel:
    """Monod-kinetics bioreactor; feed rate u, cost = negative biomass growth rate."""
    return PlantModel(
        name="fed_batch_bioreactor", n=2,
        drift=_bio_drift, input_map=_bio_input, cost=_bio_cost, grad_cost=_bio_grad,
        known_optimum=None,
        ss_box=((0.25, 6.0), (0.1, 9.5)),
        kernel_id=1)


def scalar_quadratic() -> PlantModel:
    """One-state test plant: f=-x, g=1, h=(x-1)^2; every regularity bound is exact."""
    return PlantModel(
        name="scalar_quadratic", n=1,
        drift=_sq_drift, input_map=_sq_input, cost=_sq_cost, grad_cost=_sq_grad,
        known_optimum=(np.array([1.0]), 1.0),
        ss_box=((-4.0, 6.0),),
        kernel_id=2)


BUILTIN_PLANTS: dict[str, Callable[[], PlantModel]] = {
    "general_nonlinear": general_nonlinear,
    "fed_batch_bioreactor": fed_batch_bioreactor,
    "scalar_quadratic": scalar_quadratic,
}


def get_plant(name: str) -> PlantModel:
    try:
        factory = BUILTIN_PLANTS[name]
    except KeyError:
        raise ValueError(
            f"unknown plant {name!r}; builtins: {', '.join(sorted(BUILTIN_PLANTS))}"
        ) from None
    return factory()
