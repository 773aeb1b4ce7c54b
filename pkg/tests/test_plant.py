import math

import numpy as np
import pytest

from ptesc import (EvaluationError, SolverError, check_assumptions, eval_cost,
                   eval_rhs, fed_batch_bioreactor, find_equilibrium_optimum,
                   general_nonlinear, get_plant, lie_lfh, lie_lg2h, lie_lgh,
                   scalar_quadratic, steady_state_cost, steady_state_map)
from ptesc.plant import PlantModel, cost_grad, manifold_residual, numeric_grad


# ---------------------------------------------------------------------------
# Independent oracles for the bioreactor
# ---------------------------------------------------------------------------
# With feed rate u, a non-washout equilibrium needs the growth rate to match
# the dilution: x2/(0.2+x2) = u, so x2 = 0.2u/(1-u), and the substrate
# balance then gives x1 = (10-x2)/2.  Along that curve the measured cost is
# ell(u) = -u*(10 - 0.2u/(1-u))/2, whose interior stationary point solves
# 51u^2 - 102u + 50 = 0.

def bio_open_loop_eq(u):
    x2 = 0.2 * u / (1.0 - u)
    return np.array([(10.0 - x2) / 2.0, x2])


def bio_ell(u):
    return -u * (10.0 - 0.2 * u / (1.0 - u)) / 2.0


BIO_U_STAR = (102.0 - math.sqrt(204.0)) / 102.0          # 0.8599719915971989
BIO_X_STAR = bio_open_loop_eq(BIO_U_STAR)                # (4.3858571..., 1.2282856...)
BIO_Y_STAR = bio_ell(BIO_U_STAR)                         # -3.7717143142914304


def bio_manifold_oracle(plant, u_hat, k):
    """Manifold point via the scalar reduction: the corrected input
    u_bar = u_hat - k*L_g h must reproduce itself through the equilibrium
    curve.  Bisection on phi(u_bar) = u_bar + k*L_g h(eq(u_bar)) - u_hat."""
    def phi(ub):
        return ub + k * lie_lgh(plant, bio_open_loop_eq(ub)) - u_hat

    grid = np.linspace(0.2, 0.97, 300)
    vals = [phi(float(g)) for g in grid]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0:
            a, b = float(grid[i]), float(grid[i + 1])
            for _ in range(100):
                m = 0.5 * (a + b)
                if phi(a) * phi(m) <= 0.0:
                    b = m
                else:
                    a = m
            return bio_open_loop_eq(0.5 * (a + b))
    raise AssertionError("oracle bracket failed")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_eval_rhs_examples():
    gn = general_nonlinear()
    np.testing.assert_allclose(eval_rhs(gn, [0.0, 0.0], 0.0), [0.0, 0.0])
    np.testing.assert_allclose(eval_rhs(gn, [1.0, 2.0], 0.0), [3.0, 1.0])
    bio = fed_batch_bioreactor()
    np.testing.assert_allclose(eval_rhs(bio, [1.0, 1.0], 0.0),
                               [1.0 / 1.2, -2.0 / 1.2], rtol=1e-15)


def test_eval_cost_examples():
    gn = general_nonlinear()
    assert eval_cost(gn, [0.0, 0.0]) == 1.0
    assert eval_cost(gn, [1.0, 2.0]) == 6.0
    bio = fed_batch_bioreactor()
    assert eval_cost(bio, [1.0, 1.0]) == pytest.approx(-1.0 / 1.2, rel=1e-15)


def test_eval_errors_carry_point():
    gn = general_nonlinear()
    with pytest.raises(EvaluationError) as err:
        eval_rhs(gn, [math.nan, 0.0], 0.0)
    assert err.value.x is not None
    with pytest.raises(EvaluationError):
        eval_cost(gn, [math.inf, 0.0])
    with pytest.raises(EvaluationError):
        eval_rhs(gn, [0.0, 0.0], math.nan)


def test_state_shape_checked():
    gn = general_nonlinear()
    with pytest.raises(ValueError, match="shape"):
        eval_cost(gn, [1.0])


def test_lie_lgh_examples():
    gn = general_nonlinear()
    assert lie_lgh(gn, [1.0, 2.0]) == 4.0
    assert lie_lgh(gn, [0.7, 0.0]) == 0.0
    assert lie_lgh(scalar_quadratic(), [3.0]) == 4.0


def test_lie_lfh_examples():
    gn = general_nonlinear()
    assert lie_lfh(gn, [1.0, 2.0]) == 10.0
    assert lie_lfh(gn, [0.0, 0.0]) == 0.0
    assert lie_lfh(scalar_quadratic(), [2.0]) == -4.0


def test_numeric_grad_matches_analytic():
    rng = np.random.default_rng(7)
    for plant in (general_nonlinear(), fed_batch_bioreactor(), scalar_quadratic()):
        for _ in range(100):
            x = rng.uniform(0.3, 2.0, plant.n)
            num = numeric_grad(plant, x)
            ana = cost_grad(plant, x)
            np.testing.assert_allclose(num, ana, rtol=1e-6, atol=1e-8)


def test_numeric_grad_used_when_analytic_missing():
    bare = PlantModel(name="bare", n=1,
                      drift=lambda x: -x, input_map=lambda x: np.ones(1),
                      cost=lambda x: float((x[0] - 1.0) ** 2))
    assert lie_lgh(bare, [3.0]) == pytest.approx(4.0, rel=1e-9)


def test_lie_lg2h_builtins():
    assert lie_lg2h(general_nonlinear(), [0.4, -0.3]) == pytest.approx(2.0, rel=1e-6)
    assert lie_lg2h(scalar_quadratic(), [2.5]) == pytest.approx(2.0, rel=1e-6)


# ---------------------------------------------------------------------------
# Steady-state manifold
# ---------------------------------------------------------------------------

def test_steady_state_map_general_nonlinear_origin():
    gn = general_nonlinear()
    x = steady_state_map(gn, 0.0, 25.0)
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-10)


def test_steady_state_map_scalar():
    sq = scalar_quadratic()
    for k in (0.5, 1.0, 25.0):
        assert steady_state_map(sq, 1.0, k)[0] == pytest.approx(1.0, abs=1e-12)
    # general u_hat: -x + u_hat - 2k(x-1) = 0  ->  x = (u_hat + 2k)/(1 + 2k)
    assert steady_state_map(sq, 0.2, 1.0)[0] == pytest.approx(2.2 / 3.0, rel=1e-12)


def test_steady_state_map_bioreactor_against_oracle():
    bio = fed_batch_bioreactor()
    x = steady_state_map(bio, 0.5, 2.0)
    oracle = bio_manifold_oracle(bio, 0.5, 2.0)
    np.testing.assert_allclose(x, oracle, rtol=1e-8)
    # both equilibrium balances hold
    assert x[0] - (10.0 - x[1]) / 2.0 == pytest.approx(0.0, abs=1e-8)
    u_bar = 0.5 - 2.0 * lie_lgh(bio, x)
    assert x[1] / (0.2 + x[1]) == pytest.approx(u_bar, abs=1e-8)


def test_manifold_residual_tolerance():
    rng = np.random.default_rng(3)
    for plant, k, us in ((general_nonlinear(), 25.0, rng.uniform(-2, 2, 8)),
                         (scalar_quadratic(), 1.0, rng.uniform(-1, 3, 8)),
                         (fed_batch_bioreactor(), 2.0, rng.uniform(0.2, 0.9, 8))):
        for u in us:
            x = steady_state_map(plant, float(u), k)
            res = np.linalg.norm(manifold_residual(plant, x, float(u), k))
            assert res <= 1e-10 * (1.0 + np.linalg.norm(x))


def test_steady_state_cost_examples():
    assert steady_state_cost(general_nonlinear(), 0.0, 25.0) == pytest.approx(1.0, abs=1e-12)
    assert steady_state_cost(scalar_quadratic(), 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    # near the optimum the proportional correction is negligible and the
    # closed-form open-loop reduction is an independent oracle
    lib = steady_state_cost(fed_batch_bioreactor(), 0.86, 2.0)
    assert lib == pytest.approx(bio_ell(0.86), abs=1e-6)
    assert lib == pytest.approx(-3.7717, abs=1e-3)


def test_find_equilibrium_optimum_known_plants():
    u, x, y = find_equilibrium_optimum(general_nonlinear(), 25.0, (-5.0, 5.0))
    assert abs(u - 0.0) <= 1e-6
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-6)
    assert y == pytest.approx(1.0, abs=1e-9)

    u, x, y = find_equilibrium_optimum(scalar_quadratic(), 1.0, (-2.0, 4.0))
    assert abs(u - 1.0) <= 1e-6
    assert x[0] == pytest.approx(1.0, abs=1e-6)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_find_equilibrium_optimum_bioreactor_against_oracle():
    u, x, y = find_equilibrium_optimum(fed_batch_bioreactor(), 2.0, (0.01, 0.99))
    assert u == pytest.approx(BIO_U_STAR, abs=2e-5)
    np.testing.assert_allclose(x, BIO_X_STAR, rtol=1e-5)
    assert y == pytest.approx(BIO_Y_STAR, abs=1e-10)


def test_find_equilibrium_optimum_rejects_empty_range():
    with pytest.raises(ValueError):
        find_equilibrium_optimum(scalar_quadratic(), 1.0, (2.0, 2.0))


def test_steady_state_gradient_sign_property():
    """On the manifold, the input-direction cost derivative acts like the
    gradient of a convex steady-state cost: (u - u*)*L_g h(pi(u)) >= 0."""
    sq = scalar_quadratic()
    for u in np.linspace(-1.0, 3.0, 41):
        lgh = lie_lgh(sq, steady_state_map(sq, float(u), 1.0))
        assert (u - 1.0) * lgh >= -1e-9
    gn = general_nonlinear()
    for u in np.linspace(-3.0, 3.0, 21):
        lgh = lie_lgh(gn, steady_state_map(gn, float(u), 25.0))
        assert (u - 0.0) * lgh >= -1e-9


# ---------------------------------------------------------------------------
# Assumption audit
# ---------------------------------------------------------------------------

def test_check_assumptions_scalar_quadratic_exact_bounds():
    rep = check_assumptions(scalar_quadratic(), [(-3.0, 5.0)], k=1.0, samples=256)
    assert rep.beta1 == pytest.approx(4.0, abs=1e-6)
    assert rep.beta2 == pytest.approx(4.0, abs=1e-6)
    assert rep.alpha_h_min == pytest.approx(2.0, rel=1e-4)
    assert rep.beta3 == pytest.approx(2.0, rel=1e-4)
    assert rep.beta4 == pytest.approx(2.0, rel=1e-4)
    assert rep.violations == []


def test_check_assumptions_general_nonlinear_axis_gap():
    """|L_g h|^2 = 4*x2^2 cannot be bounded below by a multiple of the cost
    excess on the x1-axis; the audit must produce a witness there."""
    rep = check_assumptions(general_nonlinear(), [(-1.0, 1.0), (-1.0, 1.0)],
                            k=25.0, samples=256)
    witnesses = [v for v in rep.violations if v.kind == "gradient_ratio_vanishes"
                 and abs(v.x[1]) <= 1e-3 and abs(v.x[0]) > 1e-3]
    assert witnesses, "expected a gradient-bound violation on the x1-axis"
    assert rep.alpha_h_min == pytest.approx(2.0, rel=1e-4)
    assert rep.beta2 == pytest.approx(4.0, rel=1e-6)


def test_check_assumptions_violation_reproducible():
    rep = check_assumptions(general_nonlinear(), [(-1.0, 1.0), (-1.0, 1.0)],
                            k=25.0, samples=256)
    gn = general_nonlinear()
    for v in rep.violations:
        if v.kind == "gradient_ratio_vanishes":
            x = np.array(v.x)
            ratio = lie_lgh(gn, x) ** 2 / (eval_cost(gn, x) - 1.0)
            assert ratio == pytest.approx(v.value, rel=1e-12, abs=1e-30)


def test_check_assumptions_bioreactor_iterated_bounds():
    bio = fed_batch_bioreactor()
    rep = check_assumptions(bio, [(3.0, 6.0), (0.5, 2.5)], k=2.0, samples=256,
                            optimum=(BIO_X_STAR, BIO_U_STAR))
    # regression values from the first audit run (loose factor-2 bands)
    assert 0.0 < rep.beta3 < rep.beta4
    assert rep.beta3 == pytest.approx(2.77, rel=0.5)
    assert rep.beta4 == pytest.approx(623.0, rel=0.5)
    # the raw cost has no unconstrained minimum over a state box: the audit
    # must flag indefinite Hessians and points below the manifold optimum
    kinds = {v.kind for v in rep.violations}
    assert "hessian_not_positive" in kinds
    assert "cost_below_minimum" in kinds


def test_check_assumptions_requires_optimum_and_samples():
    bio = fed_batch_bioreactor()
    with pytest.raises(ValueError, match="optimum"):
        check_assumptions(bio, [(3.0, 6.0), (0.5, 2.5)], k=2.0, samples=256)
    with pytest.raises(ValueError, match="100"):
        check_assumptions(scalar_quadratic(), [(-3.0, 5.0)], k=1.0, samples=50)


def test_get_plant_names():
    assert get_plant("general_nonlinear").n == 2
    assert get_plant("fed_batch_bioreactor").n == 2
    assert get_plant("scalar_quadratic").n == 1
    with pytest.raises(ValueError, match="unknown plant"):
        get_plant("does_not_exist")


def test_solver_error_reports_residual():
    # no equilibrium: constant positive drift, no input authority
    hopeless = PlantModel(name="hopeless", n=1,
                          drift=lambda x: np.ones(1),
                          input_map=lambda x: np.zeros(1),
                          cost=lambda x: float(x[0] ** 2),
                          ss_box=((-1.0, 1.0),))
    with pytest.raises(SolverError) as err:
        steady_state_map(hopeless, 0.3, 1.0)
    assert err.value.best_residual > 0.0
