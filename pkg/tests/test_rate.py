import numpy as np
import pytest
import scipy.linalg

from gossipsa.engine import SimulationConfig, run_simulation
from gossipsa.gossip import Variant, make_params
from gossipsa.graph import random_strongly_connected
from gossipsa.models import AffineGaussianModel, Constant, gaussian_mean_model, quadratic_gradient_model
from gossipsa.ode import OdeSpec, equilibrium
from gossipsa.rate import (
    InsufficientTail,
    NotHurwitz,
    SdeModel,
    build_sde,
    choose_tail_length,
    empirical_normalized_error,
    estimate_g,
    solve_lyapunov,
    stationary_covariance,
)

from helpers import ring2


def test_scalar_lyapunov():
    S = solve_lyapunov([[-0.6]], [[1.8]])
    assert S[0, 0] == pytest.approx(1.8 / 1.2)


def test_diagonal_lyapunov():
    np.testing.assert_allclose(solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2)), np.diag([0.5, 0.25]))


def test_zero_noise_lyapunov():
    np.testing.assert_array_equal(solve_lyapunov(np.diag([-1.0, -3.0]), np.zeros((2, 2))), np.zeros((2, 2)))


def test_lyapunov_matches_scipy():
    rng = np.random.default_rng(0)
    for p in (2, 3, 5):
        M = rng.normal(size=(p, p))
        J = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(p)
        B = rng.normal(size=(p, p))
        Q = B @ B.T
        np.testing.assert_allclose(solve_lyapunov(J, Q), scipy.linalg.solve_continuous_lyapunov(J, -Q), atol=1e-10)


def test_non_hurwitz_reported():
    sde = SdeModel(np.array([[0.1]]), np.array([[1.0]]), np.ones(1), [np.eye(1)])
    assert not sde.hurwitz
    with pytest.raises(NotHurwitz):
        stationary_covariance(sde)


def test_sde_gaussian_mean():
    w = np.array([0.1, 0.3, 0.2])
    model = gaussian_mean_model([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])
    spec = OdeSpec(w, model)
    g = np.array([0.05, 0.1, 0.02])
    sde = build_sde(spec, model, [5.0], g)
    assert sde.J[0, 0] == pytest.approx(-w.sum(), abs=1e-8)
    assert sde.Q[0, 0] == pytest.approx(0.05 + 0.4 + 0.18)
    assert sde.noise_formula_valid
    assert stationary_covariance(sde)[0, 0] == pytest.approx(0.63 / (2 * 0.6), rel=1e-7)


def test_sde_quadratic_and_checks():
    rng = np.random.default_rng(2)
    model = quadratic_gradient_model(rng.normal(size=(3, 2)), [[2.0, 0.4], [0.4, 1.0]], np.eye(2))
    spec = OdeSpec(np.array([0.2, 0.3, 0.5]), model)
    x = equilibrium(spec, np.zeros(2))
    sde = build_sde(spec, model, x, np.ones(3) * 0.1)
    np.testing.assert_allclose(sde.J, -np.array([[2.0, 0.4], [0.4, 1.0]]), atol=1e-6)
    np.testing.assert_allclose(sde.J, sde.J_analytic, atol=1e-6)
    assert not sde.noise_formula_valid  # agents disagree about the optimum
    with pytest.raises(ValueError):
        build_sde(spec, model, x + 1.0, np.ones(3))


def test_zero_noise_gives_zero_q():
    model = AffineGaussianModel(np.full((2, 1), 2.0), np.ones((2, 1, 1)), np.zeros((2, 1, 1)))
    sde = build_sde(OdeSpec(np.ones(2), model), model, [2.0], [0.3, 0.4])
    assert sde.Q[0, 0] == 0.0
    assert stationary_covariance(sde)[0, 0] == 0.0


def test_g_symmetry_and_precision():
    est = estimate_g(ring2(), Variant.AUC, None, 10_000, 1)
    assert abs(est.g[0] - est.g[1]) < 3 * np.hypot(est.se[0], est.se[1])
    assert np.all(est.se < 0.01)
    assert est.decay_bound < 1e-3


@pytest.mark.parametrize("variant", list(Variant))
def test_g_bounds(variant):
    g = random_strongly_connected(6, 0.4, 3)
    params = make_params(g, np.full(6, 1 / 6), 0.6)
    est = estimate_g(params, variant, None, 2000, 2)
    assert np.all(est.g > 0) and est.g.sum() <= 1.0


def test_g_acu_below_auc():
    # ACU excludes the broadcaster's own update, so its g can only be smaller on average
    params = ring2()
    auc = estimate_g(params, Variant.AUC, 64, 5000, 0)
    acu = estimate_g(params, Variant.ACU, 64, 5000, 0)
    assert np.all(acu.g < auc.g)


def test_short_tail_rejected():
    params = make_params(random_strongly_connected(8, 0.3, 1), np.full(8, 1 / 8), 0.3)
    with pytest.raises(InsufficientTail):
        estimate_g(params, Variant.AUC, 2, 200, 0)


def test_tail_choice_is_deterministic():
    params = ring2()
    assert choose_tail_length(params, 4, 1e-4) == choose_tail_length(params, 4, 1e-4)


def _desk(eps, n_iters, reps, sigma=(1.0, 2.0, 3.0, 1.5, 2.5)):
    g = random_strongly_connected(5, 0.5, 3)
    params = make_params(g, np.full(5, 0.2), 0.5)
    s = np.asarray(sigma, dtype=float)
    model = AffineGaussianModel(np.full((5, 1), 5.0), np.ones((5, 1, 1)), (s**2)[:, None, None])
    traces = [
        run_simulation(SimulationConfig(params, model, Constant(eps), Variant.AUC, n_iters, seed=9, rep=r, x0=5.0))
        for r in range(reps)
    ]
    return empirical_normalized_error(traces, [5.0], eps, burn_in=0.1)


def test_zero_noise_covariance_vanishes():
    est = _desk(0.01, 20_000, 2, sigma=(0.0, 0.0, 0.0, 0.0, 0.0))
    assert np.all(np.abs(est.pooled) < 1e-6)


def test_normalized_variance_scale_invariant():
    a = _desk(0.01, 100_000, 4)
    b = _desk(0.005, 200_000, 4)
    tol = 3 * np.hypot(a.pooled_se, b.pooled_se)
    assert np.all(np.abs(a.pooled - b.pooled) < tol)


def test_empirical_needs_samples():
    g = random_strongly_connected(5, 0.5, 3)
    params = make_params(g, np.full(5, 0.2), 0.5)
    model = gaussian_mean_model(np.full(5, 5.0), np.ones(5))
    tr = run_simulation(SimulationConfig(params, model, Constant(0.01), Variant.AUC, 100, seed=0, record_every=10))
    with pytest.raises(ValueError):
        empirical_normalized_error(tr, [5.0], 0.01)
