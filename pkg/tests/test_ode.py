import numpy as np
import pytest

from gossipsa.gossip import Variant, expected_update_probs, mean_matrix, stationary_vector
from gossipsa.models import AffineGaussianModel, gaussian_mean_model, quadratic_gradient_model
from gossipsa.ode import (
    EquilibriumNotFound,
    OdeSpec,
    equilibrium,
    integrate,
    ode_rhs,
    ode_spec,
    ode_weights,
    rhs_jacobian,
)

from helpers import example1_model, example1_network


def test_rhs_at_average():
    spec = OdeSpec(np.full(3, 1 / 3), gaussian_mean_model([3, 5, 7], [1, 1, 1]))
    assert ode_rhs(spec, 5.0)[0] == pytest.approx(0.0, abs=1e-15)


def test_rhs_weighted_root():
    spec = OdeSpec(np.array([2.0, 1.0]) / 3, gaussian_mean_model([0, 3], [1, 1]))
    assert ode_rhs(spec, 1.0)[0] == pytest.approx(0.0, abs=1e-15)
    assert equilibrium(spec, 0.0)[0] == pytest.approx(1.0, abs=1e-10)


def test_zero_field():
    model = AffineGaussianModel(np.zeros((2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)))
    spec = OdeSpec(np.ones(2), model)
    np.testing.assert_array_equal(ode_rhs(spec, [3.0, -1.0]), [0.0, 0.0])


def test_weights_follow_phi_and_d():
    params = example1_network(Variant.AUC)
    for v in Variant:
        w = ode_weights(params, v)
        np.testing.assert_allclose(w, stationary_vector(mean_matrix(params)) * expected_update_probs(params, v))
    np.testing.assert_allclose(ode_weights(params, Variant.AUC), np.full(10, ode_weights(params, Variant.AUC)[0]))
    gains = np.linspace(1, 2, 10)
    np.testing.assert_allclose(ode_weights(params, "AUC", gains), ode_weights(params, "AUC") * gains)


def test_equal_weight_design_equilibrium():
    model = example1_model()
    m = model.offset[:, 0]
    for v in Variant:
        x = equilibrium(ode_spec(example1_network(v), model, v), 0.0)
        assert x[0] == pytest.approx(m.mean(), abs=1e-10)


def test_spec_rejects_bad_weights():
    model = gaussian_mean_model([0, 1], [1, 1])
    with pytest.raises(ValueError):
        OdeSpec(np.array([1.0, 0.0]), model)
    with pytest.raises(ValueError):
        OdeSpec(np.ones(3), model)


def test_exponential_oracle():
    w = 0.7
    spec = OdeSpec(np.array([w]), gaussian_mean_model([2.0], [1.0]))
    t, x = integrate(spec, [5.0], 5.0, 1e-3)
    assert t[-1] == pytest.approx(5.0)
    np.testing.assert_allclose(x[:, 0], 2.0 + 3.0 * np.exp(-w * t), atol=1e-8)


def test_equilibrium_is_fixed_point():
    spec = OdeSpec(np.array([0.5, 0.5]), gaussian_mean_model([1.0, 3.0], [1, 1]))
    _, x = integrate(spec, [2.0], 3.0, 0.01)
    assert np.max(np.abs(x - 2.0)) < 1e-12


def test_rk4_fourth_order():
    # logistic field x' = x (1 - x), solution 1 / (1 + 9 e^{-t}) from x0 = 0.1
    class Logistic(AffineGaussianModel):
        def mean(self, i, x):
            return x * (1 - x)

    model = Logistic(np.zeros((1, 1)), np.ones((1, 1, 1)), np.ones((1, 1, 1)))
    spec = OdeSpec(np.ones(1), model)
    exact = 1 / (1 + 9 * np.exp(-2.0))
    errs = [abs(integrate(spec, [0.1], 2.0, dt)[1][-1, 0] - exact) for dt in (0.2, 0.1, 0.05)]
    for a, b in zip(errs, errs[1:]):
        assert 14 < a / b < 18


def test_integrate_short_last_step():
    spec = OdeSpec(np.ones(1), gaussian_mean_model([0.0], [1.0]))
    t, _ = integrate(spec, [1.0], 1.05, 0.1)
    assert t[-1] == pytest.approx(1.05) and len(t) == 12
    with pytest.raises(ValueError):
        integrate(spec, [1.0], 1.0, 0.0)


def test_quadratic_equilibrium_linear_oracle():
    rng = np.random.default_rng(4)
    c = rng.normal(size=(4, 2))
    B = rng.normal(size=(4, 2, 2))
    Q = np.einsum("nij,nkj->nik", B, B) + 0.5 * np.eye(2)
    w = rng.uniform(0.1, 1.0, 4)
    spec = OdeSpec(w, quadratic_gradient_model(c, Q, np.eye(2)))
    x = equilibrium(spec, np.zeros(2))
    direct = np.linalg.solve(np.einsum("n,nij->ij", w, Q), np.einsum("n,nij,nj->i", w, Q, c))
    np.testing.assert_allclose(x, direct, atol=1e-10)
    assert np.max(np.abs(ode_rhs(spec, x))) < 1e-10


def test_weight_scaling_keeps_equilibrium():
    model = example1_model()
    w = np.random.default_rng(0).uniform(0.1, 1, 10)
    a = equilibrium(OdeSpec(w, model), 0.0)
    b = equilibrium(OdeSpec(7.3 * w, model), 0.0)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_jacobian_finite_difference_matches_analytic():
    rng = np.random.default_rng(1)
    model = quadratic_gradient_model(rng.normal(size=(3, 2)), [[2.0, 0.5], [0.5, 1.0]], np.eye(2))
    spec = OdeSpec(np.array([0.2, 0.3, 0.5]), model)
    x = rng.normal(size=2)
    np.testing.assert_allclose(rhs_jacobian(spec, x), rhs_jacobian(spec, x, analytic=True), atol=1e-6)


def test_equilibrium_failure_is_reported():
    class NoRoot(AffineGaussianModel):
        def mean(self, i, x):
            return np.ones_like(x) + 0.0 * x

    spec = OdeSpec(np.ones(1), NoRoot(np.zeros((1, 1)), np.ones((1, 1, 1)), np.ones((1, 1, 1))))
    with pytest.raises(EquilibriumNotFound):
        equilibrium(spec, [0.0])
