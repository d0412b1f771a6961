import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipsa.design import (
    algorithm_a,
    algorithm_b,
    clock_system,
    design_for_weights,
    optimal_phi_for_rate,
    rate_criterion,
    weight_system,
)
from gossipsa.gossip import Variant, expected_update_probs, make_params, mean_matrix, stationary_vector
from gossipsa.graph import NotStronglyConnected, build_digraph, random_strongly_connected


def ring():
    return build_digraph(2, [(1, 2), (2, 1)])


def complete(n):
    return build_digraph(n, [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j])


def test_algorithm_a_two_ring():
    res = algorithm_a(ring(), [0.5, 0.5], 0.5)
    np.testing.assert_allclose(res.params.clock_probs, [0.5, 0.5], atol=1e-14)
    res = algorithm_a(ring(), [2 / 3, 1 / 3], 0.5)
    np.testing.assert_allclose(res.params.clock_probs, [2 / 3, 1 / 3], atol=1e-14)
    A = mean_matrix(res.params)
    assert np.max(np.abs(np.array([2 / 3, 1 / 3]) @ A - [2 / 3, 1 / 3])) < 1e-10


def test_algorithm_b_two_ring():
    res = algorithm_b(ring(), [2 / 3, 1 / 3], [0.5, 0.5], scale_max=0.9)
    np.testing.assert_allclose(res.params.gamma[0, 1], 0.9, atol=1e-14)
    np.testing.assert_allclose(res.params.gamma[1, 0], 0.45, atol=1e-14)
    np.testing.assert_allclose(res.phi_achieved, [2 / 3, 1 / 3], atol=1e-12)


def test_algorithm_b_symmetric_case():
    n = 5
    res = algorithm_b(complete(n), np.full(n, 0.2), np.full(n, 0.2), scale_max=0.97)
    adj = complete(n).adjacency() > 0
    np.testing.assert_allclose(res.params.gamma[adj], 0.97, atol=1e-14)


def test_systems_match_complete_graph_matrices():
    """On a complete graph with full reception the stationarity systems are
    the classical weighted-Laplacian forms with the broadcaster weight as
    coefficient."""
    n = 4
    rng = np.random.default_rng(0)
    g = complete(n)
    phi = rng.dirichlet(np.ones(n))
    gam = rng.uniform(0.1, 0.9, (n, n)) * (g.adjacency() > 0)
    p = rng.dirichlet(np.ones(n))
    LA = np.empty((n, n))
    LB = np.empty((n, n))
    for k, i in itertools.product(range(n), range(n)):
        if k == i:
            LA[k, k] = sum(phi[j] * gam[k, j] for j in range(n) if j != k)
            LB[k, k] = p[k] * sum(phi[j] for j in range(n) if j != k)
        else:
            LA[k, i] = -phi[k] * gam[i, k]
            LB[k, i] = -p[i] * phi[k]
    ones = np.ones((n, n)) * (g.adjacency() > 0)
    np.testing.assert_allclose(clock_system(g, phi, gam, ones), LA, atol=1e-15)
    np.testing.assert_allclose(weight_system(g, phi, p, ones), LB, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10_000), st.sampled_from(["A", "B"]))
def test_round_trip(n, seed, algorithm):
    rng = np.random.default_rng(seed)
    g = random_strongly_connected(n, 0.35, seed)
    phi = rng.dirichlet(np.full(n, 2.0))
    phi = np.clip(phi, 1e-3, None)
    phi /= phi.sum()
    rec = {e: rng.uniform(0.3, 1.0) for e in g.edges}
    if algorithm == "A":
        res = algorithm_a(g, phi, 0.5, rec)
        assert abs(res.params.clock_probs.sum() - 1) < 1e-14
    else:
        res = algorithm_b(g, phi, np.full(n, 1 / n), rec)
        assert res.params.gamma.max() == pytest.approx(0.99)
    achieved = stationary_vector(mean_matrix(res.params))
    assert np.max(np.abs(achieved - phi)) < 1e-8
    assert res.residual < 1e-10


def test_invalid_targets():
    with pytest.raises(ValueError):
        algorithm_a(ring(), [1.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        algorithm_b(ring(), [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError):
        algorithm_b(ring(), [0.5, 0.5], [0.5, 0.5], scale_max=1.0)
    with pytest.raises(NotStronglyConnected):
        algorithm_b(build_digraph(3, [(1, 2), (2, 3)]), np.full(3, 1 / 3), np.full(3, 1 / 3))


def test_equal_weights_phi_inverse_to_d():
    g = random_strongly_connected(8, 0.3, 2)
    p = np.full(8, 1 / 8)
    for v in Variant:
        res = design_for_weights(g, np.ones(8), p, v)
        d = expected_update_probs(make_params(g, p, 0.5), v)
        np.testing.assert_allclose(res.phi_target, (1 / d) / np.sum(1 / d), atol=1e-14)
        np.testing.assert_allclose(res.weights / res.weights.sum(), np.full(8, 1 / 8), atol=1e-8)
        assert res.params.gamma.max() == pytest.approx(0.99)


def test_two_ring_acu_equal_weights():
    res = design_for_weights(ring(), [1, 1], [0.5, 0.5], Variant.ACU)
    np.testing.assert_allclose(res.phi_target, [0.5, 0.5])


def test_target_weights_forward_verified():
    g = random_strongly_connected(6, 0.4, 8)
    w = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
    res = design_for_weights(g, w, np.full(6, 1 / 6), Variant.AUC)
    phi = stationary_vector(mean_matrix(res.params))
    achieved = phi * expected_update_probs(res.params, Variant.AUC)
    np.testing.assert_allclose(achieved / achieved.sum(), w / w.sum(), atol=1e-8)


def test_optimal_phi_example():
    np.testing.assert_allclose(optimal_phi_for_rate([1, 1], [1, 4]), [0.8, 0.2])
    np.testing.assert_allclose(optimal_phi_for_rate(np.full(4, 0.3), np.full(4, 2.0)), np.full(4, 0.25))


def test_optimal_phi_beats_simplex_grid():
    grid = np.linspace(0, 1, 10_001)
    crit = [rate_criterion([a, 1 - a], [1, 1], [1, 4]) for a in grid]
    assert grid[int(np.argmin(crit))] == pytest.approx(0.8, abs=1e-4)

    rng = np.random.default_rng(1)
    d = rng.uniform(0.2, 1, 3)
    r = rng.uniform(0.5, 5, 3)
    best = optimal_phi_for_rate(d, r)
    step = 1e-3
    a, b = np.meshgrid(np.arange(0, 1 + step, step), np.arange(0, 1 + step, step))
    ok = a + b <= 1
    pts = np.stack([a[ok], b[ok], 1 - a[ok] - b[ok]], axis=1)
    vals = (pts**2 * d**2 * r).sum(axis=1)
    assert rate_criterion(best, d, r) <= vals.min() + 1e-12
    assert np.max(np.abs(pts[np.argmin(vals)] - best)) < 2 * step


def test_optimal_phi_rejects_nonpositive():
    with pytest.raises(ValueError):
        optimal_phi_for_rate([1, 0], [1, 1])
