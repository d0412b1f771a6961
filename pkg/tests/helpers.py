"""Shared builders for the test suite."""

import numpy as np

from gossipsa.design import design_for_weights
from gossipsa.gossip import Variant, make_params
from gossipsa.graph import build_digraph, random_strongly_connected
from gossipsa.models import gaussian_mean_model


def ring2(p=(0.5, 0.5), gamma=0.5, reception=None):
    g = build_digraph(2, [(1, 2), (2, 1)])
    return make_params(g, p, gamma, reception)


def example1_network(variant=Variant.AUC, n=10, seed=7):
    g = random_strongly_connected(n, 0.3, seed)
    return design_for_weights(g, np.ones(n), np.full(n, 1.0 / n), variant).params


def example1_model(n=10):
    m = np.random.default_rng(1).uniform(3, 7, n)
    s = np.random.default_rng(2).uniform(1, 5, n)
    return gaussian_mean_model(m, s)
