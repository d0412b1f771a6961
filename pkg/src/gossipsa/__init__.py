"""Distributed stochastic approximation over broadcast gossip on digraphs."""

__version__ = "0.1.0"
