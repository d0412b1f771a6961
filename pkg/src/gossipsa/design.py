"""Off-line network design.

The stationarity condition ``phi A_bar = phi`` reads, for every node ``k``::

    p_k * sum_{j in out(k)} phi_j r_kj g_kj  =  phi_k * sum_{i in in(k)} p_i r_ik g_ik

with ``r`` the reception probabilities and ``g`` the mixing weights. It is
linear in the clock probabilities ``p`` for fixed ``g`` (``algorithm_a``) and
linear in broadcaster-indexed weights ``g_i`` for fixed ``p``
(``algorithm_b``). Both systems have zero column sums and rank N-1 on a
strongly connected graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gossip import (
    GossipParams,
    Variant,
    _edge_array,
    expected_update_probs,
    make_params,
    mean_matrix,
    stationary_vector,
)
from .graph import Digraph, require_strongly_connected


class DesignInfeasible(ValueError):
    """The design system has no admissible solution; ``nodes`` lists the
    1-based labels whose entries violate the constraints."""

    def __init__(self, message: str, nodes=(), values=None):
        self.nodes = tuple(int(v) for v in nodes)
        self.values = None if values is None else np.asarray(values)
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class DesignResult:
    params: GossipParams
    phi_target: np.ndarray
    phi_achieved: np.ndarray
    residual: float
    weights: np.ndarray | None = None
    variant: Variant | None = None

    @property
    def error(self) -> float:
        return float(np.max(np.abs(self.phi_achieved - self.phi_target)))


def _check_target(phi, n: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (n,):
        raise ValueError(f"target must have length {n}, got shape {phi.shape}")
    if np.any(~(phi > 0)) or abs(phi.sum() - 1.0) > 1e-12:
        raise ValueError(f"target must be a strictly positive probability vector: {phi}")
    return phi


def _verify(params: GossipParams, phi: np.ndarray, tol: float, **extra) -> DesignResult:
    A = mean_matrix(params)
    achieved = stationary_vector(A)
    residual = float(np.max(np.abs(phi @ A - phi)))
    err = np.max(np.abs(achieved - phi))
    if err > tol:
        raise DesignInfeasible(f"design verification failed: |phi_achieved - phi| = {err:.3e}")
    return DesignResult(params, phi, achieved, residual, **extra)


def clock_system(g: Digraph, phi, gamma: np.ndarray, reception: np.ndarray) -> np.ndarray:
    """Matrix ``M`` with ``M p = 0`` iff ``phi`` is stationary (p unknown)."""
    c = reception * gamma  # c[i, j] on edge (i, j)
    M = -(phi[:, None] * c.T)  # M[k, i] = -phi_k c_ik
    M[np.diag_indices_from(M)] = c @ phi  # sum_j c_kj phi_j
    return M


def weight_system(g: Digraph, phi, clock_probs: np.ndarray, reception: np.ndarray) -> np.ndarray:
    """Matrix ``M`` with ``M gamma = 0`` iff ``phi`` is stationary, for
    broadcaster-indexed weights ``gamma_i``."""
    c = clock_probs[:, None] * reception  # p_i r_ij
    M = -(phi[:, None] * c.T)
    M[np.diag_indices_from(M)] = c @ phi
    return M


def _rank(M: np.ndarray) -> int:
    _, R, _ = scipy.linalg.qr(M, pivoting=True)
    diag = np.abs(np.diag(R))
    return int(np.sum(diag > 1e-10 * max(np.linalg.norm(M), 1e-300)))


def algorithm_a(
    g: Digraph, phi_target, mixing_weights, reception_probs=None, tol: float = 1e-8
) -> DesignResult:
    """Clock probabilities that make ``phi_target`` the stationary vector for
    fixed mixing weights."""
    require_strongly_connected(g)
    n = g.n_nodes
    phi = _check_target(phi_target, n)
    gamma = _edge_array(g, mixing_weights, "mixing weight", None)
    rec = _edge_array(g, reception_probs, "reception probability", 1.0)
    M = clock_system(g, phi, gamma, rec)
    if n > 1 and _rank(M) != n - 1:
        raise DesignInfeasible(f"clock system has rank {_rank(M)}, expected {n - 1}")
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    p = np.linalg.solve(M, rhs)
    bad = np.flatnonzero(~((p > 0) & (p < 1))) if n > 1 else np.flatnonzero(p <= 0)
    if bad.size:
        raise DesignInfeasible(
            f"clock probabilities outside (0, 1) at nodes {list(bad + 1)}: {p[bad]}", bad + 1, p
        )
    p = p / p.sum()
    params = make_params(g, p, gamma, rec)
    return _verify(params, phi, tol)


def algorithm_b(
    g: Digraph,
    phi_target,
    clock_probs,
    reception_probs=None,
    scale_max: float = 0.99,
    tol: float = 1e-8,
) -> DesignResult:
    """Broadcaster-indexed mixing weights that make ``phi_target``
    stationary for fixed clock probabilities; the free scale is fixed by
    ``max_i gamma_i = scale_max``."""
    require_strongly_connected(g)
    if not 0 < scale_max < 1:
        raise ValueError("scale_max must lie in (0, 1)")
    n = g.n_nodes
    phi = _check_target(phi_target, n)
    p = np.asarray(clock_probs, dtype=float)
    rec = _edge_array(g, reception_probs, "reception probability", 1.0)
    M = weight_system(g, phi, p, rec)
    if n == 1:
        gamma = np.array([scale_max])
    else:
        rank = _rank(M)
        if rank != n - 1:
            raise DesignInfeasible(f"weight system has rank {rank}, expected {n - 1}")
        # fix gamma_N = 1 and drop the redundant last equation
        sol = np.linalg.solve(M[:-1, :-1], -M[:-1, -1])
        gamma = np.append(sol, 1.0)
        bad = np.flatnonzero(gamma <= 0)
        if bad.size:
            raise DesignInfeasible(
                f"null vector has non-positive entries at nodes {list(bad + 1)}", bad + 1, gamma
            )
        gamma = scale_max * gamma / gamma.max()
    bad = np.flatnonzero(~((gamma > 0) & (gamma < 1)))
    if bad.size:
        raise DesignInfeasible(f"mixing weights outside (0, 1) at nodes {list(bad + 1)}", bad + 1, gamma)
    params = make_params(g, p, gamma, rec)
    return _verify(params, phi, tol)


def design_for_weights(
    g: Digraph,
    weights,
    clock_probs,
    variant: Variant | str,
    reception_probs=None,
    scale_max: float = 0.99,
) -> DesignResult:
    """Mixing weights giving ODE weights ``phi_i d_i`` proportional to
    ``weights``: target ``phi_k ~ w_k / d_k`` and run ``algorithm_b``."""
    variant = Variant(variant)
    w = np.asarray(weights, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError(f"weights must be positive: {w}")
    rec = _edge_array(g, reception_probs, "reception probability", 1.0)
    probe = make_params(g, clock_probs, 0.5, rec)
    d = expected_update_probs(probe, variant)
    if np.any(d <= 0):
        raise DesignInfeasible("some node never updates", np.flatnonzero(d <= 0) + 1, d)
    phi = (w / d) / np.sum(w / d)
    res = algorithm_b(g, phi, clock_probs, rec, scale_max)
    achieved = res.phi_achieved * expected_update_probs(res.params, variant)
    return DesignResult(res.params, phi, res.phi_achieved, res.residual, achieved, variant)


def rate_criterion(phi, d, r_norms) -> float:
    """``sum_i phi_i^2 d_i^2 |R_i|``, the proxy for the driving noise."""
    phi, d, r = (np.asarray(v, dtype=float) for v in (phi, d, r_norms))
    return float(np.sum(phi**2 * d**2 * r))


def optimal_phi_for_rate(d, r_norms) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    r = np.asarray(r_norms, dtype=float)
    if np.any(~(d > 0)) or np.any(~(r > 0)):
        raise ValueError("update probabilities and noise norms must be positive")
    inv = 1.0 / (d**2 * r)
    return inv / inv.sum()
