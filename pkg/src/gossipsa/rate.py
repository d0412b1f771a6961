"""Asymptotic normalized error ``U = (X - x*) / sqrt(eps)``.

Near the equilibrium ``U`` follows ``du = J u dt + dw`` with ``J`` the
Jacobian of the ODE right-hand side and ``cov w(1) = sum_i g_i R_i``, where
``g_i = E{phi_i(k)^2 d_i(k)^2}`` couples the random consensus weights with the
update indicators. This module estimates ``g``, assembles the SDE, solves
the stationary Lyapunov equation and measures the same covariance from
simulation traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from ._rng import as_seed, substream
from .engine import Trace
from .gossip import GossipParams, Variant, sample_event_block
from .graph import require_strongly_connected
from .models import ObservationModel
from .ode import OdeSpec, ode_rhs, rhs_jacobian


class InsufficientTail(ValueError):
    pass


class NotHurwitz(ValueError):
    pass


@dataclass(frozen=True)
class GEstimate:
    g: np.ndarray
    se: np.ndarray
    tail_length: int
    decay_bound: float
    reps: int


def _g_samples(params: GossipParams, variant: Variant, m: int, reps: int, seed: int):
    n = params.n_nodes
    gamma = np.ascontiguousarray(params.gamma)
    vals = np.empty((reps, n))
    spread = np.empty(reps)
    for r in range(reps):
        rng = substream(seed, r)
        bcast, mask = sample_event_block(params, rng, m + 1)
        i = bcast[0]
        d = mask[0].astype(float)
        phi = np.eye(n)
        if variant is Variant.AUC:
            d[i] = 1.0
            _kernels.advance_product(phi, bcast, mask, gamma)
        else:
            # the ACU noise at tick k enters after A_k, so A_k is not part of the weight
            _kernels.advance_product(phi, bcast[1:], mask[1:], gamma)
        spread[r] = _kernels.row_spread(phi)
        vals[r] = phi[0] ** 2 * d
    return vals, spread


def estimate_g(
    params: GossipParams,
    variant: Variant | str,
    tail_length: int | None,
    reps: int,
    rng,
    max_decay: float = 1e-3,
) -> GEstimate:
    """Monte Carlo ``g_i`` with standard errors.

    ``tail_length`` is the number of ticks multiplied after tick ``k`` to
    approximate the limit weights ``phi(k)``. The mean row spread of the
    truncated products bounds the truncation error in the infinity norm and
    must stay below ``max_decay``. ``tail_length=None`` picks the length
    with ``choose_tail_length``.
    """
    require_strongly_connected(params.graph)
    variant = Variant(variant)
    seed = as_seed(rng)
    if tail_length is None:
        tail_length = choose_tail_length(params, seed, max_decay / 10)
    vals, spread = _g_samples(params, variant, int(tail_length), reps, seed)
    bound = float(spread.mean())
    if bound >= max_decay:
        raise InsufficientTail(
            f"tail length {tail_length} leaves mean row spread {bound:.2e} >= {max_decay:g}"
        )
    se = vals.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.full(params.n_nodes, np.inf)
    return GEstimate(vals.mean(axis=0), se, int(tail_length), bound, reps)


def choose_tail_length(params: GossipParams, seed: int, target: float, pilot_reps: int = 200) -> int:
    n = params.n_nodes
    gamma = np.ascontiguousarray(params.gamma)
    m = 8 * n
    while m < 10_000_000:
        spreads = []
        for r in range(pilot_reps):
            rng = substream(seed, r, 7)
            phi = np.eye(n)
            bcast, mask = sample_event_block(params, rng, m)
            _kernels.advance_product(phi, bcast, mask, gamma)
            spreads.append(_kernels.row_spread(phi))
        if np.mean(spreads) < target:
            return m
        m *= 2
    raise InsufficientTail("products do not reach consensus")


@dataclass(frozen=True, eq=False)
class SdeModel:
    J: np.ndarray
    Q: np.ndarray
    g: np.ndarray
    R: list
    J_analytic: np.ndarray | None = None
    agent_drift: float = 0.0

    @property
    def noise_formula_valid(self) -> bool:
        """The driving covariance ignores the fluctuation of the random
        consensus weights, which is only exact when every agent's own mean
        field vanishes at x*."""
        return self.agent_drift < 1e-8

    @property
    def hurwitz(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.J).real < 0))


def build_sde(spec: OdeSpec, model: ObservationModel, x_star, g, check_tol: float = 1e-8) -> SdeModel:
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    res = np.max(np.abs(ode_rhs(spec, x_star)))
    if res >= check_tol:
        raise ValueError(f"x* is not an equilibrium: |rhs(x*)| = {res:.3e}")
    g = np.asarray(g, dtype=float)
    J = rhs_jacobian(spec, x_star)
    try:
        J_an = rhs_jacobian(spec, x_star, analytic=True)
    except Exception:
        J_an = None
    R = [np.atleast_2d(model.noise_cov(i, x_star)) for i in range(model.n_agents)]
    Q = sum(gi * Ri for gi, Ri in zip(g, R))
    drift = max(float(np.max(np.abs(model.mean(i, x_star)))) for i in range(model.n_agents))
    return SdeModel(J, np.atleast_2d(Q), g, R, J_an, drift)


def solve_lyapunov(J: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``J S + S J^T + Q = 0`` through the Kronecker-vectorized system."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    p = J.shape[0]
    eye = np.eye(p)
    K = np.kron(J, eye) + np.kron(eye, J)
    S = np.linalg.solve(K, -Q.reshape(-1)).reshape(p, p)
    resid = np.max(np.abs(J @ S + S @ J.T + Q))
    if resid > 1e-10 * max(np.max(np.abs(Q)), 1e-300) and np.any(Q):
        raise np.linalg.LinAlgError(f"Lyapunov residual {resid:.3e} too large")
    return S


def stationary_covariance(sde: SdeModel) -> np.ndarray:
    if not sde.hurwitz:
        raise NotHurwitz(f"J has eigenvalues {np.linalg.eigvals(sde.J)}; no stationary law")
    return solve_lyapunov(sde.J, sde.Q)


@dataclass(frozen=True)
class NormalizedErrorEstimate:
    pooled: np.ndarray  # (p, p)
    pooled_se: np.ndarray  # (p, p) batch-means standard error
    per_node: np.ndarray  # (N, p, p)
    n_samples: int


def empirical_normalized_error(
    traces: Trace | Sequence[Trace],
    x_star,
    eps: float,
    burn_in: float = 0.5,
    n_batches: int = 20,
) -> NormalizedErrorEstimate:
    """Sample covariance of ``(X - x*) / sqrt(eps)`` after discarding the
    first ``burn_in`` fraction of each trace, pooled over nodes and traces."""
    if isinstance(traces, Trace):
        traces = [traces]
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    chunks = []
    for tr in traces:
        if tr.states is None:
            raise ValueError("trace has no recorded states")
        keep = tr.iters >= burn_in * tr.iters[-1]
        if burn_in > 0:
            keep &= tr.iters > 0
        chunks.append((tr.states[keep] - x_star) / np.sqrt(eps))
    n_total = sum(len(c) for c in chunks)
    if n_total < 100:
        raise ValueError(f"only {n_total} post-burn-in samples; need at least 100")
    U = np.concatenate(chunks)  # (K, N, p)
    K, N, p = U.shape
    per_node = np.stack([np.atleast_2d(np.cov(U[:, j, :], rowvar=False)) for j in range(N)])
    flat = U.reshape(K * N, p)
    pooled = np.atleast_2d(np.cov(flat, rowvar=False))
    batch_vals = []
    for c in chunks:
        b = max(1, min(n_batches, len(c) // 5))
        for part in np.array_split(c, b):
            if len(part) > 1:
                batch_vals.append(np.atleast_2d(np.cov(part.reshape(-1, p), rowvar=False)))
    batch_vals = np.array(batch_vals)
    se = batch_vals.std(axis=0, ddof=1) / np.sqrt(len(batch_vals)) if len(batch_vals) > 1 else np.full((p, p), np.inf)
    return NormalizedErrorEstimate(pooled, se, per_node, n_total)
