"""Simulation of the update-convexify (AUC) and convexify-update (ACU)
broadcast-gossip stochastic approximation schemes.

``auc_event_step``/``acu_event_step`` are the per-agent reference updates.
``matrix_form_step`` evaluates the same tick through the network-level
recursion ``X+ = A X + eps C F(Y)`` and can cross-check itself against the
per-agent update. ``run_simulation`` drives whole runs; affine Gaussian
models go through a compiled loop that consumes the random streams in the
same order as the reference path.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import EVENTS, NOISE, substream
from .gossip import (
    GossipEvent,
    GossipParams,
    Variant,
    check_event,
    event_from_mask,
    realization_matrices,
    sample_event_block,
)
from .graph import require_strongly_connected
from .models import AffineGaussianModel, ObservationModel, StepSizePolicy, step_size


class SimulationDiverged(RuntimeError):
    def __init__(self, iteration: int, node: int, value: float, bound: float):
        self.iteration = iteration
        self.node = node
        super().__init__(
            f"state of node {node} reached {value:.6g} at iteration {iteration} "
            f"(bound {bound:g}); reduce the step size"
        )


class InternalConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NetworkState:
    X: np.ndarray
    n: int = 0
    update_counts: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        counts = (
            np.zeros(X.shape[0], dtype=np.int64)
            if self.update_counts is None
            else np.array(self.update_counts, dtype=np.int64)
        )
        object.__setattr__(self, "update_counts", counts)


def auc_event_step(state, event, params, model, policy, rng) -> NetworkState:
    check_event(params, event)
    i = event.broadcaster - 1
    receivers = sorted(j - 1 for j in event.receivers)
    X = state.X.copy()
    counts = state.update_counts.copy()
    n = state.n + 1
    xhat = {}
    for j in sorted(receivers + [i]):
        counts[j] += 1
        eps = step_size(policy, n, j, counts[j])
        xhat[j] = X[j] + eps * model.sample(j, X[j], rng)
    for j in receivers:
        g = params.gamma[i, j]
        X[j] = (1.0 - g) * xhat[j] + g * xhat[i]
    X[i] = xhat[i]
    return NetworkState(X, n, counts)


def acu_event_step(state, event, params, model, policy, rng) -> NetworkState:
    check_event(params, event)
    i = event.broadcaster - 1
    X = state.X.copy()
    counts = state.update_counts.copy()
    n = state.n + 1
    for j in sorted(r - 1 for r in event.receivers):
        g = params.gamma[i, j]
        y = (1.0 - g) * X[j] + g * X[i]
        counts[j] += 1
        eps = step_size(policy, n, j, counts[j])
        X[j] = y + eps * model.sample(j, y, rng)
    return NetworkState(X, n, counts)


def event_step(variant, state, event, params, model, policy, rng) -> NetworkState:
    if Variant(variant) is Variant.AUC:
        return auc_event_step(state, event, params, model, policy, rng)
    return acu_event_step(state, event, params, model, policy, rng)


def matrix_form_step(
    state: NetworkState,
    event: GossipEvent,
    params: GossipParams,
    model: ObservationModel,
    policy: StepSizePolicy,
    variant: Variant | str,
    rng: np.random.Generator,
    check: bool = False,
    tol: float = 1e-12,
) -> NetworkState:
    """One tick through ``X+ = A X + eps C F(Y)``.

    With ``check=True`` the per-agent step is replayed on a copy of ``rng``
    and any entry differing by more than ``tol`` raises
    ``InternalConsistencyError``.
    """
    variant = Variant(variant)
    replay = copy.deepcopy(rng) if check else None
    real = realization_matrices(params, event)
    A = real.A
    d = real.d(variant)
    X = state.X
    n = state.n + 1
    counts = state.update_counts + d.astype(np.int64)
    eps = np.zeros(len(d))
    for j in np.flatnonzero(d):
        eps[j] = step_size(policy, n, j, counts[j])
    Y = X if variant is Variant.AUC else A @ X
    F = np.zeros_like(X)
    for j in np.flatnonzero(d):
        F[j] = model.sample(j, Y[j], rng)
    G = (d * eps)[:, None] * F  # D eps F without forming diag(d)
    X_next = A @ X + (A @ G if variant is Variant.AUC else G)
    out = NetworkState(X_next, n, counts)
    if check:
        ref = event_step(variant, state, event, params, model, policy, replay)
        err = np.max(np.abs(ref.X - X_next)) if X.size else 0.0
        if err > tol or not np.array_equal(ref.update_counts, counts):
            raise InternalConsistencyError(
                f"matrix-form and per-agent {variant.value} steps disagree by {err:.3e}"
            )
    return out


# --------------------------------------------------------------------------
# traces


def disagreement(X: np.ndarray) -> float:
    return float(np.max(np.abs(X - X.mean(axis=0)))) if X.size else 0.0


def mean_square_error(X: np.ndarray, reference) -> float:
    if reference is None:
        return math.nan
    return float(np.mean(np.sum((X - np.asarray(reference, dtype=float)) ** 2, axis=1)))


@dataclass
class Trace:
    iters: np.ndarray
    disagreement: np.ndarray
    mse: np.ndarray
    states: np.ndarray | None
    final: NetworkState
    seed: int
    rep: int
    variant: Variant
    reference: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.iters) <= 0):
            raise ValueError("trace iterations must be strictly increasing")


@dataclass
class SimulationConfig:
    params: GossipParams
    model: ObservationModel
    policy: StepSizePolicy
    variant: Variant | str
    n_iters: int
    seed: int
    rep: int = 0
    x0: np.ndarray | None = None
    record_every: int | None = None
    record_states: bool = True
    reference: np.ndarray | None = None
    bound: float = 1e9
    engine: str = "auto"
    chunk: int = 1 << 15

    def sample_points(self) -> np.ndarray:
        every = self.record_every or max(1, math.ceil(self.n_iters / 2000))
        pts = np.arange(0, self.n_iters + 1, every, dtype=np.int64)
        if pts[-1] != self.n_iters:
            pts = np.append(pts, self.n_iters)
        return pts


def _initial_state(cfg: SimulationConfig) -> NetworkState:
    n, p = cfg.params.n_nodes, cfg.model.dim
    if cfg.x0 is None:
        return NetworkState(np.zeros((n, p)))
    x0 = np.asarray(cfg.x0, dtype=float)
    if x0.ndim == 0:
        x0 = np.full((n, p), float(x0))
    if x0.ndim == 1 and p == 1 and x0.size == n:
        x0 = x0[:, None]
    elif x0.ndim == 1 and x0.size == p:
        # one point shared by every node
        x0 = np.tile(x0, (n, 1))
    if x0.shape != (n, p):
        raise ValueError(f"initial state must have shape {(n, p)}, got {x0.shape}")
    return NetworkState(x0)


def run_simulation(cfg: SimulationConfig) -> Trace:
    """Run ``n_iters`` ticks and record the trace at the configured sample
    points. Fully determined by ``(seed, rep)``."""
    params, model = cfg.params, cfg.model
    variant = Variant(cfg.variant)
    require_strongly_connected(params.graph)
    if model.n_agents != params.n_nodes:
        raise ValueError(f"model has {model.n_agents} agents, graph has {params.n_nodes} nodes")
    if cfg.engine not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown engine {cfg.engine!r}")
    compiled = isinstance(model, AffineGaussianModel) and cfg.engine != "python"
    if cfg.engine == "compiled" and not compiled:
        raise ValueError("compiled engine needs an AffineGaussianModel")

    ev_rng = substream(cfg.seed, cfg.rep, EVENTS)
    noise_rng = substream(cfg.seed, cfg.rep, NOISE)
    state = _initial_state(cfg)
    ref = None if cfg.reference is None else np.asarray(cfg.reference, dtype=float).ravel()
    points = cfg.sample_points()
    K = len(points)
    dis = np.empty(K)
    mse = np.empty(K)
    states = np.empty((K,) + state.X.shape) if cfg.record_states else None

    def record(k, X):
        dis[k] = disagreement(X)
        mse[k] = mean_square_error(X, ref)
        if states is not None:
            states[k] = X

    record(0, state.X)
    X = state.X.copy()
    counts = state.update_counts.copy()
    n = 0
    p = model.dim
    gamma = np.ascontiguousarray(params.gamma)
    if compiled:
        kind, a, gains = cfg.policy.encode(params.n_nodes)
    for k in range(1, K):
        while n < points[k]:
            m = int(min(points[k] - n, cfg.chunk))
            bcast, mask = sample_event_block(params, ev_rng, m)
            if compiled:
                n_draws = int(mask.sum()) + (m if variant is Variant.AUC else 0)
                z = noise_rng.standard_normal(n_draws * p)
                bad = _kernels.simulate_affine_chunk(
                    X, counts, n, bcast, mask, gamma, model.offset, model.gain,
                    model.factor, z, kind, a, gains, variant is Variant.AUC, float(cfg.bound),
                )
                if bad >= 0:
                    j = int(np.argmax(np.max(np.abs(np.nan_to_num(X, nan=np.inf)), axis=1)))
                    raise SimulationDiverged(n + bad + 1, j + 1, float(np.abs(X[j]).max()), cfg.bound)
            else:
                st = NetworkState(X, n, counts)
                for e in range(m):
                    ev = event_from_mask(bcast[e], mask[e])
                    st = event_step(variant, st, ev, params, model, cfg.policy, noise_rng)
                    if not np.all(np.abs(st.X) <= cfg.bound):
                        j = int(np.argmax(np.max(np.abs(np.nan_to_num(st.X, nan=np.inf)), axis=1)))
                        raise SimulationDiverged(st.n, j + 1, float(np.abs(st.X[j]).max()), cfg.bound)
                X, counts = st.X, st.update_counts
            n += m
        record(k, X)
    return Trace(
        iters=points,
        disagreement=dis,
        mse=mse,
        states=states,
        final=NetworkState(X, n, counts),
        seed=int(cfg.seed),
        rep=int(cfg.rep),
        variant=variant,
        reference=ref,
    )
