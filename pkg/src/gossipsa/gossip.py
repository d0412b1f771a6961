"""Broadcast gossip: event sampling, realization and mean matrices,
stationary vector, update probabilities and decay of matrix products.

Mixing weights follow the convention ``gamma[i, j]`` = weight that receiver
``j`` puts on broadcaster ``i``'s state; the receiver keeps ``1 - gamma[i, j]``
of its own state (reported as ``beta``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import _kernels
from ._rng import as_seed, substream
from .graph import (
    Digraph,
    build_digraph,
    require_strongly_connected,
    strongly_connected_components,
)


class Variant(str, enum.Enum):
    AUC = "AUC"
    ACU = "ACU"


class ParamsError(ValueError):
    pass


class NotPrimitive(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GossipParams:
    """Clock probabilities plus per-edge reception probabilities and mixing
    weights, stored densely (zero on non-edges)."""

    graph: Digraph
    clock_probs: np.ndarray
    reception: np.ndarray
    gamma: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def beta(self) -> np.ndarray:
        """Self-weight ``1 - gamma`` on edges, zero elsewhere."""
        return np.where(self.graph.adjacency() > 0, 1.0 - self.gamma, 0.0)

    @property
    def cum_clock(self) -> np.ndarray:
        c = np.cumsum(self.clock_probs)
        c[-1] = 1.0
        return c

    def reception_map(self) -> dict[tuple[int, int], float]:
        return {(i, j): float(self.reception[i - 1, j - 1]) for i, j in self.graph.sorted_edges()}

    def gamma_map(self) -> dict[tuple[int, int], float]:
        return {(i, j): float(self.gamma[i - 1, j - 1]) for i, j in self.graph.sorted_edges()}

    def replace(self, *, clock_probs=None, gamma=None, reception=None) -> "GossipParams":
        return make_params(
            self.graph,
            self.clock_probs if clock_probs is None else clock_probs,
            self.gamma_map() if gamma is None else gamma,
            self.reception_map() if reception is None else reception,
        )


def _edge_array(g: Digraph, spec, name: str, default: float | None) -> np.ndarray:
    """Expand a scalar, per-broadcaster vector, ``{(i, j): v}`` map or dense
    matrix into an N x N array supported on the edge set."""
    n = g.n_nodes
    adj = g.adjacency() > 0
    if spec is None:
        if default is None:
            raise ParamsError(f"{name} must be given explicitly")
        spec = default
    if isinstance(spec, Mapping):
        arr = np.zeros((n, n))
        seen = set()
        for (i, j), v in spec.items():
            i, j = int(i), int(j)
            if (i, j) not in g.edges:
                raise ParamsError(f"{name} given for non-edge ({i}, {j})")
            arr[i - 1, j - 1] = float(v)
            seen.add((i, j))
        missing = g.edges - seen
        if missing:
            if default is None:
                raise ParamsError(f"{name} missing for edges {sorted(missing)}")
            for i, j in missing:
                arr[i - 1, j - 1] = default
        return arr
    a = np.asarray(spec, dtype=float)
    if a.ndim == 0:
        return np.where(adj, float(a), 0.0)
    if a.shape == (n,):
        return np.where(adj, a[:, None], 0.0)
    if a.shape == (n, n):
        if np.any(a[~adj] != 0):
            raise ParamsError(f"{name} has entries on non-edges")
        return a.copy()
    raise ParamsError(f"cannot interpret {name} with shape {a.shape}")


def make_params(
    graph: Digraph,
    clock_probs,
    mixing_weights,
    reception_probs=None,
) -> GossipParams:
    """Validate and assemble gossip parameters.

    ``mixing_weights`` and ``reception_probs`` accept a scalar, a length-N
    per-broadcaster vector, a ``{(i, j): value}`` map with 1-based labels, or
    a dense N x N matrix. Missing reception probabilities default to 1.
    """
    n = graph.n_nodes
    p = np.asarray(clock_probs, dtype=float)
    if p.shape != (n,):
        raise ParamsError(f"clock_probs must have length {n}, got shape {p.shape}")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ParamsError(f"clock probabilities must be positive: {p}")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ParamsError(f"clock probabilities sum to {p.sum()!r}, not 1")
    gamma = _edge_array(graph, mixing_weights, "mixing weight", None)
    rec = _edge_array(graph, reception_probs, "reception probability", 1.0)
    adj = graph.adjacency() > 0
    bad = adj & ~((gamma > 0) & (gamma < 1))
    if bad.any():
        i, j = np.argwhere(bad)[0] + 1
        raise ParamsError(f"mixing weight on ({i}, {j}) must lie in (0, 1): {gamma[i-1, j-1]}")
    bad = adj & ~((rec > 0) & (rec <= 1))
    if bad.any():
        i, j = np.argwhere(bad)[0] + 1
        raise ParamsError(f"reception probability on ({i}, {j}) must lie in (0, 1]: {rec[i-1, j-1]}")
    return GossipParams(graph, _readonly(p), _readonly(rec), _readonly(gamma))


# --------------------------------------------------------------------------
# events and realizations


@dataclass(frozen=True)
class GossipEvent:
    broadcaster: int
    receivers: frozenset[int]


@dataclass(frozen=True, eq=False)
class Realization:
    A: np.ndarray
    d_auc: np.ndarray
    d_acu: np.ndarray

    def d(self, variant: Variant) -> np.ndarray:
        return self.d_auc if Variant(variant) is Variant.AUC else self.d_acu


def decode_events(params: GossipParams, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map uniforms of shape ``(n, N+1)`` to 0-based broadcasters and an
    ``(n, N)`` reception mask. Column 0 picks the broadcaster; column ``j+1``
    decides whether node ``j`` hears it."""
    n = params.n_nodes
    bcast = np.searchsorted(params.cum_clock, u[:, 0], side="right")
    np.minimum(bcast, n - 1, out=bcast)
    mask = u[:, 1:] < params.reception[bcast]
    return bcast.astype(np.int64), mask


def sample_event_block(params: GossipParams, rng: np.random.Generator, size: int):
    return decode_events(params, rng.random((size, params.n_nodes + 1)))


def sample_event(params: GossipParams, rng: np.random.Generator) -> GossipEvent:
    bcast, mask = sample_event_block(params, rng, 1)
    return GossipEvent(int(bcast[0]) + 1, frozenset(int(j) + 1 for j in np.flatnonzero(mask[0])))


def event_from_mask(bcast: int, mask_row: np.ndarray) -> GossipEvent:
    return GossipEvent(int(bcast) + 1, frozenset(int(j) + 1 for j in np.flatnonzero(mask_row)))


def check_event(params: GossipParams, event: GossipEvent) -> None:
    i = event.broadcaster
    if not 1 <= i <= params.n_nodes:
        raise ParamsError(f"broadcaster {i} out of range")
    stray = set(event.receivers) - set(params.graph.out(i))
    if stray:
        raise ParamsError(f"receivers {sorted(stray)} are not out-neighbors of {i}")


def realization_matrices(params: GossipParams, event: GossipEvent) -> Realization:
    check_event(params, event)
    n = params.n_nodes
    i = event.broadcaster - 1
    A = np.eye(n)
    d_auc = np.zeros(n)
    d_auc[i] = 1.0
    for j1 in event.receivers:
        j = j1 - 1
        g = params.gamma[i, j]
        A[j, j] = 1.0 - g
        A[j, i] = g
        d_auc[j] = 1.0
    d_acu = d_auc.copy()
    d_acu[i] = 0.0
    return Realization(A, d_auc, d_acu)


# --------------------------------------------------------------------------
# mean behaviour


def mean_matrix(params: GossipParams) -> np.ndarray:
    """Closed-form E{A_n}; each row depends only on its own reception
    indicator, so expectation is taken row-wise per broadcaster."""
    w = params.clock_probs[:, None] * params.reception * params.gamma  # w[i, j] for edge (i, j)
    A = w.T.copy()  # A[j, i] = p_i p_ij gamma_ij
    A[np.diag_indices_from(A)] = 1.0 - w.sum(axis=0)
    return A


def _check_primitive(A: np.ndarray) -> None:
    n = A.shape[0]
    if np.any(np.diag(A) <= 0):
        raise NotPrimitive("matrix has a non-positive diagonal entry")
    pos = (A > 0) & ~np.eye(n, dtype=bool)
    out = [tuple(np.flatnonzero(pos[r])) for r in range(n)]
    if len(strongly_connected_components(n, out)) != 1:
        raise NotPrimitive("positive-entry pattern is not strongly connected")


def stationary_vector(A_bar: np.ndarray) -> np.ndarray:
    """Left Perron vector of a primitive row-stochastic matrix, normalized to
    sum one."""
    A = np.asarray(A_bar, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.any(A < 0) or np.max(np.abs(A.sum(axis=1) - 1.0)) > 1e-10:
        raise ValueError("matrix is not row-stochastic")
    _check_primitive(A)
    M = A.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    phi = np.linalg.solve(M, rhs)
    resid = np.max(np.abs(phi @ A - phi))
    if resid >= 1e-10 or np.any(phi <= 0):
        raise NotPrimitive(f"stationary solve failed (residual {resid:.3e}, min {phi.min():.3e})")
    return phi


def expected_update_probs(params: GossipParams, variant: Variant | str) -> np.ndarray:
    """Per-tick probability that each node takes a stochastic-approximation
    step: receptions only for ACU, receptions plus own broadcasts for AUC."""
    variant = Variant(variant)
    d = (params.clock_probs[:, None] * params.reception).sum(axis=0)
    if variant is Variant.AUC:
        d = d + params.clock_probs
        if np.any(d > 1.0 + 1e-12):
            raise ParamsError(f"AUC update probabilities exceed 1: {d}")
    return d


# --------------------------------------------------------------------------
# decay of products


@dataclass(frozen=True)
class DecayEstimate:
    lags: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    tail_lengths: np.ndarray


def decay_estimate(
    params: GossipParams,
    max_lag: int,
    reps: int,
    rng,
    tol: float = 1e-13,
    max_tail: int = 1_000_000,
    chunk: int = 256,
) -> DecayEstimate:
    """Monte Carlo estimate of E|Phi(k+m|k) - Phi_k|, m = 0..max_lag.

    Each replication draws one product path; the path is continued past
    ``max_lag`` until its rows agree within ``tol`` and that final matrix
    stands in for the limit.
    """
    require_strongly_connected(params.graph)
    seed = as_seed(rng)
    n = params.n_nodes
    gamma = np.ascontiguousarray(params.gamma)
    dev = np.empty((reps, max_lag + 1))
    tails = np.empty(reps, dtype=np.int64)
    snaps = np.empty((max_lag + 1, n, n))
    for r in range(reps):
        gen = substream(seed, r)
        phi = np.eye(n)
        bcast, mask = sample_event_block(params, gen, max_lag + 1)
        _kernels.advance_product_record(phi, bcast, mask, gamma, snaps)
        extra = 0
        while _kernels.row_spread(phi) >= tol:
            if extra >= max_tail:
                raise RuntimeError(f"product did not reach consensus within {max_tail} events")
            bcast, mask = sample_event_block(params, gen, chunk)
            _kernels.advance_product(phi, bcast, mask, gamma)
            extra += chunk
        tails[r] = extra
        dev[r] = np.abs(snaps - phi).sum(axis=2).max(axis=1)
    se = dev.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(max_lag + 1)
    return DecayEstimate(np.arange(max_lag + 1), dev.mean(axis=0), se, tails)


def log_linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares fit of ``log y = a + b x``; returns ``(b, a, r2)``."""
    x = np.asarray(x, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    b, a = np.polyfit(x, ly, 1)
    resid = ly - (a + b * x)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(b), float(a), float(r2)


# --------------------------------------------------------------------------
# params file


def params_to_dict(params: GossipParams) -> dict:
    fmt = lambda m: {f"{i} {j}": v for (i, j), v in m.items()}  # noqa: E731
    return {
        "n_nodes": params.n_nodes,
        "clock_probs": [float(v) for v in params.clock_probs],
        "reception_probs": fmt(params.reception_map()),
        "mixing_weights": fmt(params.gamma_map()),
    }


def params_from_dict(data: dict, graph: Digraph | None = None) -> GossipParams:
    allowed = {"n_nodes", "edges", "clock_probs", "reception_probs", "mixing_weights"}
    unknown = set(data) - allowed
    if unknown:
        raise ParamsError(f"unknown keys in gossip params: {sorted(unknown)}")
    if "mixing_weights" not in data:
        raise ParamsError("mixing_weights section is required")

    def parse(section):
        out = {}
        for key, v in (section or {}).items():
            parts = str(key).replace(",", " ").split()
            if len(parts) != 2:
                raise ParamsError(f"bad edge key {key!r}; expected 'i j'")
            out[(int(parts[0]), int(parts[1]))] = float(v)
        return out

    gamma = parse(data["mixing_weights"])
    rec = parse(data.get("reception_probs"))
    if graph is None:
        if "edges" in data:
            edges = [tuple(e) for e in data["edges"]]
        else:
            edges = list(gamma)
        graph = build_digraph(int(data["n_nodes"]), edges)
    return make_params(graph, data["clock_probs"], gamma, rec)


def write_params(params: GossipParams, path: str | Path, header: str | None = None) -> None:
    text = yaml.safe_dump(params_to_dict(params), sort_keys=False)
    if header:
        text = "".join(f"# {h}\n" for h in header.splitlines()) + text
    Path(path).write_text(text)


def read_params(path: str | Path, graph: Digraph | None = None) -> GossipParams:
    return params_from_dict(yaml.safe_load(Path(path).read_text()), graph)
