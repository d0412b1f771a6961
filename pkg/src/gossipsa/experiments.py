"""Turn an ``ExperimentConfig`` into graphs, parameters, models and runs,
and write the CSV/text artifacts."""

from __future__ import annotations

import datetime as _dt
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, RandomRange
from .design import (
    DesignResult,
    algorithm_a,
    algorithm_b,
    design_for_weights,
    optimal_phi_for_rate,
    rate_criterion,
)
from .engine import SimulationConfig, Trace, run_simulation
from .gossip import (
    GossipParams,
    Variant,
    expected_update_probs,
    make_params,
    mean_matrix,
    read_params,
    stationary_vector,
)
from .graph import Digraph, build_digraph, random_strongly_connected, read_graph, require_strongly_connected
from .models import (
    AsyncTapering,
    Constant,
    ObservationModel,
    PerAgentConstant,
    Tapering,
    gaussian_mean_model,
    quadratic_gradient_model,
)
from .ode import equilibrium, ode_spec


# --------------------------------------------------------------------------
# building blocks


def build_graph(cfg: ExperimentConfig) -> Digraph:
    gs = cfg.graph
    if gs.file is not None:
        g = read_graph(cfg.path(gs.file))
    elif gs.random is not None:
        g = random_strongly_connected(gs.random.n_nodes, gs.random.density, gs.random.seed)
    else:
        g = build_digraph(gs.n_nodes, gs.edges)
    require_strongly_connected(g)
    return g


def _clock_probs(cfg: ExperimentConfig, n: int) -> np.ndarray:
    cp = cfg.gossip.clock_probs
    return np.full(n, 1.0 / n) if cp == "uniform" else np.asarray(cp, dtype=float)


def _values(spec, n: int, name: str) -> np.ndarray:
    if isinstance(spec, RandomRange):
        return np.random.default_rng(spec.seed).uniform(spec.low, spec.high, n)
    a = np.asarray(spec, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    if a.shape != (n,):
        raise ValueError(f"model.{name} must have {n} entries, got {a.size}")
    return a


def build_model(cfg: ExperimentConfig, n: int) -> ObservationModel:
    ms = cfg.model
    if ms is None:
        raise ValueError("config has no model section")
    if ms.kind == "gaussian_mean":
        return gaussian_mean_model(_values(ms.means, n, "means"), _values(ms.std_devs, n, "std_devs"))
    p = ms.dim
    c = np.asarray(ms.centers, dtype=float).reshape(n, p)
    Q = np.asarray(ms.curvatures, dtype=float)
    Q = np.broadcast_to(Q.reshape(-1, p, p), (n, p, p))
    R = np.asarray(ms.noise_cov, dtype=float)
    return quadratic_gradient_model(c, Q, np.broadcast_to(R.reshape(-1, p, p), (n, p, p)))


def build_policy(cfg: ExperimentConfig):
    s = cfg.step_size
    if s is None:
        raise ValueError("config has no step_size section")
    if s.kind == "constant":
        return Constant(s.eps)
    if s.kind == "per_agent":
        return PerAgentConstant(s.eps, tuple(s.gains))
    if s.kind == "tapering":
        return Tapering(s.a)
    return AsyncTapering(s.a)


def noise_norms(model: ObservationModel, x) -> np.ndarray:
    return np.array([np.linalg.norm(np.atleast_2d(model.noise_cov(i, x)), 2) for i in range(model.n_agents)])


def build_design(cfg: ExperimentConfig, g: Digraph, model: ObservationModel | None) -> DesignResult:
    ds = cfg.design
    n = g.n_nodes
    variant = Variant(cfg.variant)
    p = _clock_probs(cfg, n)
    rec = cfg.gossip.reception_prob
    if ds.directive == "equal-weights":
        return design_for_weights(g, np.ones(n), p, variant, rec, ds.scale_max)
    if ds.directive == "target-weights":
        return design_for_weights(g, ds.weights, p, variant, rec, ds.scale_max)
    if ds.directive == "uniform-phi":
        phi = np.full(n, 1.0 / n)
    elif ds.directive == "target-phi":
        phi = np.asarray(ds.phi, dtype=float)
    else:
        if model is None:
            raise ValueError("rate-optimal design needs a model section for the noise covariances")
        if ds.algorithm == "A":
            raise ValueError("rate-optimal design needs fixed clock probabilities (algorithm B)")
        probe = make_params(g, p, 0.5, rec)
        d = expected_update_probs(probe, variant)
        phi = optimal_phi_for_rate(d, noise_norms(model, np.zeros(model.dim)))
    if ds.algorithm == "A":
        return algorithm_a(g, phi, ds.mixing_weight, rec)
    return algorithm_b(g, phi, p, rec, ds.scale_max)


@dataclass
class Network:
    graph: Digraph
    params: GossipParams
    design: DesignResult | None


def build_network(cfg: ExperimentConfig, model: ObservationModel | None = None) -> Network:
    g = build_graph(cfg)
    if cfg.design is not None:
        res = build_design(cfg, g, model)
        return Network(g, res.params, res)
    if cfg.gossip.params_file is not None:
        return Network(g, read_params(cfg.path(cfg.gossip.params_file), g), None)
    if cfg.gossip.mixing_weight is None:
        raise ValueError("config needs a design section, gossip.params_file or gossip.mixing_weight")
    params = make_params(g, _clock_probs(cfg, g.n_nodes), cfg.gossip.mixing_weight, cfg.gossip.reception_prob)
    return Network(g, params, None)


@dataclass
class Prediction:
    phi: np.ndarray
    d: dict
    weights: dict
    x_star: dict


def predict(params: GossipParams, model: ObservationModel | None, gains=None, x_init=None) -> Prediction:
    """Stationary vector, update probabilities, ODE weights and equilibria
    for both variants."""
    phi = stationary_vector(mean_matrix(params))
    d, w, xs = {}, {}, {}
    for v in Variant:
        d[v] = expected_update_probs(params, v)
        w[v] = phi * d[v] * (1.0 if gains is None else np.asarray(gains))
        if model is not None:
            x0 = np.zeros(model.dim) if x_init is None else x_init
            xs[v] = equilibrium(ode_spec(params, model, v, gains), x0)
    return Prediction(phi, d, w, xs)


def simulation_template(cfg: ExperimentConfig, net: Network, model, reference) -> SimulationConfig:
    sim = cfg.simulate
    if sim is None:
        raise ValueError("config has no simulate section")
    return SimulationConfig(
        params=net.params,
        model=model,
        policy=build_policy(cfg),
        variant=cfg.variant,
        n_iters=sim.n_iters,
        seed=cfg.seed,
        x0=None if sim.x0 is None else np.asarray(sim.x0, dtype=float),
        record_every=sim.record_every,
        record_states=sim.record_states,
        reference=reference,
        bound=sim.bound,
    )


def _run_one(args):
    template, rep = args
    return run_simulation(replace(template, rep=rep))


def run_replications(template: SimulationConfig, reps: int, workers: int = 1) -> list[Trace]:
    """Replication ``r`` uses substreams ``(seed, r)``; results come back in
    replication order regardless of scheduling."""
    jobs = [(template, r) for r in range(reps)]
    if workers <= 1 or reps <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


# --------------------------------------------------------------------------
# output


def metadata(cfg: ExperimentConfig, command: str, **extra) -> list[str]:
    lines = [
        f"gossipsa {__version__}",
        f"command: {command}",
        f"config_sha256: {cfg.digest()}",
        f"master_seed: {cfg.seed}",
        f"variant: {cfg.variant}",
    ]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    lines.append(f"created: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    return lines


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, header: list[str], rows, meta: list[str]) -> None:
    buf = io.StringIO()
    for m in meta:
        buf.write(f"# {m}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_csv_body(path: Path) -> str:
    return "".join(l for l in Path(path).read_text().splitlines(True) if not l.startswith("#"))


def state_rows(trace: Trace):
    K, N, p = trace.states.shape
    for k in range(K):
        for j in range(N):
            if p == 1:
                yield (trace.iters[k], j + 1, trace.states[k, j, 0])
            else:
                for c in range(p):
                    yield (trace.iters[k], j + 1, trace.states[k, j, c], c + 1)


def state_header(trace: Trace) -> list[str]:
    return ["iter", "node", "value"] + (["dim"] if trace.states.shape[2] > 1 else [])


def summary_rows(trace: Trace):
    return zip(trace.iters, trace.disagreement, trace.mse)


def write_json(path: Path, payload: dict, meta: list[str]) -> None:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, Variant):
            return o.value
        raise TypeError(type(o))

    Path(path).write_text(json.dumps({"meta": meta, **payload}, indent=2, default=conv) + "\n")


def criterion_table(params: GossipParams, model: ObservationModel, variant: Variant, x) -> dict:
    phi = stationary_vector(mean_matrix(params))
    d = expected_update_probs(params, variant)
    r = noise_norms(model, x)
    opt = optimal_phi_for_rate(d, r)
    return {
        "criterion": rate_criterion(phi, d, r),
        "criterion_optimal": rate_criterion(opt, d, r),
        "criterion_uniform": rate_criterion(np.full(len(d), 1.0 / len(d)), d, r),
        "phi_optimal": opt,
    }
