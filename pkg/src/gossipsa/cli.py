"""Command-line front end.

    gossipsa design   --config exp.yaml
    gossipsa simulate --config exp.yaml --reps 20 --seed 1
    gossipsa rate     --config exp.yaml
    gossipsa analyze  --config exp.yaml

Exit status: 0 success, 1 analysis failure, 2 bad configuration,
3 infeasible design or non-primitive network, 4 simulation divergence,
5 no stationary law (non-Hurwitz Jacobian or no equilibrium).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pydantic
import yaml

from ._rng import derive
from .config import ExperimentConfig, load_config
from .design import DesignInfeasible
from .engine import SimulationDiverged
from .experiments import (
    build_graph,
    build_model,
    build_network,
    criterion_table,
    metadata,
    noise_norms,
    predict,
    run_replications,
    simulation_template,
    state_header,
    state_rows,
    summary_rows,
    write_csv,
    write_json,
)
from .gossip import (
    NotPrimitive,
    Variant,
    decay_estimate,
    expected_update_probs,
    log_linear_fit,
    mean_matrix,
    params_to_dict,
    stationary_vector,
    write_params,
)
from .graph import GraphError, write_graph
from .models import PerAgentConstant
from .ode import EquilibriumNotFound, ode_spec
from .rate import (
    InsufficientTail,
    NotHurwitz,
    build_sde,
    empirical_normalized_error,
    estimate_g,
    stationary_covariance,
)

log = logging.getLogger("gossipsa")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED, EXIT_UNSTABLE = range(6)


def _vec(a, digits: int = 6) -> str:
    return np.array2string(np.asarray(a, dtype=float), precision=digits, max_line_width=100)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(path: Path, meta: list[str], lines: list[str]) -> None:
    text = "".join(f"# {m}\n" for m in meta) + "\n".join(lines) + "\n"
    path.write_text(text)
    print("\n".join(lines))


def _maybe_model(cfg: ExperimentConfig, n: int):
    return build_model(cfg, n) if cfg.model is not None else None


def _network_and_model(cfg: ExperimentConfig):
    # the model size follows the graph, which the design also needs
    n = build_graph(cfg).n_nodes
    model = _maybe_model(cfg, n)
    return build_network(cfg, model), model


# --------------------------------------------------------------------------
# design


def cmd_design(cfg: ExperimentConfig) -> int:
    if cfg.design is None:
        raise ValueError("design needs a design section")
    net, model = _network_and_model(cfg)
    res = net.design
    params = net.params
    out = _out_dir(cfg)
    meta = metadata(cfg, "design", directive=cfg.design.directive, algorithm=cfg.design.algorithm)

    write_graph(net.graph, out / "graph.txt", header="\n".join(meta))
    write_params(params, out / "params.yaml", header="\n".join(meta))
    pred = predict(params, model)

    lines = [
        f"design: {cfg.design.directive} (algorithm {cfg.design.algorithm}), {net.graph.n_nodes} nodes,"
        f" {len(net.graph.edges)} edges",
        f"clock probabilities p     : {_vec(params.clock_probs)}",
        f"mixing weights gamma_i    : {_vec(_broadcaster_gamma(params))}",
        f"target phi                : {_vec(res.phi_target)}",
        f"achieved phi              : {_vec(res.phi_achieved)}",
        f"max |phi - target|        : {res.error:.3e}",
        f"stationarity residual     : {res.residual:.3e}",
    ]
    if res.weights is not None:
        w = res.weights / res.weights.sum()
        lines.append(f"normalized ODE weights ({res.variant.value}): {_vec(w)}")
    for v in Variant:
        lines.append(f"[{v.value}] update probabilities d : {_vec(pred.d[v])}")
        lines.append(f"[{v.value}] ODE weights phi*d      : {_vec(pred.weights[v])}")
        if v in pred.x_star:
            lines.append(f"[{v.value}] equilibrium x*         : {_vec(pred.x_star[v], 8)}")

    payload = {
        "params": params_to_dict(params),
        "phi_target": res.phi_target,
        "phi_achieved": res.phi_achieved,
        "residual": res.residual,
        "error": res.error,
        "predictions": {
            v.value: {
                "d": pred.d[v],
                "weights": pred.weights[v],
                "x_star": pred.x_star.get(v),
            }
            for v in Variant
        },
    }
    write_json(out / "design.json", payload, meta)
    _write_report(out / "design_report.txt", meta, lines)
    return EXIT_OK


def _broadcaster_gamma(params) -> np.ndarray:
    """Mean mixing weight over each broadcaster's out-edges."""
    A = params.graph.adjacency().astype(bool)
    return np.array([params.gamma[i][A[i]].mean() for i in range(params.n_nodes)])


# --------------------------------------------------------------------------
# simulate


def _gains(cfg: ExperimentConfig, n: int):
    if cfg.step_size is not None and cfg.step_size.kind == "per_agent":
        return PerAgentConstant(cfg.step_size.eps, tuple(cfg.step_size.gains)).gains(n)
    return None


def cmd_simulate(cfg: ExperimentConfig) -> int:
    net, model = _network_and_model(cfg)
    if model is None:
        raise ValueError("simulate needs a model section")
    variant = Variant(cfg.variant)
    pred = predict(net.params, model, _gains(cfg, net.graph.n_nodes))
    x_star = pred.x_star[variant]
    reference = np.asarray(cfg.simulate.reference, dtype=float) if cfg.simulate and cfg.simulate.reference else x_star
    template = simulation_template(cfg, net, model, reference)
    out = _out_dir(cfg)

    traces = run_replications(template, cfg.reps, cfg.workers)
    for tr in traces:
        meta = metadata(cfg, "simulate", replication=tr.rep, reference=_vec(reference, 10))
        tag = f"{cfg.seed}_{tr.rep}"
        if tr.states is not None:
            write_csv(out / f"trace_{tag}.csv", state_header(tr), state_rows(tr), meta)
        write_csv(out / f"summary_{tag}.csv", ["iter", "disagreement", "mse"], summary_rows(tr), meta)

    iters = traces[0].iters
    dis = np.mean([t.disagreement for t in traces], axis=0)
    mse = np.mean([t.mse for t in traces], axis=0)
    meta = metadata(cfg, "simulate", reps=cfg.reps, reference=_vec(reference, 10))
    write_csv(out / "mse.csv", ["iter", "disagreement", "mse"], zip(iters, dis, mse), meta)

    finals = np.array([t.final.X for t in traces])
    tail = iters >= 0.9 * iters[-1]
    lines = [
        f"simulate: {cfg.variant}, {cfg.reps} replication(s) of {cfg.simulate.n_iters} events, seed {cfg.seed}",
        f"ODE equilibrium x*          : {_vec(x_star, 8)}",
        f"reference for MSE           : {_vec(reference, 8)}",
        f"mean final state            : {_vec(finals.mean(axis=(0, 1)), 8)}",
        f"final disagreement (mean)   : {dis[-1]:.6g}",
        f"final MSE (mean)            : {mse[-1]:.6g}",
        f"MSE over last 10% (mean)    : {mse[tail].mean():.6g}",
    ]
    _write_report(out / "simulate_report.txt", meta, lines)
    return EXIT_OK


# --------------------------------------------------------------------------
# rate


def cmd_rate(cfg: ExperimentConfig) -> int:
    net, model = _network_and_model(cfg)
    if model is None:
        raise ValueError("rate needs a model section with noise covariances")
    if cfg.step_size is None or cfg.step_size.kind not in ("constant", "per_agent"):
        raise ValueError("rate analysis needs a constant step size")
    params = net.params
    n = params.n_nodes
    variant = Variant(cfg.variant)
    eps = cfg.step_size.eps
    gains = _gains(cfg, n)
    v = np.ones(n) if gains is None else gains

    spec = ode_spec(params, model, variant, gains)
    pred = predict(params, model, gains)
    x_star = pred.x_star[variant]
    ge = estimate_g(params, variant, cfg.rate.tail_length, cfg.rate.g_reps, derive(cfg.seed, "rate-g"))
    sde = build_sde(spec, model, x_star, ge.g * v**2)
    S = stationary_covariance(sde)
    crit = criterion_table(params, model, variant, x_star)
    r_norms = noise_norms(model, x_star)

    emp = None
    if cfg.rate.simulate and cfg.simulate is not None and cfg.reps > 0:
        template = simulation_template(cfg, net, model, x_star)
        if template.x0 is None:
            template = replace(template, x0=x_star)
        template = replace(template, record_states=True)
        traces = run_replications(template, cfg.reps, cfg.workers)
        emp = empirical_normalized_error(traces, x_star, eps, burn_in=cfg.rate.burn_in)

    out = _out_dir(cfg)
    meta = metadata(
        cfg, "rate", eps=eps, g_reps=cfg.rate.g_reps, tail_length=ge.tail_length, reps=cfg.reps
    )
    rows = zip(
        range(1, n + 1), pred.phi, pred.d[variant], pred.weights[variant], ge.g, ge.se, r_norms, crit["phi_optimal"]
    )
    write_csv(out / "rate.csv", ["node", "phi", "d", "weight", "g", "g_se", "R_norm", "phi_optimal"], rows, meta)

    summary = [("eps", eps), ("tail_length", ge.tail_length), ("decay_bound", ge.decay_bound)]
    p = S.shape[0]
    for a in range(p):
        for b in range(p):
            summary.append((f"J_{a + 1}_{b + 1}", sde.J[a, b]))
    for a in range(p):
        for b in range(p):
            summary.append((f"Q_{a + 1}_{b + 1}", sde.Q[a, b]))
    for a in range(p):
        for b in range(p):
            summary.append((f"S_{a + 1}_{b + 1}", S[a, b]))
    if emp is not None:
        for a in range(p):
            for b in range(p):
                summary.append((f"S_empirical_{a + 1}_{b + 1}", emp.pooled[a, b]))
                summary.append((f"S_empirical_se_{a + 1}_{b + 1}", emp.pooled_se[a, b]))
        summary.append(("empirical_samples", emp.n_samples))
    summary += [
        ("criterion", crit["criterion"]),
        ("criterion_optimal", crit["criterion_optimal"]),
        ("criterion_uniform", crit["criterion_uniform"]),
        ("noise_formula_valid", sde.noise_formula_valid),
    ]
    write_csv(out / "rate_summary.csv", ["quantity", "value"], summary, meta)

    lines = [
        f"rate: {cfg.variant}, eps = {eps:g}, {n} nodes",
        f"equilibrium x*             : {_vec(x_star, 8)}",
        f"Jacobian J                 : {_vec(sde.J)}",
        f"g (Monte Carlo, {ge.reps} reps, tail {ge.tail_length}): {_vec(ge.g)}",
        f"g standard errors          : {_vec(ge.se)}",
        f"driving covariance Q       : {_vec(sde.Q)}",
        f"predicted covariance S     : {_vec(S)}",
    ]
    if emp is not None:
        lines += [
            f"empirical covariance       : {_vec(emp.pooled)}",
            f"  batch-means std. error   : {_vec(emp.pooled_se)}",
            f"  samples (nodes x times)  : {emp.n_samples}",
        ]
    lines += [
        f"rate criterion sum phi^2 d^2 |R| : current {crit['criterion']:.6g},"
        f" optimal {crit['criterion_optimal']:.6g}, uniform phi {crit['criterion_uniform']:.6g}",
        f"optimal phi                : {_vec(crit['phi_optimal'])}",
    ]
    if not sde.noise_formula_valid:
        lines.append(
            "warning: agents' own mean fields do not vanish at x*; fluctuations of the consensus"
            " weights add noise that the predicted S omits"
        )
    _write_report(out / "rate_report.txt", meta, lines)
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def cmd_analyze(cfg: ExperimentConfig) -> int:
    net, _ = _network_and_model(cfg)
    params = net.params
    n = params.n_nodes
    A = mean_matrix(params)
    phi = stationary_vector(A)
    row_err = float(np.max(np.abs(A.sum(axis=1) - 1)))
    resid = float(np.max(np.abs(phi @ A - phi)))
    reps = cfg.analyze.reps
    dec = decay_estimate(params, cfg.analyze.max_lag, reps, derive(cfg.seed, "decay"))
    pos = dec.mean > 0
    slope, icept, r2 = log_linear_fit(dec.lags[pos], dec.mean[pos])

    out = _out_dir(cfg)
    meta = metadata(cfg, "analyze", decay_reps=reps, max_lag=cfg.analyze.max_lag)
    write_csv(out / "decay.csv", ["lag", "mean", "se"], zip(dec.lags, dec.mean, dec.se), meta)
    d = {v: expected_update_probs(params, v) for v in Variant}
    rows = zip(range(1, n + 1), phi, d[Variant.AUC], d[Variant.ACU], phi * d[Variant.AUC], phi * d[Variant.ACU])
    write_csv(out / "stationary.csv", ["node", "phi", "d_auc", "d_acu", "w_auc", "w_acu"], rows, meta)

    lines = [
        f"analyze: {n} nodes, {len(net.graph.edges)} edges",
        f"mean matrix max |row sum - 1| : {row_err:.3e}",
        f"stationary vector phi          : {_vec(phi)}",
        f"stationarity residual          : {resid:.3e}",
        f"decay E|Phi(k+m|k) - Phi_k|, m = 0..{cfg.analyze.max_lag}, {reps} reps",
        f"  log-linear fit: slope {slope:.6g}, intercept {icept:.6g}, R^2 {r2:.6f}",
        f"  per-event contraction factor {np.exp(slope):.6g}",
    ]
    _write_report(out / "analyze_report.txt", meta, lines)
    return EXIT_OK


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "rate": cmd_rate, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossipsa", description="Broadcast-gossip stochastic approximation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", "") + " experiment")
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--reps", type=int, help="number of replications (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--workers", type=int, help="parallel replication workers (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed, reps=args.reps, out=args.out, workers=args.workers)
    except (OSError, yaml.YAMLError, pydantic.ValidationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except (DesignInfeasible, NotPrimitive) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NotHurwitz, EquilibriumNotFound) as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except InsufficientTail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (GraphError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
