"""Limit ODE ``x' = sum_i w_i f_i(x)`` with ``w_i = v_i phi_i d_i``: its
right-hand side, an RK4 integrator and a Newton equilibrium solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gossip import GossipParams, Variant, expected_update_probs, mean_matrix, stationary_vector
from .models import ObservationModel


class EquilibriumNotFound(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OdeSpec:
    weights: np.ndarray
    model: ObservationModel

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.model.n_agents,):
            raise ValueError(f"need {self.model.n_agents} weights, got shape {w.shape}")
        if np.any(~(w > 0)):
            raise ValueError(f"ODE weights must be positive: {w}")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.model.dim


def ode_weights(params: GossipParams, variant: Variant | str, gains=None) -> np.ndarray:
    phi = stationary_vector(mean_matrix(params))
    w = phi * expected_update_probs(params, variant)
    return w if gains is None else w * np.asarray(gains, dtype=float)


def ode_spec(params: GossipParams, model: ObservationModel, variant: Variant | str, gains=None) -> OdeSpec:
    return OdeSpec(ode_weights(params, variant, gains), model)


def ode_rhs(spec: OdeSpec, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(spec.dim)
    for i, w in enumerate(spec.weights):
        out += w * spec.model.mean(i, x)
    return out


def rhs_jacobian(spec: OdeSpec, x, analytic: bool = False) -> np.ndarray:
    """Jacobian of the right-hand side; central differences with step
    ``1e-6 * max(1, |x|)`` unless ``analytic`` and the model provides one."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = spec.dim
    if analytic:
        blocks = [spec.model.jacobian(i, x) for i in range(len(spec.weights))]
        if all(b is not None for b in blocks):
            return sum(w * np.asarray(b) for w, b in zip(spec.weights, blocks))
    h = 1e-6 * max(1.0, float(np.max(np.abs(x))))
    J = np.empty((p, p))
    for c in range(p):
        e = np.zeros(p)
        e[c] = h
        J[:, c] = (ode_rhs(spec, x + e) - ode_rhs(spec, x - e)) / (2 * h)
    return J


def integrate(spec: OdeSpec, x0, T: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4. Returns times ``0, dt, 2dt, ...`` (the last step is
    shortened to land on ``T``) and the matching states."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n_full = int(np.floor(T / dt + 1e-9))
    times = [0.0]
    traj = [x.copy()]
    t = 0.0
    steps = [dt] * n_full
    if T - n_full * dt > 1e-12 * max(1.0, T):
        steps.append(T - n_full * dt)
    f = lambda y: ode_rhs(spec, y)  # noqa: E731
    for h in steps:
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"ODE state became non-finite at t={t:.6g}")
        times.append(t)
        traj.append(x.copy())
    return np.array(times), np.array(traj)


def equilibrium(spec: OdeSpec, x_init, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x_init, dtype=float)).copy()
    r = ode_rhs(spec, x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return x
        J = rhs_jacobian(spec, x)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        norm = np.max(np.abs(r))
        lam = 1.0
        for _ in range(31):
            cand = x + lam * step
            rc = ode_rhs(spec, cand)
            if np.all(np.isfinite(rc)) and np.max(np.abs(rc)) < norm:
                break
            lam *= 0.5
        else:
            break
        x, r = cand, rc
    if np.max(np.abs(r)) < tol:
        return x
    raise EquilibriumNotFound(
        f"Newton did not converge (|rhs| = {np.max(np.abs(r)):.3e}); "
        "integrate the ODE towards the attractor first and polish from there"
    )
