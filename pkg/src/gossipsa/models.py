"""Per-agent observation models and step-size policies.

Agents are addressed by 0-based position in the per-agent parameter arrays;
node labels ``1..N`` map to positions ``0..N-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class ModelError(ValueError):
    pass


class ObservationModel:
    """Contract for the agents' noisy observations ``F^i(x, xi)``.

    Subclasses provide ``mean`` (the mean field), ``noise_cov`` and
    ``sample``. ``jacobian`` may return ``None`` when no closed form exists;
    callers then fall back to finite differences.
    """

    n_agents: int
    dim: int

    def mean(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def noise_cov(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, i: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, i: int, x: np.ndarray) -> np.ndarray | None:
        return None


def _psd_factor(R: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(R)
        return V * np.sqrt(np.clip(lam, 0.0, None))


@dataclass(frozen=True, eq=False)
class AffineGaussianModel(ObservationModel):
    """``F^i(x) = b_i - Q_i x + noise``, noise ~ N(0, R_i) independent
    across agents and time. Both built-in models are of this form, which lets
    the engine use its compiled path."""

    offset: np.ndarray  # (N, p)
    gain: np.ndarray  # (N, p, p)
    cov: np.ndarray  # (N, p, p)
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.offset, dtype=float))
        Q = np.asarray(self.gain, dtype=float)
        R = np.asarray(self.cov, dtype=float)
        n, p = b.shape
        if Q.shape != (n, p, p) or R.shape != (n, p, p):
            raise ModelError(f"inconsistent shapes: offset {b.shape}, gain {Q.shape}, cov {R.shape}")
        for i in range(n):
            if not np.allclose(R[i], R[i].T) or np.linalg.eigvalsh(R[i]).min() < -1e-12:
                raise ModelError(f"noise covariance of agent {i} is not symmetric PSD")
        L = np.stack([_psd_factor(R[i]) for i in range(n)])
        object.__setattr__(self, "offset", b)
        object.__setattr__(self, "gain", Q)
        object.__setattr__(self, "cov", R)
        object.__setattr__(self, "factor", L)

    @property
    def n_agents(self) -> int:
        return self.offset.shape[0]

    @property
    def dim(self) -> int:
        return self.offset.shape[1]

    def mean(self, i, x):
        return self.offset[i] - self.gain[i] @ np.asarray(x, dtype=float)

    def noise_cov(self, i, x=None):
        return self.cov[i]

    def sample(self, i, x, rng):
        z = rng.standard_normal(self.dim)
        return self.mean(i, x) + self.factor[i] @ z

    def jacobian(self, i, x=None):
        return -self.gain[i]


def gaussian_mean_model(means, std_devs) -> AffineGaussianModel:
    """Scalar estimation of local means: ``F^i(x) = (m_i + sigma_i Z) - x``."""
    m = np.asarray(means, dtype=float).ravel()
    s = np.asarray(std_devs, dtype=float).ravel()
    if m.shape != s.shape:
        raise ModelError("means and std_devs must have the same length")
    if np.any(~(s > 0)):
        raise ModelError(f"standard deviations must be positive: {s}")
    n = m.size
    return AffineGaussianModel(m[:, None], np.ones((n, 1, 1)), (s**2)[:, None, None])


def quadratic_gradient_model(centers, curvatures, noise_cov) -> AffineGaussianModel:
    """Noisy negative gradients of ``0.5 (x - c_i)^T Q_i (x - c_i)``. A single
    curvature or noise covariance is shared by all agents."""
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    n, p = c.shape
    Q = np.broadcast_to(np.asarray(curvatures, dtype=float).reshape(-1, p, p), (n, p, p)).copy()
    R = np.broadcast_to(np.asarray(noise_cov, dtype=float).reshape(-1, p, p), (n, p, p)).copy()
    for i in range(n):
        if not np.allclose(Q[i], Q[i].T):
            raise ModelError(f"curvature of agent {i} is not symmetric")
        try:
            np.linalg.cholesky(Q[i])
        except np.linalg.LinAlgError:
            raise ModelError(f"curvature of agent {i} is not positive definite") from None
    b = np.einsum("nij,nj->ni", Q, c)
    return AffineGaussianModel(b, Q, R)


def estimate_moments(model: ObservationModel, i: int, x, n_samples: int, rng):
    """Monte Carlo mean and covariance of one agent's observation, for
    models without closed forms. Returns ``(mean, mean_se, cov)``."""
    draws = np.array([model.sample(i, x, rng) for _ in range(n_samples)])
    mean = draws.mean(axis=0)
    cov = np.atleast_2d(np.cov(draws, rowvar=False))
    se = np.sqrt(np.diag(cov) / n_samples)
    return mean, se, cov


# --------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class Constant:
    eps: float

    def value(self, n: int, i: int, count: int) -> float:
        return self.eps

    def encode(self, n_agents: int):
        return _kernels.CONSTANT, float(self.eps), np.ones(n_agents)

    def gains(self, n_agents: int) -> np.ndarray:
        return np.ones(n_agents)


@dataclass(frozen=True)
class PerAgentConstant:
    eps: float
    agent_gains: tuple[float, ...]

    def value(self, n, i, count):
        return self.eps * self.agent_gains[i]

    def encode(self, n_agents):
        return _kernels.CONSTANT, float(self.eps), self.gains(n_agents)

    def gains(self, n_agents):
        v = np.asarray(self.agent_gains, dtype=float)
        if v.shape != (n_agents,):
            raise ModelError(f"expected {n_agents} agent gains, got {v.size}")
        return v


@dataclass(frozen=True)
class Tapering:
    """``eps_n = a / max(n, 1)`` on the global tick counter."""

    a: float

    def value(self, n, i, count):
        return self.a / max(n, 1)

    def encode(self, n_agents):
        return _kernels.TAPERING, float(self.a), np.ones(n_agents)

    def gains(self, n_agents):
        return np.ones(n_agents)


@dataclass(frozen=True)
class AsyncTapering:
    """Agent ``i`` uses ``a / Gamma_i`` at its ``Gamma_i``-th own update."""

    a: float

    def value(self, n, i, count):
        if count < 1:
            raise ModelError("asynchronous step size needs an update count >= 1")
        return self.a / count

    def encode(self, n_agents):
        return _kernels.ASYNC_TAPERING, float(self.a), np.ones(n_agents)

    def gains(self, n_agents):
        return np.ones(n_agents)


StepSizePolicy = Constant | PerAgentConstant | Tapering | AsyncTapering


def step_size(policy: StepSizePolicy, global_n: int, i: int, gamma_i: int) -> float:
    value = policy.value(global_n, i, gamma_i)
    if not value > 0:
        raise ModelError(f"non-positive step size {value} from {policy}")
    return value
