"""Compiled inner loops.

Every kernel consumes pre-decoded events (0-based broadcaster array plus an
``(n, N)`` boolean reception mask) so that the Python reference path and the
compiled path see identical event sequences.
"""

import numpy as np
from numba import njit

CONSTANT = 0
TAPERING = 1
ASYNC_TAPERING = 2


@njit(cache=True)
def advance_product(phi, bcast, mask, gamma):
    # phi <- A_n ... A_1 phi, in place
    n_nodes = phi.shape[0]
    for k in range(bcast.shape[0]):
        i = bcast[k]
        for j in range(n_nodes):
            if mask[k, j]:
                g = gamma[i, j]
                for c in range(n_nodes):
                    phi[j, c] = (1.0 - g) * phi[j, c] + g * phi[i, c]


@njit(cache=True)
def advance_product_record(phi, bcast, mask, gamma, out):
    n_nodes = phi.shape[0]
    for k in range(bcast.shape[0]):
        i = bcast[k]
        for j in range(n_nodes):
            if mask[k, j]:
                g = gamma[i, j]
                for c in range(n_nodes):
                    phi[j, c] = (1.0 - g) * phi[j, c] + g * phi[i, c]
        out[k] = phi


@njit(cache=True)
def row_spread(phi):
    total = 0.0
    for c in range(phi.shape[1]):
        lo = phi[0, c]
        hi = phi[0, c]
        for j in range(1, phi.shape[0]):
            v = phi[j, c]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        total += hi - lo
    return total


@njit(cache=True)
def _step(kind, a, gain, n, count):
    if kind == CONSTANT:
        return a * gain
    if kind == TAPERING:
        return gain * a / max(n, 1)
    return gain * a / count


@njit(cache=True)
def _affine_obs(j, x, b, q, lchol, z, ptr, out):
    # out = (b_j - Q_j x) + L_j z[ptr:ptr+p]
    p = x.shape[0]
    for r in range(p):
        m = b[j, r]
        for c in range(p):
            m -= q[j, r, c] * x[c]
        s = 0.0
        for c in range(p):
            s += lchol[j, r, c] * z[ptr + c]
        out[r] = m + s


@njit(cache=True)
def simulate_affine_chunk(
    x, counts, n0, bcast, mask, gamma, b, q, lchol, z, kind, a, gains, auc, bound
):
    """Apply ``len(bcast)`` events in place. Returns the offending event
    offset if a state leaves ``[-bound, bound]``, else -1."""
    n_nodes, p = x.shape
    xhat = np.empty((n_nodes, p))
    obs = np.empty(p)
    y = np.empty(p)
    ptr = 0
    for k in range(bcast.shape[0]):
        n = n0 + k + 1
        i = bcast[k]
        if auc:
            for j in range(n_nodes):
                if j == i or mask[k, j]:
                    counts[j] += 1
                    eps = _step(kind, a, gains[j], n, counts[j])
                    _affine_obs(j, x[j], b, q, lchol, z, ptr, obs)
                    ptr += p
                    for r in range(p):
                        xhat[j, r] = x[j, r] + eps * obs[r]
            for j in range(n_nodes):
                if mask[k, j]:
                    g = gamma[i, j]
                    for r in range(p):
                        x[j, r] = (1.0 - g) * xhat[j, r] + g * xhat[i, r]
            for r in range(p):
                x[i, r] = xhat[i, r]
        else:
            for j in range(n_nodes):
                if mask[k, j]:
                    g = gamma[i, j]
                    for r in range(p):
                        y[r] = (1.0 - g) * x[j, r] + g * x[i, r]
                    counts[j] += 1
                    eps = _step(kind, a, gains[j], n, counts[j])
                    _affine_obs(j, y, b, q, lchol, z, ptr, obs)
                    ptr += p
                    for r in range(p):
                        x[j, r] = y[r] + eps * obs[r]
        for j in range(n_nodes):
            if j == i or mask[k, j]:
                for r in range(p):
                    v = x[j, r]
                    if not (abs(v) <= bound):
                        return k
    return -1
