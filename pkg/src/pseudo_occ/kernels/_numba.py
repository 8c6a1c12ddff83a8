"""Numba-compiled dense-layer kernels.

Matrix products go through BLAS (``np.dot``); bias, activation and their
derivatives are fused into single passes around them. Hand-written loops run
in a fixed order with no fastmath, so seeded runs stay bitwise reproducible
on a given machine.
"""

import logging
import math

import numpy as np
from numba import njit

logging.getLogger("numba").setLevel(logging.WARNING)

IDENTITY, TANH, TANH2, SIGMOID, LEAKY_RELU, RELU = range(6)

_opts = dict(cache=True, nogil=True)


@njit(**_opts)
def _act_scalar(z, code, slope):
    if code == IDENTITY:
        return z
    if code == TANH:
        return math.tanh(z)
    if code == TANH2:
        return 2.0 * math.tanh(z)
    if code == SIGMOID:
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    if code == LEAKY_RELU:
        return z if z > 0.0 else slope * z
    # RELU
    return z if z > 0.0 else 0.0


@njit(**_opts)
def _dact_scalar(z, a, code, slope):
    if code == IDENTITY:
        return 1.0
    if code == TANH:
        return 1.0 - a * a
    if code == TANH2:
        t = math.tanh(z)
        return 2.0 * (1.0 - t * t)
    if code == SIGMOID:
        return a * (1.0 - a)
    if code == LEAKY_RELU:
        return 1.0 if z > 0.0 else slope
    return 1.0 if z > 0.0 else 0.0


@njit(**_opts)
def activate(z, code, slope):
    out = np.empty_like(z)
    n, m = z.shape
    for i in range(n):
        for j in range(m):
            out[i, j] = _act_scalar(z[i, j], code, slope)
    return out


@njit(**_opts)
def activation_grad(grad_a, z, a, code, slope):
    out = np.empty_like(z)
    n, m = z.shape
    for i in range(n):
        for j in range(m):
            out[i, j] = grad_a[i, j] * _dact_scalar(z[i, j], a[i, j], code, slope)
    return out


@njit(**_opts)
def dense_forward(x, w, b, code, slope):
    z = np.dot(x, w.T)
    n, m = z.shape
    a = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            z[i, j] += b[j]
            a[i, j] = _act_scalar(z[i, j], code, slope)
    return z, a


@njit(**_opts)
def dense_backward(x, w, z, a, grad_a, code, slope):
    n, m = z.shape
    gz = np.empty((n, m))
    gb = np.zeros(m)
    for i in range(n):
        for j in range(m):
            g = grad_a[i, j] * _dact_scalar(z[i, j], a[i, j], code, slope)
            gz[i, j] = g
            gb[j] += g
    return np.dot(gz.T, x), gb, np.dot(gz, w)


@njit(**_opts)
def _adam_flat(p, g, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(p.size):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * (mhat / (math.sqrt(vhat) + eps))


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """In-place Adam step on one parameter array; ``t`` is the new step count."""
    _adam_flat(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
               lr, beta1, beta2, eps, t)


@njit(**_opts)
def clip_recompute(x, raw, lo, hi):
    n, m = x.shape
    xp = np.empty((n, m))
    delta = np.empty((n, m))
    saturated = np.zeros((n, m), dtype=np.bool_)
    for i in range(n):
        for j in range(m):
            xi = x[i, j]
            s = xi + raw[i, j]
            if s < lo:
                saturated[i, j] = True
                d = lo - xi
                while xi + d < lo:
                    d = np.nextafter(d, np.inf)
            elif s > hi:
                saturated[i, j] = True
                d = hi - xi
                while xi + d > hi:
                    d = np.nextafter(d, -np.inf)
            else:
                d = raw[i, j]
            delta[i, j] = d
            xp[i, j] = xi + d
    return xp, delta, saturated


@njit(**_opts)
def row_sq_norms(a):
    n, m = a.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += a[i, j] * a[i, j]
        out[i] = s
    return out
