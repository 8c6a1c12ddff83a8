"""Pure-numpy implementations of the dense-layer kernels.

Every function here has a twin with the same signature in ``_numba``.
"""

import numpy as np

IDENTITY, TANH, TANH2, SIGMOID, LEAKY_RELU, RELU = range(6)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(z, code, slope):
    if code == IDENTITY:
        return z.copy()
    if code == TANH:
        return np.tanh(z)
    if code == TANH2:
        return 2.0 * np.tanh(z)
    if code == SIGMOID:
        return _sigmoid(z)
    if code == LEAKY_RELU:
        return np.where(z > 0.0, z, slope * z)
    if code == RELU:
        return np.where(z > 0.0, z, 0.0)
    raise ValueError(f"unknown activation code {code}")


def activation_grad(grad_a, z, a, code, slope):
    """Chain ``grad_a`` through the activation, returning dL/dz."""
    if code == IDENTITY:
        return grad_a.copy()
    if code == TANH:
        return grad_a * (1.0 - a * a)
    if code == TANH2:
        t = np.tanh(z)
        return grad_a * (2.0 * (1.0 - t * t))
    if code == SIGMOID:
        return grad_a * (a * (1.0 - a))
    # derivative at exactly 0 is the negative-side value
    if code == LEAKY_RELU:
        return grad_a * np.where(z > 0.0, 1.0, slope)
    if code == RELU:
        return grad_a * np.where(z > 0.0, 1.0, 0.0)
    raise ValueError(f"unknown activation code {code}")


# overflow surfaces as inf/nan, which callers check for explicitly
_quiet = np.errstate(over="ignore", invalid="ignore")


@_quiet
def dense_forward(x, w, b, code, slope):
    z = x @ w.T + b
    return z, activate(z, code, slope)


@_quiet
def dense_backward(x, w, z, a, grad_a, code, slope):
    gz = activation_grad(grad_a, z, a, code, slope)
    gw = gz.T @ x
    gb = gz.sum(axis=0)
    gx = gz @ w
    return gw, gb, gx


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """In-place Adam step on one parameter array; ``t`` is the new step count."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * (mhat / (np.sqrt(vhat) + eps))


def clip_recompute(x, raw, lo, hi):
    """Return ``(x_pseudo, delta, saturated)`` for noise ``raw`` clipped to [lo, hi].

    Unclipped entries keep ``raw`` exactly. Clipped entries get ``bound - x``,
    nudged an ulp inward if needed so that ``x + delta`` stays in range. In
    both cases ``x_pseudo == x + delta`` bit for bit.
    """
    s = x + raw
    below, above = s < lo, s > hi
    delta = np.where(below, lo - x, np.where(above, hi - x, raw))
    xp = x + delta
    while True:
        over = above & (xp > hi)
        under = below & (xp < lo)
        if not (over.any() or under.any()):
            return xp, delta, below | above
        delta[over] = np.nextafter(delta[over], -np.inf)
        delta[under] = np.nextafter(delta[under], np.inf)
        xp = x + delta


def row_sq_norms(a):
    return np.einsum("ij,ij->i", a, a)
