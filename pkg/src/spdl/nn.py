"""Tanh multilayer perceptrons with hand-written backpropagation.

Parameters are flat lists ``[W1, b1, W2, b2, ...]`` with ``W`` of shape
``(n_out, n_in)``. Inputs are batches of row vectors.
"""

import numpy as np


def orthogonal(rng: np.random.Generator, shape, gain: float = 1.0) -> np.ndarray:
    n_out, n_in = shape
    a = rng.standard_normal((max(n_out, n_in), min(n_out, n_in)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_out < n_in:
        q = q.T
    return gain * q[:n_out, :n_in]


def init_mlp(rng: np.random.Generator, sizes, hidden_gain=np.sqrt(2.0), out_gain=1.0):
    params = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else hidden_gain
        params.append(orthogonal(rng, (n_out, n_in), gain))
        params.append(np.zeros(n_out))
    return params


def forward(params, x):
    """Return ``(output, cache)``; tanh on every layer except the last."""
    x = np.atleast_2d(x)
    acts = [x]
    h = x
    n = len(params) // 2
    for i in range(n):
        W, b = params[2 * i], params[2 * i + 1]
        h = h @ W.T + b
        if i < n - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def backward(params, cache, d_out):
    """Gradients of ``sum(d_out * output)`` w.r.t. every parameter."""
    n = len(params) // 2
    grads = [None] * len(params)
    delta = d_out
    for i in reversed(range(n)):
        a_in = cache[i]
        grads[2 * i] = delta.T @ a_in
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[2 * i]) * (1.0 - cache[i] ** 2)
    return grads


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])


def unflatten(flat, like):
    out, i = [], 0
    for a in like:
        out.append(flat[i:i + a.size].reshape(a.shape))
        i += a.size
    return out
