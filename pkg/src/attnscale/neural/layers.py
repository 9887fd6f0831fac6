"""Layer primitives built on :mod:`attnscale.neural.tensor`.

Parameters live in plain ``dict[str, Tensor]`` maps so checkpoints, optimizers
and gradient checks can treat every network uniformly.
"""

import numpy as np

from . import tensor as T


def xavier_uniform(rng, fan_in, fan_out, shape=None, gain=1.0):
    bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def orthogonal(rng, n, m, gain=1.0):
    a = rng.standard_normal((max(n, m), min(n, m)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n < m:
        q = q.T
    return gain * q[:n, :m]


def param(value, name):
    return T.Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def init_linear(params, rng, prefix, n_in, n_out, gain=1.0):
    params[f"{prefix}.W"] = param(xavier_uniform(rng, n_in, n_out, gain=gain), f"{prefix}.W")
    params[f"{prefix}.b"] = param(np.zeros(n_out), f"{prefix}.b")


def init_lstm(params, rng, prefix, n_in, d):
    """Xavier input weights, per-gate orthogonal recurrent weights, forget bias +1."""
    params[f"{prefix}.W_ih"] = param(xavier_uniform(rng, n_in, 4 * d, shape=(n_in, 4 * d)),
                                     f"{prefix}.W_ih")
    w_hh = np.concatenate([orthogonal(rng, d, d) for _ in range(4)], axis=1)
    params[f"{prefix}.W_hh"] = param(w_hh, f"{prefix}.W_hh")
    b = np.zeros(4 * d)
    b[d:2 * d] = 1.0
    params[f"{prefix}.b"] = param(b, f"{prefix}.b")


def linear(params, prefix, x):
    return T.matmul(x, params[f"{prefix}.W"]) + params[f"{prefix}.b"]


def lstm_cell(params, prefix, x, h, c):
    """One LSTM step for a batch; returns ``(h_new, c_new)``."""
    gates = (T.matmul(x, params[f"{prefix}.W_ih"]) + T.matmul(h, params[f"{prefix}.W_hh"])
             + params[f"{prefix}.b"])
    hc = T.lstm_pointwise(gates, c)
    d = c.shape[1]
    return hc[:, :d], hc[:, d:]


def attention(params, prefix, history, mask=None):
    """Soft attention over a window of hidden states.

    ``history`` is (B, w, d); ``mask`` (B, w) marks valid entries. Scores are
    ``w_a . h_i + b_a``, weights their softmax, and the context the weighted
    sum of the window. Returns ``(context (B, d), weights (B, w))``.
    """
    B, w, d = history.shape
    w_a = params[f"{prefix}.w"]
    scores = T.matmul(history, T.reshape(w_a, (d, 1)))
    scores = T.reshape(scores, (B, w)) + params[f"{prefix}.b"]
    alpha = T.softmax(scores, mask=mask, axis=1)
    ctx = T.tsum(T.reshape(alpha, (B, w, 1)) * history, axis=1)
    return ctx, alpha


def dropout_mask(rng, shape, p):
    """Inverted-dropout multiplier array (values 0 or 1/(1-p))."""
    if p <= 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)
