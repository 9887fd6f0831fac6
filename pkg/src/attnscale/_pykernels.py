"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` exactly in formula (including the tanh form of
the logistic function) so the two backends agree to rounding error.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * np.tanh(0.5 * x) + 0.5


def lstm_pointwise_forward(gates, c_prev):
    """Gate nonlinearities and cell update for a batch of LSTM cells.

    ``gates`` is (B, 4d) pre-activations in i, f, g, o order; ``c_prev`` is
    (B, d). Returns ``(h, c, act, tanh_c)`` where ``act`` holds the activated
    gates, kept for the backward pass.
    """
    d = c_prev.shape[1]
    act = np.empty_like(gates)
    act[:, :d] = _sigmoid(gates[:, :d])
    act[:, d:2 * d] = _sigmoid(gates[:, d:2 * d])
    act[:, 2 * d:3 * d] = np.tanh(gates[:, 2 * d:3 * d])
    act[:, 3 * d:] = _sigmoid(gates[:, 3 * d:])
    c = act[:, d:2 * d] * c_prev + act[:, :d] * act[:, 2 * d:3 * d]
    tanh_c = np.tanh(c)
    h = act[:, 3 * d:] * tanh_c
    return h, c, act, tanh_c


def lstm_pointwise_backward(act, tanh_c, c_prev, dh, dc):
    """Backward of :func:`lstm_pointwise_forward`.

    Returns ``(dgates, dc_prev)``.
    """
    d = c_prev.shape[1]
    i = act[:, :d]
    f = act[:, d:2 * d]
    g = act[:, 2 * d:3 * d]
    o = act[:, 3 * d:]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dgates = np.empty_like(act)
    dgates[:, :d] = dc_total * g * i * (1.0 - i)
    dgates[:, d:2 * d] = dc_total * c_prev * f * (1.0 - f)
    dgates[:, 2 * d:3 * d] = dc_total * i * (1.0 - g * g)
    dgates[:, 3 * d:] = dh * tanh_c * o * (1.0 - o)
    dc_prev = dc_total * f
    return dgates, dc_prev


def gae(rewards, values, dones, last_value, gamma, lam):
    """Backward GAE recursion; returns advantages as float64 array."""
    n = rewards.shape[0]
    adv = np.empty(n, dtype=np.float64)
    next_adv = 0.0
    next_value = float(last_value)
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        next_adv = delta + gamma * lam * nonterminal * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv
