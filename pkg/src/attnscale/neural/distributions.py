"""Factorized categorical distribution over the four action heads."""

import numpy as np

from . import tensor as T


def _log_softmax_np(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def head_entropy(logits):
    lp = _log_softmax_np(np.asarray(logits, dtype=np.float64))
    return float(-np.sum(np.exp(lp) * lp))


def sample_multidiscrete(head_logits, rng, greedy=False):
    """Sample one action per head from 1-D logit vectors.

    Returns ``(actions, log_prob, entropy)``; the joint log-probability and
    entropy are sums over heads since heads are independent. With ``greedy``
    each head takes its argmax (ties to the lowest index).
    """
    actions = []
    log_prob = 0.0
    entropy = 0.0
    for logits in head_logits:
        lp = _log_softmax_np(np.asarray(logits, dtype=np.float64))
        p = np.exp(lp)
        if greedy:
            a = int(np.argmax(lp))
        else:
            a = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
            a = min(a, len(p) - 1)
        actions.append(a)
        log_prob += float(lp[a])
        entropy -= float(np.sum(p * lp))
    return tuple(actions), log_prob, entropy


def joint_log_prob(logits, actions):
    """Differentiable joint log-probability.

    ``logits`` is a list of (B, T, n_k) tensors, ``actions`` an int array
    (B, T, heads). Returns ``(log_prob (B, T), log_softmax per head)``.
    """
    total = None
    lps = []
    B, steps = actions.shape[:2]
    bi, ti = np.meshgrid(np.arange(B), np.arange(steps), indexing="ij")
    for k, lg in enumerate(logits):
        lp = T.log_softmax(lg, axis=-1)
        lps.append(lp)
        picked = lp[bi, ti, actions[:, :, k]]
        total = picked if total is None else total + picked
    return total, lps


def joint_entropy(log_softmaxes):
    """Sum over heads of categorical entropy, per (B, T) position."""
    total = None
    for lp in log_softmaxes:
        ent = -T.tsum(T.exp(lp) * lp, axis=-1)
        total = ent if total is None else total + ent
    return total


def kl_from_old(old_log_softmaxes, new_log_softmaxes):
    """KL(old || new) summed over heads, per (B, T) position; ``old`` are arrays."""
    total = None
    for old, new in zip(old_log_softmaxes, new_log_softmaxes):
        p_old = np.exp(old)
        kl = T.tsum(T.Tensor(p_old) * (T.Tensor(old) - new), axis=-1)
        total = kl if total is None else total + kl
    return total
