"""Tensor autodiff, recurrent actor-critic and supporting pieces."""

from .tensor import Tensor, NumericError, UsageError, no_grad
from .policy import PolicyArch, Carry, PolicyOutput, init_policy, forward, sample_dropout_masks
from .distributions import sample_multidiscrete, joint_log_prob, joint_entropy, kl_from_old
from .optim import Adam, clip_grad_norm

__all__ = [
    "Tensor", "NumericError", "UsageError", "no_grad",
    "PolicyArch", "Carry", "PolicyOutput", "init_policy", "forward", "sample_dropout_masks",
    "sample_multidiscrete", "joint_log_prob", "joint_entropy", "kl_from_old",
    "Adam", "clip_grad_norm",
]
