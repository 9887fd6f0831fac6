"""Autoscaling workbench: serverless cluster simulator, recurrent PPO, Double DQN and HPA."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402  "cython" or "python"
