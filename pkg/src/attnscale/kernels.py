"""Kernel backend selection.

The compiled extension is used when it was built and importable; otherwise the
numpy fallback is used. Set ``ATTNSCALE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ATTNSCALE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lstm_pointwise_forward(gates, c_prev):
    return _impl.lstm_pointwise_forward(_c(gates), _c(c_prev))


def lstm_pointwise_backward(act, tanh_c, c_prev, dh, dc):
    return _impl.lstm_pointwise_backward(_c(act), _c(tanh_c), _c(c_prev), _c(dh), _c(dc))


def gae(rewards, values, dones, last_value, gamma, lam):
    return _impl.gae(_c(rewards), _c(values), _c(dones), float(last_value),
                     float(gamma), float(lam))
