import os
import subprocess
import sys

import numpy as np
import pytest

from attnscale import _pykernels as py
from attnscale import kernels

ck = pytest.importorskip("attnscale._ckernels", reason="compiled extension not built")


def lstm_inputs(rng, b=5, d=7):
    return (rng.normal(size=(b, 4 * d)) * 3, rng.normal(size=(b, d)), rng.normal(size=(b, d)),
            rng.normal(size=(b, d)))


def test_lstm_forward_backends_agree():
    rng = np.random.default_rng(0)
    gates, c_prev, _, _ = lstm_inputs(rng)
    for a, b in zip(py.lstm_pointwise_forward(gates, c_prev),
                    ck.lstm_pointwise_forward(gates, c_prev)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_lstm_backward_backends_agree():
    rng = np.random.default_rng(1)
    gates, c_prev, dh, dc = lstm_inputs(rng)
    _, _, act, tanh_c = py.lstm_pointwise_forward(gates, c_prev)
    for a, b in zip(py.lstm_pointwise_backward(act, tanh_c, c_prev, dh, dc),
                    ck.lstm_pointwise_backward(act, tanh_c, c_prev, dh, dc)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_gae_backends_agree():
    rng = np.random.default_rng(2)
    for n in (1, 5, 64):
        r, v = rng.normal(size=n), rng.normal(size=n)
        d = (rng.random(n) < 0.2).astype(float)
        np.testing.assert_allclose(py.gae(r, v, d, 0.3, 0.99, 0.93),
                                   ck.gae(r, v, d, 0.3, 0.99, 0.93), rtol=0, atol=1e-13)


def test_backend_selected_and_env_override():
    assert kernels.BACKEND == "cython"
    env = dict(os.environ, ATTNSCALE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import attnscale.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
