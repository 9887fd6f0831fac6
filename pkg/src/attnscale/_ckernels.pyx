# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. See ``_pykernels`` for semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    return 0.5 * tanh(0.5 * x) + 0.5


def lstm_pointwise_forward(double[:, ::1] gates, double[:, ::1] c_prev):
    # the transcendental parts go through numpy's vectorized tanh (much faster
    # than per-element libm calls); the gate algebra is fused in one pass
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t d = c_prev.shape[1]
    if gates.shape[0] != B or gates.shape[1] != 4 * d:
        raise ValueError("gates must be (B, 4d)")
    scale = np.full(4 * d, 0.5)
    scale[2 * d:3 * d] = 1.0
    act_arr = np.tanh(np.asarray(gates) * scale)
    c_arr = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] act = act_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t b, k
    cdef double i, f
    with nogil:
        for b in range(B):
            for k in range(d):
                i = 0.5 * act[b, k] + 0.5
                f = 0.5 * act[b, d + k] + 0.5
                act[b, k] = i
                act[b, d + k] = f
                act[b, 3 * d + k] = 0.5 * act[b, 3 * d + k] + 0.5
                c[b, k] = f * c_prev[b, k] + i * act[b, 2 * d + k]
    tc_arr = np.tanh(c_arr)
    h_arr = act_arr[:, 3 * d:] * tc_arr
    return h_arr, c_arr, act_arr, tc_arr


def lstm_pointwise_backward(double[:, ::1] act, double[:, ::1] tanh_c,
                            double[:, ::1] c_prev, double[:, ::1] dh,
                            double[:, ::1] dc):
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t d = c_prev.shape[1]
    dg_arr = np.empty((B, 4 * d), dtype=np.float64)
    dcp_arr = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] dg = dg_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t b, k
    cdef double i, f, g, o, t, dct
    with nogil:
        for b in range(B):
            for k in range(d):
                i = act[b, k]
                f = act[b, d + k]
                g = act[b, 2 * d + k]
                o = act[b, 3 * d + k]
                t = tanh_c[b, k]
                dct = dc[b, k] + dh[b, k] * o * (1.0 - t * t)
                dg[b, k] = dct * g * i * (1.0 - i)
                dg[b, d + k] = dct * c_prev[b, k] * f * (1.0 - f)
                dg[b, 2 * d + k] = dct * i * (1.0 - g * g)
                dg[b, 3 * d + k] = dh[b, k] * t * o * (1.0 - o)
                dcp[b, k] = dct * f
    return dg_arr, dcp_arr


def gae(double[::1] rewards, double[::1] values, double[::1] dones,
        double last_value, double gamma, double lam):
    cdef Py_ssize_t n = rewards.shape[0]
    adv_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] adv = adv_arr
    cdef double next_adv = 0.0
    cdef double next_value = last_value
    cdef double nonterminal, delta
    cdef Py_ssize_t t
    with nogil:
        for t in range(n - 1, -1, -1):
            nonterminal = 1.0 - dones[t]
            delta = rewards[t] + gamma * next_value * nonterminal - values[t]
            next_adv = delta + gamma * lam * nonterminal * next_adv
            adv[t] = next_adv
            next_value = values[t]
    return adv_arr
