# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled recurrent-scan kernels.

Same contract as the pure-numpy module: a tanh recurrence over precomputed
input projections.  h_t = tanh(xw_t + h_{t-1} @ wh + b), with h_0 = 0.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


def rnn_forward(double[:, ::1] xw, double[:, ::1] wh, double[::1] b):
    """Run the recurrence forward; returns the (T, h) hidden-state matrix."""
    cdef Py_ssize_t steps = xw.shape[0]
    cdef Py_ssize_t width = xw.shape[1]
    out = np.empty((steps, width))
    cdef double[:, ::1] hidden = out
    cdef Py_ssize_t t, i, j
    cdef double acc
    for t in range(steps):
        for j in range(width):
            acc = xw[t, j] + b[j]
            if t > 0:
                for i in range(width):
                    acc += hidden[t - 1, i] * wh[i, j]
            hidden[t, j] = tanh(acc)
    return out


def rnn_backward(double[:, ::1] xw, double[:, ::1] wh,
                 double[:, ::1] hidden, double[:, ::1] d_hidden):
    """Backpropagate through the recurrence.

    Returns gradients w.r.t. the input projections, the recurrent weights,
    and the bias.
    """
    cdef Py_ssize_t steps = xw.shape[0]
    cdef Py_ssize_t width = xw.shape[1]
    d_xw_arr = np.empty((steps, width))
    d_wh_arr = np.zeros((width, width))
    d_b_arr = np.zeros(width)
    carry_arr = np.zeros(width)
    next_carry_arr = np.zeros(width)
    cdef double[:, ::1] d_xw = d_xw_arr
    cdef double[:, ::1] d_wh = d_wh_arr
    cdef double[::1] d_b = d_b_arr
    cdef double[::1] carry = carry_arr
    cdef double[::1] next_carry = next_carry_arr
    cdef Py_ssize_t t, i, j
    cdef double da
    for t in range(steps - 1, -1, -1):
        for j in range(width):
            da = (d_hidden[t, j] + carry[j]) * (1.0 - hidden[t, j] * hidden[t, j])
            d_xw[t, j] = da
            d_b[j] += da
        if t > 0:
            for i in range(width):
                for j in range(width):
                    d_wh[i, j] += hidden[t - 1, i] * d_xw[t, j]
            for i in range(width):
                da = 0.0
                for j in range(width):
                    da += d_xw[t, j] * wh[i, j]
                next_carry[i] = da
            carry, next_carry = next_carry, carry
    return d_xw_arr, d_wh_arr, d_b_arr
