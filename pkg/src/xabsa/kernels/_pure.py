"""Pure-numpy recurrent-scan kernels (fallback backend).

Same contract as the compiled module: a tanh recurrence over precomputed
input projections.  h_t = tanh(xw_t + h_{t-1} @ wh + b), with h_0 = 0.
"""

from __future__ import annotations

import numpy as np


def rnn_forward(xw: np.ndarray, wh: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Run the recurrence forward; returns the (T, h) hidden-state matrix."""
    steps, width = xw.shape
    hidden = np.empty((steps, width))
    prev = np.zeros(width)
    for t in range(steps):
        prev = np.tanh(xw[t] + prev @ wh + b)
        hidden[t] = prev
    return hidden


def rnn_backward(
    xw: np.ndarray,
    wh: np.ndarray,
    hidden: np.ndarray,
    d_hidden: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate through the recurrence.

    Returns gradients w.r.t. the input projections, the recurrent weights,
    and the bias.
    """
    steps, width = xw.shape
    d_xw = np.empty_like(xw)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros(width)
    carry = np.zeros(width)
    for t in range(steps - 1, -1, -1):
        da = (d_hidden[t] + carry) * (1.0 - hidden[t] * hidden[t])
        d_xw[t] = da
        d_b += da
        if t > 0:
            d_wh += np.outer(hidden[t - 1], da)
            carry = da @ wh.T
    return d_xw, d_wh, d_b
