"""Pure numpy versions of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Both must agree to rounding error; ``tests/test_kernels.py`` holds them to it.
"""

import numpy as np


def scatter_add_rows(src, index, n_rows):
    """out[index[e]] += src[e] for every row e of a 2-D array."""
    out = np.zeros((n_rows, src.shape[1]), dtype=np.float64)
    np.add.at(out, index, src)
    return out


def segment_softmax(scores, segment, n_segments):
    """Softmax of a 1-D score vector within groups sharing a segment id."""
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, segment, scores)
    e = np.exp(scores - seg_max[segment])
    denom = np.bincount(segment, weights=e, minlength=n_segments)
    return e / denom[segment]


def segment_softmax_backward(alpha, grad, segment, n_segments):
    dot = np.bincount(segment, weights=alpha * grad, minlength=n_segments)
    return alpha * (grad - dot[segment])


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def lstm_pointwise(pre, c):
    """Gate nonlinearities and state update of one LSTM step.

    ``pre`` holds the pre-activations laid out as [input, forget, cell, output]
    blocks of width H. Returns (h_new, c_new, acts) where ``acts`` stores the
    activated gates in the same layout for the backward pass.
    """
    hidden = c.shape[1]
    acts = np.empty_like(pre)
    acts[:, : 2 * hidden] = _sigmoid(pre[:, : 2 * hidden])
    acts[:, 2 * hidden : 3 * hidden] = np.tanh(pre[:, 2 * hidden : 3 * hidden])
    acts[:, 3 * hidden :] = _sigmoid(pre[:, 3 * hidden :])
    i = acts[:, :hidden]
    f = acts[:, hidden : 2 * hidden]
    g = acts[:, 2 * hidden : 3 * hidden]
    o = acts[:, 3 * hidden :]
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, acts


def lstm_pointwise_backward(acts, c, c_new, grad_h, grad_c):
    hidden = c.shape[1]
    i = acts[:, :hidden]
    f = acts[:, hidden : 2 * hidden]
    g = acts[:, 2 * hidden : 3 * hidden]
    o = acts[:, 3 * hidden :]
    tc = np.tanh(c_new)
    dc = grad_c + grad_h * o * (1.0 - tc * tc)
    dpre = np.empty_like(acts)
    dpre[:, :hidden] = dc * g * i * (1.0 - i)
    dpre[:, hidden : 2 * hidden] = dc * c * f * (1.0 - f)
    dpre[:, 2 * hidden : 3 * hidden] = dc * i * (1.0 - g * g)
    dpre[:, 3 * hidden :] = grad_h * tc * o * (1.0 - o)
    return dpre, dc * f
