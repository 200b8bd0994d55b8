"""Differentiable primitives built on :class:`Tensor`.

Fused ops (softmax, lstm_cell, the segment/scatter family) carry hand-written
backward rules; the rest compose existing ops.
"""

import numpy as np

from gatraj import _kernels
from gatraj.autodiff.tensor import ShapeError, Tensor, as_tensor, matmul


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from exc
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.make(out, tensors, "concat", backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"stack: incompatible shapes {shapes}") from exc

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor.make(out, tensors, "stack", backward)


def softmax(x, axis=-1):
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ShapeError(f"softmax: empty axis {axis} in shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.make(out, (x,), "softmax", backward)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else out + bias


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias


def dropout(x, rate, rng):
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def conv1d(x, weight, bias=None):
    """Same-padded, stride-1 convolution along axis 1 of ``x`` [N, S, C_in].

    ``weight`` has shape [kernel, C_in, C_out] with an odd kernel width.
    """
    kernel, c_in, c_out = weight.shape
    if kernel % 2 != 1:
        raise ShapeError(f"conv1d: kernel width must be odd, got {kernel}")
    if x.ndim != 3 or x.shape[2] != c_in:
        raise ShapeError(f"conv1d: input {x.shape} does not match weight {weight.shape}")
    n, length, _ = x.shape
    pad = kernel // 2
    zeros = Tensor(np.zeros((n, pad, c_in)))
    padded = concat([zeros, x, zeros], axis=1) if pad else x
    # im2col: window k contributes padded[:, t + k] to output position t
    cols = concat([padded[:, k : k + length, :] for k in range(kernel)], axis=2)
    out = matmul(cols, weight.reshape(kernel * c_in, c_out))
    return out if bias is None else out + bias


def lstm_cell(x, h, c, w_x, w_h, bias):
    """One LSTM step; gate blocks ordered [input, forget, cell, output].

    ``w_x`` is [F, 4H], ``w_h`` is [H, 4H], ``bias`` is [4H]. Returns (h', c').
    """
    if x.shape[0] != h.shape[0]:
        raise ShapeError(f"lstm_cell: batch mismatch x={x.shape} h={h.shape}")
    if w_x.shape[1] != 4 * h.shape[1]:
        raise ShapeError(f"lstm_cell: input weights {w_x.shape} do not fit hidden {h.shape[1]}")
    return lstm_cell_projected(matmul(x, w_x) + bias, h, c, w_h)


def lstm_cell_projected(x_proj, h, c, w_h):
    """LSTM step from a precomputed input projection ``x @ w_x + bias`` [B, 4H].

    Lets a caller project a whole sequence (or a repeated input) in one matmul.
    """
    if h.shape != c.shape or x_proj.shape != (h.shape[0], 4 * h.shape[1]):
        raise ShapeError(f"lstm_cell: shapes x_proj={x_proj.shape} h={h.shape} c={c.shape}")
    if w_h.shape != (h.shape[1], 4 * h.shape[1]):
        raise ShapeError(f"lstm_cell: recurrent weights {w_h.shape} do not fit hidden {h.shape[1]}")
    pre = x_proj + matmul(h, w_h)
    h_new, c_new, acts = _kernels.lstm_pointwise(pre.data, c.data)
    c_old = c.data

    # Both outputs hang off a single joint node so the tape sees one op.
    joint = Tensor.make(np.concatenate([h_new, c_new], axis=1), (pre, c), "lstm_cell", None)
    if joint.requires_grad:
        hidden = c_old.shape[1]

        def backward(g):
            dpre, dc = _kernels.lstm_pointwise_backward(
                acts, c_old, c_new, g[:, :hidden], g[:, hidden:]
            )
            return dpre, dc

        joint._backward = backward
        return joint[:, :hidden], joint[:, hidden:]
    return Tensor(h_new), Tensor(c_new)


def gather_rows(x, index):
    """x[index] along axis 0 with an index array; backward scatters."""
    index = np.asarray(index, dtype=np.int64)
    n_rows = x.shape[0]
    flat_shape = x.shape[1:]
    width = int(np.prod(flat_shape)) if flat_shape else 1

    def backward(g):
        return (_kernels.scatter_add_rows(g.reshape(len(index), width), index, n_rows).reshape(x.shape),)

    return Tensor.make(x.data[index], (x,), "gather_rows", backward)


def scatter_add_rows(src, index, n_rows):
    """out[index[e]] += src[e] over the rows of a 2-D tensor."""
    index = np.asarray(index, dtype=np.int64)
    if src.ndim != 2 or src.shape[0] != len(index):
        raise ShapeError(f"scatter_add_rows: source {src.shape} vs index length {len(index)}")
    out = _kernels.scatter_add_rows(src.data, index, n_rows)
    return Tensor.make(out, (src,), "scatter_add_rows", lambda g: (g[index],))


def segment_softmax(scores, segment, n_segments):
    """Softmax of 1-D ``scores`` within groups that share a ``segment`` id."""
    segment = np.asarray(segment, dtype=np.int64)
    if scores.ndim != 1 or scores.shape[0] != len(segment):
        raise ShapeError(f"segment_softmax: scores {scores.shape} vs segment length {len(segment)}")
    alpha = _kernels.segment_softmax(scores.data, segment, n_segments)

    def backward(g):
        return (_kernels.segment_softmax_backward(alpha, g, segment, n_segments),)

    return Tensor.make(alpha, (scores,), "segment_softmax", backward)
