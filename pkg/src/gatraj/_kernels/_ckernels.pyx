# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; same contracts as _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport copysign, exp, fabs, fmax, INFINITY

cnp.import_array()


def scatter_add_rows(const double[:, ::1] src, const cnp.int64_t[::1] index, Py_ssize_t n_rows):
    cdef Py_ssize_t n_src = src.shape[0], width = src.shape[1], e, d, r
    out_arr = np.zeros((n_rows, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for e in range(n_src):
            r = index[e]
            for d in range(width):
                out[r, d] += src[e, d]
    return out_arr


def segment_softmax(const double[::1] scores, const cnp.int64_t[::1] segment, Py_ssize_t n_segments):
    cdef Py_ssize_t n = scores.shape[0], e, s
    seg_max_arr = np.full(n_segments, -INFINITY)
    denom_arr = np.zeros(n_segments)
    out_arr = np.empty(n)
    cdef double[::1] seg_max = seg_max_arr
    cdef double[::1] denom = denom_arr
    cdef double[::1] out = out_arr
    with nogil:
        for e in range(n):
            s = segment[e]
            if scores[e] > seg_max[s]:
                seg_max[s] = scores[e]
        for e in range(n):
            s = segment[e]
            out[e] = exp(scores[e] - seg_max[s])
            denom[s] += out[e]
        for e in range(n):
            out[e] /= denom[segment[e]]
    return out_arr


def segment_softmax_backward(const double[::1] alpha, const double[::1] grad,
                             const cnp.int64_t[::1] segment, Py_ssize_t n_segments):
    cdef Py_ssize_t n = alpha.shape[0], e
    dot_arr = np.zeros(n_segments)
    out_arr = np.empty(n)
    cdef double[::1] dot = dot_arr
    cdef double[::1] out = out_arr
    with nogil:
        for e in range(n):
            dot[segment[e]] += alpha[e] * grad[e]
        for e in range(n):
            out[e] = alpha[e] * (grad[e] - dot[segment[e]])
    return out_arr


cdef inline double _sig_from(double x, double e) nogil:
    # e = exp(-|x|). The numerator is 1 for x >= 0 and e otherwise; picking it
    # with fmax avoids a sign branch, which mispredicts on gate inputs.
    cdef double r = 1.0 / (1.0 + e)
    return fmax(e, <double>(x >= 0)) * r


cdef inline double _tanh_from(double x, double e) nogil:
    # e = exp(-|x|), so exp(-2|x|) = e * e
    cdef double e2, x2
    if fabs(x) < 0.0625:
        # (1 - e2) cancels near zero; odd Taylor series to x^13 instead.
        x2 = x * x
        return x * (1.0 + x2 * (-1.0 / 3 + x2 * (2.0 / 15 + x2 * (-17.0 / 315 + x2 * (
            62.0 / 2835 + x2 * (-1382.0 / 155925 + x2 * (21844.0 / 6081075)))))))
    e2 = e * e
    return copysign((1.0 - e2) / (1.0 + e2), x)


def lstm_pointwise(const double[:, ::1] pre, const double[:, ::1] c):
    cdef Py_ssize_t batch = c.shape[0], hidden = c.shape[1], b, k
    cdef double ig, fg, gg, og
    # Transcendentals go through numpy's vectorized exp/tanh; scalar libm
    # calls inside the loop cost several times more per element.
    ex_arr = np.exp(-np.abs(np.asarray(pre)))
    cdef const double[:, ::1] ex = ex_arr
    c_arr = np.empty((batch, hidden))
    acts_arr = np.empty((batch, 4 * hidden))
    cdef double[:, ::1] c_new = c_arr
    cdef double[:, ::1] acts = acts_arr
    with nogil:
        for b in range(batch):
            for k in range(hidden):
                ig = _sig_from(pre[b, k], ex[b, k])
                fg = _sig_from(pre[b, hidden + k], ex[b, hidden + k])
                gg = _tanh_from(pre[b, 2 * hidden + k], ex[b, 2 * hidden + k])
                og = _sig_from(pre[b, 3 * hidden + k], ex[b, 3 * hidden + k])
                c_new[b, k] = fg * c[b, k] + ig * gg
                acts[b, k] = ig
                acts[b, hidden + k] = fg
                acts[b, 2 * hidden + k] = gg
                acts[b, 3 * hidden + k] = og
    h_arr = np.tanh(c_arr)
    cdef double[:, ::1] h_new = h_arr
    with nogil:
        for b in range(batch):
            for k in range(hidden):
                h_new[b, k] *= acts[b, 3 * hidden + k]
    return h_arr, c_arr, acts_arr


def lstm_pointwise_backward(const double[:, ::1] acts, const double[:, ::1] c,
                            const double[:, ::1] c_new, const double[:, ::1] grad_h,
                            const double[:, ::1] grad_c):
    cdef Py_ssize_t batch = c.shape[0], hidden = c.shape[1], b, k
    cdef double ig, fg, gg, og, t, dc
    tc_arr = np.tanh(np.asarray(c_new))
    cdef const double[:, ::1] tc = tc_arr
    dpre_arr = np.empty((batch, 4 * hidden))
    dcp_arr = np.empty((batch, hidden))
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dcp = dcp_arr
    with nogil:
        for b in range(batch):
            for k in range(hidden):
                ig = acts[b, k]
                fg = acts[b, hidden + k]
                gg = acts[b, 2 * hidden + k]
                og = acts[b, 3 * hidden + k]
                t = tc[b, k]
                dc = grad_c[b, k] + grad_h[b, k] * og * (1.0 - t * t)
                dpre[b, k] = dc * gg * ig * (1.0 - ig)
                dpre[b, hidden + k] = dc * c[b, k] * fg * (1.0 - fg)
                dpre[b, 2 * hidden + k] = dc * ig * (1.0 - gg * gg)
                dpre[b, 3 * hidden + k] = grad_h[b, k] * t * og * (1.0 - og)
                dcp[b, k] = dc * fg
    return dpre_arr, dcp_arr
