# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels.

Same plan/work-item contract as the numpy fallback: one work item per output
channel (input channel for the input-gradient pass), fixed element order
inside an item, so results never depend on worker count.
"""

import numpy as np

name = "compiled"


cdef void _conv_forward_channel(const double[:, :, ::1] inp,
                                const double[:, :, :, ::1] w,
                                const double[::1] b,
                                Py_ssize_t sv, Py_ssize_t sh,
                                Py_ssize_t pv, Py_ssize_t ph,
                                double[:, :, ::1] out,
                                Py_ssize_t o) noexcept nogil:
    cdef Py_ssize_t ic = inp.shape[0], rows = inp.shape[1], cols = inp.shape[2]
    cdef Py_ssize_t v = w.shape[2], h = w.shape[3]
    cdef Py_ssize_t o_rows = out.shape[1], o_cols = out.shape[2]
    cdef Py_ssize_t y, x, i, r, c, iy, ix
    cdef double acc
    for y in range(o_rows):
        for x in range(o_cols):
            acc = b[o]
            for i in range(ic):
                for r in range(v):
                    iy = y * sv - pv + r
                    if iy < 0 or iy >= rows:
                        continue
                    for c in range(h):
                        ix = x * sh - ph + c
                        if 0 <= ix < cols:
                            acc += w[o, i, r, c] * inp[i, iy, ix]
            out[o, y, x] = acc


def conv_forward_plan(double[:, :, ::1] inp, double[:, :, :, ::1] weights,
                      double[::1] biases, int sv, int sh, int pv, int ph,
                      double[:, :, ::1] out):
    def work(o):
        _conv_forward_channel(inp, weights, biases, sv, sh, pv, ph, out, o)

    return work


cdef void _conv_bw_weights_channel(const double[:, :, ::1] inp,
                                   const double[:, :, ::1] sens,
                                   Py_ssize_t sv, Py_ssize_t sh,
                                   Py_ssize_t pv, Py_ssize_t ph,
                                   double[:, :, :, ::1] wgrad,
                                   double[::1] bgrad,
                                   Py_ssize_t o) noexcept nogil:
    cdef Py_ssize_t ic = inp.shape[0], rows = inp.shape[1], cols = inp.shape[2]
    cdef Py_ssize_t v = wgrad.shape[2], h = wgrad.shape[3]
    cdef Py_ssize_t o_rows = sens.shape[1], o_cols = sens.shape[2]
    cdef Py_ssize_t y, x, i, r, c, iy, ix
    cdef double acc, bacc
    for i in range(ic):
        for r in range(v):
            for c in range(h):
                acc = 0.0
                for y in range(o_rows):
                    iy = y * sv - pv + r
                    if iy < 0 or iy >= rows:
                        continue
                    for x in range(o_cols):
                        ix = x * sh - ph + c
                        if 0 <= ix < cols:
                            acc += inp[i, iy, ix] * sens[o, y, x]
                wgrad[o, i, r, c] = acc
    bacc = 0.0
    for y in range(o_rows):
        for x in range(o_cols):
            bacc += sens[o, y, x]
    bgrad[o] = bacc


def conv_backward_weights_plan(double[:, :, ::1] inp, double[:, :, ::1] sens,
                               int sv, int sh, int pv, int ph,
                               double[:, :, :, ::1] wgrad, double[::1] bgrad):
    def work(o):
        _conv_bw_weights_channel(inp, sens, sv, sh, pv, ph, wgrad, bgrad, o)

    return work


cdef void _conv_bw_input_channel(const double[:, :, :, ::1] w,
                                 const double[:, :, ::1] sens,
                                 Py_ssize_t sv, Py_ssize_t sh,
                                 Py_ssize_t pv, Py_ssize_t ph,
                                 double[:, :, ::1] igrad,
                                 Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t oc = w.shape[0], v = w.shape[2], h = w.shape[3]
    cdef Py_ssize_t rows = igrad.shape[1], cols = igrad.shape[2]
    cdef Py_ssize_t o_rows = sens.shape[1], o_cols = sens.shape[2]
    cdef Py_ssize_t o, y, x, r, c, iy, ix
    cdef double s
    for y in range(rows):
        for x in range(cols):
            igrad[i, y, x] = 0.0
    for o in range(oc):
        for y in range(o_rows):
            for r in range(v):
                iy = y * sv - pv + r
                if iy < 0 or iy >= rows:
                    continue
                for x in range(o_cols):
                    s = sens[o, y, x]
                    for c in range(h):
                        ix = x * sh - ph + c
                        if 0 <= ix < cols:
                            igrad[i, iy, ix] += w[o, i, r, c] * s
    return


def conv_backward_input_plan(double[:, :, :, ::1] weights,
                             double[:, :, ::1] sens, int sv, int sh,
                             int pv, int ph, double[:, :, ::1] igrad):
    def work(i):
        _conv_bw_input_channel(weights, sens, sv, sh, pv, ph, igrad, i)

    return work


cdef void _pool_forward_channel(const double[:, :, ::1] inp,
                                Py_ssize_t wv, Py_ssize_t wh,
                                Py_ssize_t sv, Py_ssize_t sh,
                                double[:, :, ::1] out,
                                long long[:, :, ::1] arg_r,
                                long long[:, :, ::1] arg_c,
                                Py_ssize_t ch) noexcept nogil:
    cdef Py_ssize_t o_rows = out.shape[1], o_cols = out.shape[2]
    cdef Py_ssize_t y, x, r, c, iy, ix, br, bc
    cdef double best, val
    for y in range(o_rows):
        for x in range(o_cols):
            best = inp[ch, y * sv, x * sh]
            br = y * sv
            bc = x * sh
            for r in range(wv):
                iy = y * sv + r
                for c in range(wh):
                    ix = x * sh + c
                    val = inp[ch, iy, ix]
                    if val > best:  # strict: ties keep the first position
                        best = val
                        br = iy
                        bc = ix
            out[ch, y, x] = best
            arg_r[ch, y, x] = br
            arg_c[ch, y, x] = bc


def maxpool_forward_plan(double[:, :, ::1] inp, int wv, int wh, int sv,
                         int sh, double[:, :, ::1] out,
                         long long[:, :, ::1] arg_r,
                         long long[:, :, ::1] arg_c):
    def work(ch):
        _pool_forward_channel(inp, wv, wh, sv, sh, out, arg_r, arg_c, ch)

    return work


cdef void _pool_backward_channel(const double[:, :, ::1] sens,
                                 const long long[:, :, ::1] arg_r,
                                 const long long[:, :, ::1] arg_c,
                                 double[:, :, ::1] igrad,
                                 Py_ssize_t ch) noexcept nogil:
    cdef Py_ssize_t rows = igrad.shape[1], cols = igrad.shape[2]
    cdef Py_ssize_t o_rows = sens.shape[1], o_cols = sens.shape[2]
    cdef Py_ssize_t y, x
    for y in range(rows):
        for x in range(cols):
            igrad[ch, y, x] = 0.0
    for y in range(o_rows):
        for x in range(o_cols):
            igrad[ch, arg_r[ch, y, x], arg_c[ch, y, x]] += sens[ch, y, x]


def maxpool_backward_plan(double[:, :, ::1] sens,
                          long long[:, :, ::1] arg_r,
                          long long[:, :, ::1] arg_c,
                          double[:, :, ::1] igrad):
    def work(ch):
        _pool_backward_channel(sens, arg_r, arg_c, igrad, ch)

    return work
