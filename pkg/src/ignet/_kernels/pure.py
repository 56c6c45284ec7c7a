"""Numpy fallback kernels.

Each ``*_plan`` function precomputes whatever is shared across work items and
returns a ``work(item)`` callable.  Item granularity is fixed (output channel
for forward/weight passes, input channel for the input-gradient pass) so that
results do not depend on how items are distributed over workers.
"""

import numpy as np

name = "numpy"


def _im2col(inp, v, h, sv, sh, pv, ph, out_rows, out_cols):
    # (rows*cols, in_channels*v*h) patch matrix of the zero-padded input
    padded = np.pad(inp, ((0, 0), (pv, pv), (ph, ph)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (v, h), axis=(1, 2))
    win = win[:, ::sv, ::sh][:, :out_rows, :out_cols]
    return np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(
        out_rows * out_cols, -1
    )


def conv_forward_plan(inp, weights, biases, sv, sh, pv, ph, out):
    o_rows, o_cols = out.shape[1], out.shape[2]
    v, h = weights.shape[2], weights.shape[3]
    cols = _im2col(inp, v, h, sv, sh, pv, ph, o_rows, o_cols)

    def work(o):
        out[o] = (cols @ weights[o].ravel() + biases[o]).reshape(o_rows, o_cols)

    return work


def conv_backward_weights_plan(inp, sens, sv, sh, pv, ph, wgrad, bgrad):
    o_rows, o_cols = sens.shape[1], sens.shape[2]
    v, h = wgrad.shape[2], wgrad.shape[3]
    cols = _im2col(inp, v, h, sv, sh, pv, ph, o_rows, o_cols)
    wshape = wgrad.shape[1:]

    def work(o):
        flat = sens[o].ravel()
        wgrad[o] = (flat @ cols).reshape(wshape)
        bgrad[o] = flat.sum()

    return work


def conv_backward_input_plan(weights, sens, sv, sh, pv, ph, igrad):
    rows, cols_n = igrad.shape[1], igrad.shape[2]
    v, h = weights.shape[2], weights.shape[3]
    o_rows, o_cols = sens.shape[1], sens.shape[2]

    def work(i):
        frame = np.zeros((rows + 2 * pv, cols_n + 2 * ph))
        for r in range(v):
            for c in range(h):
                contrib = np.tensordot(weights[:, i, r, c], sens, axes=(0, 0))
                frame[
                    r : r + (o_rows - 1) * sv + 1 : sv,
                    c : c + (o_cols - 1) * sh + 1 : sh,
                ] += contrib
        igrad[i] = frame[pv : pv + rows, ph : ph + cols_n]

    return work


def maxpool_forward_plan(inp, wv, wh, sv, sh, out, arg_r, arg_c):
    o_rows, o_cols = out.shape[1], out.shape[2]
    base_r = (np.arange(o_rows) * sv)[:, None]
    base_c = (np.arange(o_cols) * sh)[None, :]

    def work(ch):
        win = np.lib.stride_tricks.sliding_window_view(inp[ch], (wv, wh))
        win = win[::sv, ::sh][:o_rows, :o_cols].reshape(o_rows, o_cols, wv * wh)
        flat_idx = win.argmax(axis=2)  # argmax takes the first maximum
        out[ch] = np.take_along_axis(win, flat_idx[..., None], axis=2)[..., 0]
        arg_r[ch] = base_r + flat_idx // wh
        arg_c[ch] = base_c + flat_idx % wh

    return work


def maxpool_backward_plan(sens, arg_r, arg_c, igrad):
    def work(ch):
        igrad[ch] = 0.0
        np.add.at(
            igrad[ch], (arg_r[ch].ravel(), arg_c[ch].ravel()), sens[ch].ravel()
        )

    return work
