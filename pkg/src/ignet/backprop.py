"""Analytic gradients with an independent finite-difference oracle.

``backward`` walks the recorded forward trace once, accumulating each layer's
weight and bias gradients and propagating sensitivities through weights and
activation derivatives.  ``finite_diff_gradient`` recomputes every gradient
from central differences of the loss and exists purely to check ``backward``;
the two paths share no gradient code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import (
    ForwardTrace,
    Network,
    activation_arrays,
    forward,
    loss_eval,
    loss_output_gradient,
)
from .tensor import (
    FilterBank,
    conv_input_gradients,
    conv_weight_gradients,
    max_pool_input_gradients,
)


class Gradients:
    """Per-layer weight/bias gradients, aligned with the network's layers.

    Entries are None for layers without parameters.
    """

    def __init__(self, weights, biases):
        self.weights = weights
        self.biases = biases

    @classmethod
    def zeros_like(cls, net: Network) -> "Gradients":
        ws, bs = [], []
        for layer in net.layers:
            if layer.kind == "conv":
                ws.append(np.zeros_like(layer.bank.weights))
                bs.append(np.zeros_like(layer.bank.biases))
            else:
                ws.append(None)
                bs.append(None)
        return cls(ws, bs)

    def add_(self, other: "Gradients") -> "Gradients":
        for i, w in enumerate(self.weights):
            if w is not None:
                w += other.weights[i]
                self.biases[i] += other.biases[i]
        return self

    def scale_(self, factor: float) -> "Gradients":
        for i, w in enumerate(self.weights):
            if w is not None:
                w *= factor
                self.biases[i] *= factor
        return self

    def is_finite(self) -> bool:
        for i, w in enumerate(self.weights):
            if w is not None:
                if not np.isfinite(w).all() or not np.isfinite(self.biases[i]).all():
                    return False
        return True


def backward(net: Network, trace: ForwardTrace, target) -> Gradients:
    """Gradients of the loss with respect to every weight and bias.

    Max-pool layers route sensitivities through their recorded argmax
    provenance.  Dropconnect-masked weights receive zero gradient; frozen
    weights receive gradients normally (suppression happens in the
    optimizer).  Bias gradients are computed even for non-learning biases.
    """
    if len(trace.layers) != len(net.layers):
        raise ValueError("trace does not match the network")
    grads = Gradients.zeros_like(net)
    top = len(net.layers) - 1
    if net.layers[top].kind == "softmax":
        top -= 1
    # sensitivity w.r.t. the current layer's final output (after its dropout)
    sens = loss_output_gradient(net.loss, trace, target).reshape(
        net.layers[top].out_dims
    )
    for li in range(top, -1, -1):
        layer = net.layers[li]
        tr = trace.layers[li]
        if tr.dropout_mask is not None:
            sens = sens * tr.dropout_mask / (1.0 - tr.dropout_rate)
        if layer.kind == "maxpool":
            sens = max_pool_input_gradients(sens, tr.pool_prov, layer.in_dims)
            continue
        _, deriv = activation_arrays(layer.activation, tr.pre_act.data)
        dz = sens * deriv
        wgrad, bgrad = conv_weight_gradients(tr.input_map, dz,
                                             layer.bank.weights.shape, layer.geom)
        weights = layer.bank.weights
        if tr.dropconnect_mask is not None:
            wgrad[tr.dropconnect_mask] = 0.0
            weights = np.where(tr.dropconnect_mask, 0.0, weights)
        grads.weights[li] = wgrad
        grads.biases[li] = bgrad
        if li > 0:
            sens = conv_input_gradients(weights, dz, layer.in_dims, layer.geom)
    return grads


def sample_loss(net: Network, fmap, target) -> float:
    """Loss of one sample under a deterministic (inference-mode) forward."""
    return loss_eval(net.loss, forward(net, fmap).outputs, target)


def finite_diff_gradient(net: Network, fmap, target, epsilon: float) -> Gradients:
    """Central-difference gradient (L(p+e) - L(p-e)) / 2e per parameter.

    Biases are included regardless of their learning flag.  Forward passes
    run in inference mode, so the result is comparable with ``backward`` on
    an inference trace.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    grads = Gradients.zeros_like(net)
    for li, layer in net.param_layers():
        for arr, out in ((layer.bank.weights, grads.weights[li]),
                         (layer.bank.biases, grads.biases[li])):
            flat = arr.reshape(-1)
            gflat = out.reshape(-1)
            for j in range(flat.size):
                saved = flat[j]
                flat[j] = saved + epsilon
                hi = sample_loss(net, fmap, target)
                flat[j] = saved - epsilon
                lo = sample_loss(net, fmap, target)
                flat[j] = saved
                gflat[j] = (hi - lo) / (2.0 * epsilon)
    return grads


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


@dataclass
class GradientCheckReport:
    max_relative_error: float
    worst_layer: int
    worst_kind: str  # "weight" or "bias"
    worst_index: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def gradient_check(net: Network, samples, epsilon: float = 1e-5,
                   tolerance: float = 1e-5) -> GradientCheckReport:
    """Compare ``backward`` against the finite-difference oracle.

    ``samples`` is a sequence of (input map, target vector) pairs.  The
    report carries the worst offender's layer and parameter index.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    worst = (0.0, -1, "", ())
    for fmap, target in samples:
        analytic = backward(net, forward(net, fmap), target)
        numeric = finite_diff_gradient(net, fmap, target, epsilon)
        for li, _ in net.param_layers():
            for kind, a_arr, n_arr in (
                ("weight", analytic.weights[li], numeric.weights[li]),
                ("bias", analytic.biases[li], numeric.biases[li]),
            ):
                denom = np.maximum(1e-8, np.abs(a_arr) + np.abs(n_arr))
                rel = np.abs(a_arr - n_arr) / denom
                j = int(np.argmax(rel))
                if rel.flat[j] > worst[0]:
                    worst = (float(rel.flat[j]), li, kind,
                             tuple(np.unravel_index(j, a_arr.shape)))
    return GradientCheckReport(worst[0], worst[1], worst[2], worst[3], tolerance)


# ---------------------------------------------------------------------------
# Connectivity bookkeeping, materialized for small networks.  Tests use these
# maps to evaluate the per-weight sum-of-links gradient form literally and to
# inspect which upstream weights multiply a given neuron.

def weight_links(input_dims, bank: FilterBank, geom):
    """For each weight (o,i,r,c): the (output neuron, input element) pairs it links.

    Output neurons are (o,y,x) positions, input elements (i,iy,ix); pairs are
    listed in row-major output order.  Cost grows with weights x positions,
    so this is for small banks only.
    """
    from .tensor import output_shape

    _, o_rows, o_cols = output_shape(input_dims, bank, geom)
    _, in_r, in_c = input_dims
    links = {}
    for o in range(bank.out_channels):
        for i in range(bank.in_channels):
            for r in range(bank.v):
                for c in range(bank.h):
                    pairs = []
                    for y in range(o_rows):
                        iy = y * geom.stride_v - geom.pad_v + r
                        if iy < 0 or iy >= in_r:
                            continue
                        for x in range(o_cols):
                            ix = x * geom.stride_h - geom.pad_h + c
                            if ix < 0 or ix >= in_c:
                                continue
                            pairs.append(((o, y, x), (i, iy, ix)))
                    links[(o, i, r, c)] = pairs
    return links


def neuron_links(neuron_dims, next_bank: FilterBank, next_geom):
    """For each neuron (ch,y,x): the next-layer weights multiplying it and the
    neurons those weights activate.

    Entries are lists of ((o2,ch,r,c), (o2,y2,x2)) pairs.  The neuron's map is
    the next layer's input map, so ch indexes its input channels.
    """
    from .tensor import output_shape

    _, o_rows, o_cols = output_shape(neuron_dims, next_bank, next_geom)
    ch_n, rows, cols = neuron_dims
    links = {}
    for ch in range(ch_n):
        for iy in range(rows):
            for ix in range(cols):
                pairs = []
                for r in range(next_bank.v):
                    num = iy + next_geom.pad_v - r
                    if num % next_geom.stride_v:
                        continue
                    y2 = num // next_geom.stride_v
                    if y2 < 0 or y2 >= o_rows:
                        continue
                    for c in range(next_bank.h):
                        num_c = ix + next_geom.pad_h - c
                        if num_c % next_geom.stride_h:
                            continue
                        x2 = num_c // next_geom.stride_h
                        if x2 < 0 or x2 >= o_cols:
                            continue
                        for o2 in range(next_bank.out_channels):
                            pairs.append(((o2, ch, r, c), (o2, y2, x2)))
                links[(ch, iy, ix)] = pairs
    return links
