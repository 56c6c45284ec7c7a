"""Amplitude-controlled initialization, analytic derivative bounds, and the
startup convergence diagnostic.

Weights of a layer with a v x h filter draw uniformly from [-W/(v*h), W/(v*h)]
and biases from [-B, B], one (W, B) amplitude pair per parameterized layer.
The bound calculators give the reach of input maps and loss-weight
derivatives implied by those amplitudes; the diagnostic report compares them
with mean absolute values (MAVs) measured after one forward and one backward
pass, so initialization can be retuned before any real training happens.

The product-form bounds are exact for single-channel layer chains whose
per-layer amplitude sums stay at or above one (or whose bias amplitudes are
zero); multi-channel convolutions can exceed them by their fan-in, and a
weight shared by many output positions accumulates that many gradient terms.
The report prints the sharing multiplicity so readers can scale expectations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import backward
from .net import Loss, Network, activation_arrays, forward, loss_output_gradient
from .rng import as_generator


class InitAmplitudes:
    """Per-layer (weight amplitude, bias amplitude) pairs, non-negative."""

    def __init__(self, pairs):
        self.pairs = [(float(w), float(b)) for w, b in pairs]
        for n, (w, b) in enumerate(self.pairs, start=1):
            if w < 0 or b < 0:
                raise ValueError(f"amplitudes for layer {n} must be >= 0")

    def __len__(self):
        return len(self.pairs)

    def weight_amp(self, n: int) -> float:
        return self.pairs[n - 1][0]

    def bias_amp(self, n: int) -> float:
        return self.pairs[n - 1][1]

    @classmethod
    def uniform(cls, layer_count: int, weight_amp: float = 1.0,
                bias_amp: float = 0.0) -> "InitAmplitudes":
        return cls([(weight_amp, bias_amp)] * layer_count)


def init_weights(net: Network, amps: InitAmplitudes, rng) -> Network:
    """Draw every weight and bias of the network from its amplitude ranges.

    Layer n draws weights from +-Wn/(vn*hn) and biases from +-Bn, weights
    first, in layer order; all draws are independent and deterministic given
    the rng seed.  The amplitudes are recorded on the network for the
    diagnostic report.
    """
    params = net.param_layers()
    if len(amps) != len(params):
        raise ValueError(
            f"{len(amps)} amplitude pairs for {len(params)} parameterized layers"
        )
    rng = as_generator(rng)
    for ordinal, (_, layer) in enumerate(params, start=1):
        w_amp = amps.weight_amp(ordinal)
        b_amp = amps.bias_amp(ordinal)
        half = w_amp / (layer.bank.v * layer.bank.h)
        layer.bank.weights[:] = rng.uniform(-half, half,
                                            layer.bank.weights.shape)
        layer.bank.biases[:] = rng.uniform(-b_amp, b_amp,
                                           layer.bank.biases.shape)
    net.init_amplitudes = amps
    return net


def input_map_bound(amps: InitAmplitudes, n: int) -> float:
    """Upper bound on |input-map element| entering parameterized layer n.

    Layer 1 sees normalized samples, so its bound is 1; deeper layers carry
    the product of (B + W) over all preceding layers.
    """
    if not 1 <= n <= len(amps):
        raise IndexError(f"layer index {n} out of range 1..{len(amps)}")
    if n == 1:
        return 1.0
    return float(np.prod([amps.bias_amp(v) + amps.weight_amp(v)
                          for v in range(1, n)]))


def weight_derivative_bound(amps: InitAmplitudes, n: int,
                            max_loss_grad: float) -> float:
    """Upper bound on |dLoss/dw| for the weights of parameterized layer n.

    The last layer's bound scales the amplitude product by the largest
    loss-output derivative.  Inner layers use the printed product forms; the
    n = 1 case is just the second layer's weight amplitude, which is exact
    only for two-layer chains (it drops the deeper factors the n >= 2 case
    carries).  That asymmetry is reproduced as given rather than repaired.
    """
    last = len(amps)
    if not 1 <= n <= last:
        raise IndexError(f"layer index {n} out of range 1..{last}")
    if max_loss_grad < 0:
        raise ValueError("max_loss_grad must be >= 0")
    if n == last:
        return max_loss_grad * float(np.prod(
            [amps.bias_amp(v) + amps.weight_amp(v) for v in range(1, last)]
        ))
    if n >= 2:
        return amps.weight_amp(n + 1) * float(np.prod(
            [amps.bias_amp(v) + amps.weight_amp(v) for v in range(1, n + 1)]
        ))
    return amps.weight_amp(2)


DEFAULT_WINDOW = (0.01, 0.1)


@dataclass
class LayerDiagnostics:
    layer_index: int  # position in the network's layer list
    ordinal: int  # 1-based index among parameterized layers
    mav_input_map: float
    mav_activation_derivative: float
    mav_weights: float
    mav_bias_derivative: float
    mav_loss_weight_derivative: float
    input_bound: float | None
    weight_derivative_bound: float | None
    weight_share_count: int  # output positions sharing one weight


@dataclass
class DiagnosticReport:
    layers: list
    window: tuple
    probe_count: int
    max_loss_grad: float

    def flags(self):
        lo, hi = self.window
        out = []
        for ld in self.layers:
            if ld.mav_loss_weight_derivative < lo:
                out.append("LOW")
            elif ld.mav_loss_weight_derivative > hi:
                out.append("HIGH")
            else:
                out.append("ok")
        return out

    @property
    def all_in_window(self) -> bool:
        return all(f == "ok" for f in self.flags())


def _probe_max_loss_grad(net: Network, probe_batch) -> float:
    if net.loss is Loss.MAE:
        return 1.0 / net.output_size
    if net.loss is Loss.CROSS_ENTROPY:
        return 1.0  # |probability - one-hot target| never exceeds 1
    worst = 0.0
    for fmap, target in probe_batch:
        tr = forward(net, fmap)
        worst = max(worst, float(np.abs(
            loss_output_gradient(net.loss, tr, target)).max()))
    return worst


def diagnose(net: Network, probe_batch, window=DEFAULT_WINDOW) -> DiagnosticReport:
    """One forward and one backward per probe sample, with no update.

    MAVs are means of absolute values pooled over the batch and over the
    elements of each quantity.  Probes run in inference mode, so the numbers
    reflect the deterministic network.  Analytic bounds appear when the
    network was initialized through :func:`init_weights`.
    """
    if not probe_batch:
        raise ValueError("probe batch is empty")
    params = net.param_layers()
    sums = {li: np.zeros(4) for li, _ in params}  # inmap, deriv, bgrad, wgrad
    counts = {li: np.zeros(4) for li, _ in params}
    for fmap, target in probe_batch:
        trace = forward(net, fmap)
        grads = backward(net, trace, target)
        for li, layer in params:
            tr = trace.layers[li]
            _, deriv = activation_arrays(layer.activation, tr.pre_act.data)
            add = (
                np.abs(tr.input_map.data).sum(),
                np.abs(deriv).sum(),
                np.abs(grads.biases[li]).sum(),
                np.abs(grads.weights[li]).sum(),
            )
            size = (tr.input_map.data.size, deriv.size,
                    grads.biases[li].size, grads.weights[li].size)
            sums[li] += add
            counts[li] += size
    amps = net.init_amplitudes
    mlg = _probe_max_loss_grad(net, probe_batch)
    rows = []
    for ordinal, (li, layer) in enumerate(params, start=1):
        s, c = sums[li], counts[li]
        rows.append(LayerDiagnostics(
            layer_index=li,
            ordinal=ordinal,
            mav_input_map=s[0] / c[0],
            mav_activation_derivative=s[1] / c[1],
            mav_weights=float(np.abs(layer.bank.weights).mean()),
            mav_bias_derivative=s[2] / c[2],
            mav_loss_weight_derivative=s[3] / c[3],
            input_bound=None if amps is None else input_map_bound(amps, ordinal),
            weight_derivative_bound=(
                None if amps is None
                else weight_derivative_bound(amps, ordinal, mlg)
            ),
            weight_share_count=layer.out_dims[1] * layer.out_dims[2],
        ))
    return DiagnosticReport(rows, tuple(window), len(probe_batch), mlg)


def render_report(report: DiagnosticReport) -> str:
    """Fixed-width text table, one row per parameterized layer.

    Starred columns are MAVs of the layer input map, activation derivative,
    weights, and bias derivative; the triple-starred column is the MAV of the
    loss-weight derivatives, flagged LOW/HIGH outside the acceptable window.
    """
    headers = ("layer", "in_map *", "act_der *", "weights *", "bias_der *",
               "loss_w_der ***", "in_bound", "w_der_bound", "shared", "flag")
    lines = []
    rows = []
    for ld, flag in zip(report.layers, report.flags()):
        rows.append((
            str(ld.ordinal),
            f"{ld.mav_input_map:.2e}",
            f"{ld.mav_activation_derivative:.2e}",
            f"{ld.mav_weights:.2e}",
            f"{ld.mav_bias_derivative:.2e}",
            f"{ld.mav_loss_weight_derivative:.2e}",
            "-" if ld.input_bound is None else f"{ld.input_bound:.2e}",
            "-" if ld.weight_derivative_bound is None
            else f"{ld.weight_derivative_bound:.2e}",
            str(ld.weight_share_count),
            flag,
        ))
    widths = [max(len(h), *(len(r[i]) for r in rows))
              for i, h in enumerate(headers)]
    lines.append("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    lo, hi = report.window
    lines.append(
        f"acceptable loss-weight-derivative window: [{lo:g}, {hi:g}]  "
        f"(probes: {report.probe_count}, max loss gradient: "
        f"{report.max_loss_grad:.2e})"
    )
    return "\n".join(lines)
