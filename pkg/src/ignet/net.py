"""Layer specifications, activations, losses, and the forward pass.

A network is a pure chain of layers.  Fully connected layers are represented
as convolutions whose filter extent equals the input extent, so one weight
format and one pair of gradient kernels cover everything.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeChainError
from .regularize import apply_dropout, sample_mask
from .tensor import (
    ConvGeometry,
    FeatureMap,
    FilterBank,
    PoolIndices,
    convolve,
    max_pool,
    output_shape,
    pool_output_shape,
)

CROSS_ENTROPY_FLOOR = 1e-12


class Activation(enum.Enum):
    IDENTITY = "identity"
    RELU = "relu"
    SIGMOID = "sigmoid"
    BIPOLAR_SIGMOID = "bipolar_sigmoid"


class Loss(enum.Enum):
    MSE = "mse"
    MAE = "mae"
    CROSS_ENTROPY = "crossentropy"


def activation_arrays(act: Activation, z: np.ndarray):
    """Vectorized (value, derivative) of an activation at ``z``."""
    if act is Activation.IDENTITY:
        return z.copy(), np.ones_like(z)
    if act is Activation.RELU:
        return np.maximum(z, 0.0), (z > 0.0).astype(np.float64)
    if act is Activation.SIGMOID:
        val = 0.5 * (1.0 + np.tanh(0.5 * z))
        return val, val * (1.0 - val)
    if act is Activation.BIPOLAR_SIGMOID:
        # 2/(1+exp(-z)) - 1, computed through tanh for stability
        val = np.tanh(0.5 * z)
        return val, 0.5 * (1.0 - val * val)
    raise ValueError(f"unknown activation {act}")


def activation_eval(act: Activation, x: float):
    """Scalar (value, derivative); the relu derivative at 0 is defined as 0."""
    val, der = activation_arrays(act, np.asarray([float(x)]))
    return float(val[0]), float(der[0])


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Layer specifications (configuration level)

@dataclass
class ConvSpec:
    filters: int
    filter_v: int
    filter_h: int
    geom: ConvGeometry = field(default_factory=ConvGeometry)
    activation: Activation = Activation.IDENTITY
    bias_learning: bool = True
    dropout: float = 0.0
    dropconnect: float = 0.0
    freezeconnect: float = 0.0
    freeze_resample: str = "per_run"


@dataclass
class PoolSpec:
    window_v: int
    window_h: int
    stride_v: int = 0  # 0: same as window
    stride_h: int = 0
    dropout: float = 0.0


@dataclass
class DenseSpec:
    units: int
    activation: Activation = Activation.IDENTITY
    bias_learning: bool = True
    dropout: float = 0.0
    dropconnect: float = 0.0
    freezeconnect: float = 0.0
    freeze_resample: str = "per_run"


@dataclass
class SoftmaxSpec:
    pass


# ---------------------------------------------------------------------------
# Materialized layers

class ConvLayer:
    def __init__(self, bank: FilterBank, geom: ConvGeometry,
                 activation: Activation, in_dims, out_dims,
                 dropout: float = 0.0, dropconnect: float = 0.0,
                 freezeconnect: float = 0.0, freeze_resample: str = "per_run"):
        self.bank = bank
        self.geom = geom
        self.activation = activation
        self.in_dims = tuple(in_dims)
        self.out_dims = tuple(out_dims)
        self.dropout = dropout
        self.dropconnect = dropconnect
        self.freezeconnect = freezeconnect
        self.freeze_resample = freeze_resample
        self.freeze_mask: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "conv"

    def clone(self) -> "ConvLayer":
        dup = ConvLayer(
            self.bank.copy(), self.geom, self.activation, self.in_dims,
            self.out_dims, self.dropout, self.dropconnect,
            self.freezeconnect, self.freeze_resample,
        )
        if self.freeze_mask is not None:
            dup.freeze_mask = self.freeze_mask.copy()
        return dup


class PoolLayer:
    def __init__(self, window_v, window_h, stride_v, stride_h, in_dims,
                 out_dims, dropout: float = 0.0):
        self.window_v = window_v
        self.window_h = window_h
        self.stride_v = stride_v
        self.stride_h = stride_h
        self.in_dims = tuple(in_dims)
        self.out_dims = tuple(out_dims)
        self.dropout = dropout

    @property
    def kind(self) -> str:
        return "maxpool"

    def clone(self) -> "PoolLayer":
        return PoolLayer(self.window_v, self.window_h, self.stride_v,
                         self.stride_h, self.in_dims, self.out_dims, self.dropout)


class SoftmaxLayer:
    def __init__(self, in_dims):
        self.in_dims = tuple(in_dims)
        self.out_dims = tuple(in_dims)

    @property
    def kind(self) -> str:
        return "softmax"

    def clone(self) -> "SoftmaxLayer":
        return SoftmaxLayer(self.in_dims)


class Network:
    """An ordered layer chain with exactly one loss."""

    def __init__(self, layers, loss: Loss, input_dims):
        self.layers = list(layers)
        self.loss = loss
        self.input_dims = tuple(input_dims)
        self.init_amplitudes = None  # recorded by initdiag.init_weights

    @property
    def output_dims(self):
        return self.layers[-1].out_dims

    @property
    def output_size(self) -> int:
        c, r, w = self.output_dims
        return c * r * w

    def param_layers(self):
        """(network index, ConvLayer) for every layer carrying parameters."""
        return [(i, ly) for i, ly in enumerate(self.layers) if ly.kind == "conv"]

    def clone(self) -> "Network":
        dup = Network([ly.clone() for ly in self.layers], self.loss, self.input_dims)
        dup.init_amplitudes = self.init_amplitudes
        return dup


def build_network(specs, loss: Loss, input_dims) -> Network:
    """Materialize layer specs into a shape-checked network with zeroed banks."""
    if not specs:
        raise ShapeChainError("network needs at least one layer")
    layers = []
    dims = tuple(input_dims)
    for pos, spec in enumerate(specs):
        label = f"layer {pos + 1} ({type(spec).__name__})"
        if isinstance(spec, SoftmaxSpec):
            if pos != len(specs) - 1:
                raise ShapeChainError(f"{label}: softmax must be the last layer")
            layers.append(SoftmaxLayer(dims))
            continue
        if isinstance(spec, ConvSpec):
            bank = FilterBank.zeros(
                spec.filters, dims[0], spec.filter_v, spec.filter_h,
                spec.bias_learning,
            )
            geom = spec.geom
        elif isinstance(spec, DenseSpec):
            # fully connected: the filter covers the whole input map
            bank = FilterBank.zeros(
                spec.units, dims[0], dims[1], dims[2], spec.bias_learning
            )
            geom = ConvGeometry()
        elif isinstance(spec, PoolSpec):
            sv = spec.stride_v or spec.window_v
            sh = spec.stride_h or spec.window_h
            try:
                out = pool_output_shape(dims, spec.window_v, spec.window_h, sv, sh)
            except Exception as exc:
                raise ShapeChainError(f"{label}: {exc}") from exc
            layers.append(PoolLayer(spec.window_v, spec.window_h, sv, sh,
                                    dims, out, spec.dropout))
            dims = out
            continue
        else:
            raise ShapeChainError(f"{label}: unknown spec type")
        try:
            out = output_shape(dims, bank, geom)
        except Exception as exc:
            raise ShapeChainError(f"{label}: {exc}") from exc
        layers.append(ConvLayer(
            bank, geom, spec.activation, dims, out,
            spec.dropout, spec.dropconnect, spec.freezeconnect,
            spec.freeze_resample,
        ))
        dims = out
    has_softmax = layers[-1].kind == "softmax"
    if loss is Loss.CROSS_ENTROPY and not has_softmax:
        raise ShapeChainError("cross-entropy requires a softmax last layer")
    if has_softmax and loss is not Loss.CROSS_ENTROPY:
        raise ShapeChainError(
            "a softmax last layer requires the cross-entropy loss"
        )
    return Network(layers, loss, input_dims)


# ---------------------------------------------------------------------------
# Forward pass

@dataclass
class LayerTrace:
    input_map: FeatureMap
    pre_act: FeatureMap | None = None
    post_act: FeatureMap | None = None
    pool_prov: PoolIndices | None = None
    dropout_mask: np.ndarray | None = None
    dropout_rate: float = 0.0
    dropconnect_mask: np.ndarray | None = None


@dataclass
class ForwardTrace:
    layers: list
    outputs: np.ndarray  # flattened final map (post softmax when present)
    mode: str


def forward(net: Network, fmap: FeatureMap, mode: str = "inference",
            rng=None) -> ForwardTrace:
    """Run the chain, recording every intermediate map.

    In train mode dropout/dropconnect masks are sampled from ``rng`` and
    recorded in the trace; in inference mode no masks apply.
    """
    if mode not in ("train", "inference"):
        raise ValueError(f"unknown mode {mode!r}")
    if fmap.dims != net.input_dims:
        raise ShapeChainError(
            f"input dims {fmap.dims} do not match network input {net.input_dims}"
        )
    train = mode == "train"
    traces = []
    current = fmap
    for layer in net.layers:
        tr = LayerTrace(input_map=current)
        if layer.kind == "softmax":
            flat = current.data.ravel()
            tr.pre_act = current
            probs = softmax(flat)
            tr.post_act = FeatureMap(probs.reshape(current.dims))
            current = tr.post_act
        elif layer.kind == "maxpool":
            pooled, prov = max_pool(current, layer.window_v, layer.window_h,
                                    layer.stride_v, layer.stride_h)
            tr.pool_prov = prov
            current = pooled
            if train and layer.dropout > 0.0:
                current, mask = apply_dropout(current, layer.dropout, rng, mode)
                tr.dropout_mask = mask
                tr.dropout_rate = layer.dropout
            tr.post_act = current
        else:
            bank = layer.bank
            if train and layer.dropconnect > 0.0:
                dc = sample_mask(bank.weights.shape, layer.dropconnect, rng)
                tr.dropconnect_mask = dc
                bank = FilterBank(np.where(dc, 0.0, bank.weights), bank.biases,
                                  bank.bias_learning)
            pre = convolve(current, bank, layer.geom)
            tr.pre_act = pre
            val, _ = activation_arrays(layer.activation, pre.data)
            current = FeatureMap(val)
            if train and layer.dropout > 0.0:
                current, mask = apply_dropout(current, layer.dropout, rng, mode)
                tr.dropout_mask = mask
                tr.dropout_rate = layer.dropout
            tr.post_act = current
        traces.append(tr)
    return ForwardTrace(traces, current.data.ravel().copy(), mode)


# ---------------------------------------------------------------------------
# Losses

def _check_lengths(output, target):
    if len(output) != len(target):
        raise ValueError(
            f"output length {len(output)} != target length {len(target)}"
        )


def loss_eval(loss: Loss, output, target) -> float:
    """Loss of a flat output vector against a flat target.

    For cross-entropy ``output`` is the probability vector and probabilities
    are floored at 1e-12 before the logarithm.
    """
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_lengths(output, target)
    if loss is Loss.MSE:
        return float(np.mean((output - target) ** 2))
    if loss is Loss.MAE:
        return float(np.mean(np.abs(output - target)))
    if loss is Loss.CROSS_ENTROPY:
        return float(-np.sum(target * np.log(np.maximum(output, CROSS_ENTROPY_FLOOR))))
    raise ValueError(f"unknown loss {loss}")


def loss_output_gradient(loss: Loss, trace: ForwardTrace, target) -> np.ndarray:
    """Loss derivative with respect to the last pre-softmax neurons.

    MSE and MAE are means over the K outputs, so their gradients carry 1/K.
    With a softmax last layer the cross-entropy gradient is the fused
    probabilities-minus-target form.
    """
    target = np.asarray(target, dtype=np.float64)
    out = trace.outputs
    _check_lengths(out, target)
    k = out.size
    if loss is Loss.MSE:
        return 2.0 * (out - target) / k
    if loss is Loss.MAE:
        return np.sign(out - target) / k
    if loss is Loss.CROSS_ENTROPY:
        return out - target
    raise ValueError(f"unknown loss {loss}")
