"""Feature maps, filter banks, and the convolution/pooling primitives.

Values are float64 throughout; the bound arithmetic in :mod:`ignet.initdiag`
depends on that headroom.  Layout is channel-major, row-major within a
channel, and kernels enumerate elements in that fixed order so serial and
parallel execution produce bit-identical results.

Convolution here is the cross-correlation form universal in CNN practice:
filters are not flipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GeometryError
from .parallel import run_items


class FeatureMap:
    """A channels x rows x cols grid of real values."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be 3-d, got shape {arr.shape}")
        self.data = arr

    @classmethod
    def zeros(cls, channels: int, rows: int, cols: int) -> "FeatureMap":
        return cls(np.zeros((channels, rows, cols)))

    @classmethod
    def from_2d(cls, grid) -> "FeatureMap":
        """Wrap a single-channel image."""
        arr = np.asarray(grid, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("from_2d expects a 2-d grid")
        return cls(arr[None, :, :])

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def copy(self) -> "FeatureMap":
        return FeatureMap(self.data.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"FeatureMap{self.data.shape}"


class FilterBank:
    """Per-layer weights (out x in x v x h), per-output biases, learning flag.

    When ``bias_learning`` is false the biases are never touched by an
    optimizer step; gradients for them are still computed and reported.
    """

    __slots__ = ("weights", "biases", "bias_learning")

    def __init__(self, weights, biases, bias_learning: bool = True):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        b = np.ascontiguousarray(biases, dtype=np.float64)
        if w.ndim != 4:
            raise ValueError(f"weights must be 4-d, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(
                f"biases shape {b.shape} does not match {w.shape[0]} out channels"
            )
        self.weights = w
        self.biases = b
        self.bias_learning = bool(bias_learning)

    @classmethod
    def zeros(cls, out_channels: int, in_channels: int, v: int, h: int,
              bias_learning: bool = True) -> "FilterBank":
        return cls(
            np.zeros((out_channels, in_channels, v, h)),
            np.zeros(out_channels),
            bias_learning,
        )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def v(self) -> int:
        return self.weights.shape[2]

    @property
    def h(self) -> int:
        return self.weights.shape[3]

    def copy(self) -> "FilterBank":
        return FilterBank(self.weights.copy(), self.biases.copy(), self.bias_learning)

    def __repr__(self):
        return (
            f"FilterBank(out={self.out_channels}, in={self.in_channels}, "
            f"v={self.v}, h={self.h}, bias_learning={self.bias_learning})"
        )


@dataclass(frozen=True)
class ConvGeometry:
    """Stride/padding knobs of a convolution.

    ``input_pad`` is a symmetric zero extension applied before the ordinary
    zero padding; both knobs share zero-fill semantics, so they simply add.
    """

    stride_v: int = 1
    stride_h: int = 1
    zero_pad_v: int = 0
    zero_pad_h: int = 0
    input_pad: int = 0

    def __post_init__(self):
        if self.stride_v < 1 or self.stride_h < 1:
            raise GeometryError("strides must be >= 1")
        if min(self.zero_pad_v, self.zero_pad_h, self.input_pad) < 0:
            raise GeometryError("pads must be >= 0")

    @property
    def pad_v(self) -> int:
        return self.zero_pad_v + self.input_pad

    @property
    def pad_h(self) -> int:
        return self.zero_pad_h + self.input_pad


@dataclass
class PoolIndices:
    """Argmax provenance of a max-pool output, for gradient routing."""

    rows: np.ndarray  # int64, channels x out_rows x out_cols
    cols: np.ndarray


def output_shape(input_dims, bank: FilterBank, geom: ConvGeometry):
    """Output (channels, rows, cols) of convolving ``input_dims`` with ``bank``.

    Raises :class:`GeometryError` when the filter does not fit at least once.
    """
    in_c, in_r, in_w = input_dims
    if bank.in_channels != in_c:
        raise GeometryError(
            f"bank expects {bank.in_channels} input channels, map has {in_c}"
        )
    rows = (in_r + 2 * geom.pad_v - bank.v) // geom.stride_v + 1
    cols = (in_w + 2 * geom.pad_h - bank.h) // geom.stride_h + 1
    if rows < 1 or cols < 1:
        raise GeometryError(
            f"filter {bank.v}x{bank.h} with geometry {geom} does not fit "
            f"input {in_r}x{in_w}"
        )
    return bank.out_channels, rows, cols


def pool_output_shape(input_dims, window_v, window_h, stride_v, stride_h):
    in_c, in_r, in_w = input_dims
    if window_v < 1 or window_h < 1 or stride_v < 1 or stride_h < 1:
        raise GeometryError("pool window and strides must be >= 1")
    rows = (in_r - window_v) // stride_v + 1
    cols = (in_w - window_h) // stride_h + 1
    if rows < 1 or cols < 1:
        raise GeometryError(
            f"pool window {window_v}x{window_h} does not fit input {in_r}x{in_w}"
        )
    return in_c, rows, cols


def convolve(fmap: FeatureMap, bank: FilterBank, geom: ConvGeometry) -> FeatureMap:
    """Cross-correlate the map with every filter and add the channel bias.

    Output values are pre-activation; activations are applied by the network
    layer that owns the bank.  The per-output-channel loop is delegated to
    the worker pool.
    """
    out_dims = output_shape(fmap.dims, bank, geom)
    out = np.empty(out_dims)
    work = _kernels.conv_forward_plan(
        fmap.data, bank.weights, bank.biases,
        geom.stride_v, geom.stride_h, geom.pad_v, geom.pad_h, out,
    )
    run_items(out_dims[0], work)
    return FeatureMap(out)


def max_pool(fmap: FeatureMap, window_v: int, window_h: int,
             stride_v: int, stride_h: int):
    """Window-maximum downsampling.

    Returns the pooled map and the argmax provenance used to route gradients.
    Ties break toward the first position in row-major window order.
    """
    out_dims = pool_output_shape(fmap.dims, window_v, window_h, stride_v, stride_h)
    out = np.empty(out_dims)
    arg_r = np.empty(out_dims, dtype=np.int64)
    arg_c = np.empty(out_dims, dtype=np.int64)
    work = _kernels.maxpool_forward_plan(
        fmap.data, window_v, window_h, stride_v, stride_h, out, arg_r, arg_c
    )
    run_items(out_dims[0], work)
    return FeatureMap(out), PoolIndices(arg_r, arg_c)


def conv_weight_gradients(fmap: FeatureMap, sens: np.ndarray, bank_dims,
                          geom: ConvGeometry):
    """Weight and bias gradients given output sensitivities ``sens``.

    ``sens`` holds the loss derivative of each pre-activation output element.
    """
    wgrad = np.empty(bank_dims)
    bgrad = np.empty(bank_dims[0])
    work = _kernels.conv_backward_weights_plan(
        fmap.data, sens, geom.stride_v, geom.stride_h, geom.pad_v, geom.pad_h,
        wgrad, bgrad,
    )
    run_items(bank_dims[0], work)
    return wgrad, bgrad


def conv_input_gradients(weights: np.ndarray, sens: np.ndarray, input_dims,
                         geom: ConvGeometry) -> np.ndarray:
    """Loss derivative of every input element, given output sensitivities."""
    igrad = np.empty(input_dims)
    work = _kernels.conv_backward_input_plan(
        weights, sens, geom.stride_v, geom.stride_h, geom.pad_v, geom.pad_h, igrad
    )
    run_items(input_dims[0], work)
    return igrad


def max_pool_input_gradients(sens: np.ndarray, prov: PoolIndices,
                             input_dims) -> np.ndarray:
    """Route pooled-output sensitivities back to their argmax source elements."""
    igrad = np.empty(input_dims)
    work = _kernels.maxpool_backward_plan(sens, prov.rows, prov.cols, igrad)
    run_items(input_dims[0], work)
    return igrad
