"""Binary model files.

Layout (all integers little-endian, floats little-endian IEEE 754 doubles):

    magic 'IGN1'
    u8  loss          0=mse 1=mae 2=crossentropy
    u32 input channels, rows, cols
    u32 layer count
    per layer:
      u8 kind         0=conv 1=maxpool 2=softmax
      conv:    u32 out,in,v,h; u32 stride_v,stride_h,zero_pad_v,zero_pad_h,
               input_pad; u8 activation (0=identity 1=relu 2=sigmoid
               3=bipolar_sigmoid); u8 bias_learning;
               f64 weights[out*in*v*h] row-major; f64 biases[out]
      maxpool: u32 window_v, window_h, stride_v, stride_h
      softmax: nothing
    per conv layer, in order:
      u8 has_freeze_mask; if 1: u8 mask[out*in*v*h] (0/1)
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ModelFormatError
from .net import Activation, ConvLayer, Loss, Network, PoolLayer, SoftmaxLayer
from .tensor import ConvGeometry, FilterBank, output_shape, pool_output_shape

MAGIC = b"IGN1"

_LOSS_CODES = {Loss.MSE: 0, Loss.MAE: 1, Loss.CROSS_ENTROPY: 2}
_ACT_CODES = {
    Activation.IDENTITY: 0,
    Activation.RELU: 1,
    Activation.SIGMOID: 2,
    Activation.BIPOLAR_SIGMOID: 3,
}
_KIND_CODES = {"conv": 0, "maxpool": 1, "softmax": 2}


def save_model(net: Network, path) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<B", _LOSS_CODES[net.loss])
    out += struct.pack("<III", *net.input_dims)
    out += struct.pack("<I", len(net.layers))
    for layer in net.layers:
        out += struct.pack("<B", _KIND_CODES[layer.kind])
        if layer.kind == "conv":
            bank = layer.bank
            geom = layer.geom
            out += struct.pack("<IIII", bank.out_channels, bank.in_channels,
                               bank.v, bank.h)
            out += struct.pack("<IIIII", geom.stride_v, geom.stride_h,
                               geom.zero_pad_v, geom.zero_pad_h,
                               geom.input_pad)
            out += struct.pack("<BB", _ACT_CODES[layer.activation],
                               int(bank.bias_learning))
            out += bank.weights.astype("<f8").tobytes()
            out += bank.biases.astype("<f8").tobytes()
        elif layer.kind == "maxpool":
            out += struct.pack("<IIII", layer.window_v, layer.window_h,
                               layer.stride_v, layer.stride_h)
    for _, layer in [(i, ly) for i, ly in enumerate(net.layers)
                     if ly.kind == "conv"]:
        if layer.freeze_mask is None:
            out += struct.pack("<B", 0)
        else:
            out += struct.pack("<B", 1)
            out += layer.freeze_mask.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"model file truncated at byte {self.pos} (wanted {n} more)"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(
            np.float64
        )


def load_model(path) -> Network:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ModelFormatError(f"{path}: bad magic, not a model file")
    loss_code, = r.unpack("<B")
    losses = {v: k for k, v in _LOSS_CODES.items()}
    if loss_code not in losses:
        raise ModelFormatError(f"{path}: unknown loss code {loss_code}")
    input_dims = r.unpack("<III")
    layer_count, = r.unpack("<I")
    acts = {v: k for k, v in _ACT_CODES.items()}
    layers = []
    dims = input_dims
    for pos in range(layer_count):
        kind, = r.unpack("<B")
        if kind == 0:
            oc, ic, v, h = r.unpack("<IIII")
            sv, sh, zpv, zph, ip = r.unpack("<IIIII")
            act_code, blearn = r.unpack("<BB")
            if act_code not in acts:
                raise ModelFormatError(
                    f"{path}: unknown activation code {act_code}"
                )
            weights = r.floats(oc * ic * v * h).reshape(oc, ic, v, h)
            biases = r.floats(oc)
            try:
                geom = ConvGeometry(sv, sh, zpv, zph, ip)
                bank = FilterBank(weights, biases, bool(blearn))
                out = output_shape(dims, bank, geom)
            except Exception as exc:
                raise ModelFormatError(f"{path}: layer {pos + 1}: {exc}") from exc
            layers.append(ConvLayer(bank, geom, acts[act_code], dims, out))
            dims = out
        elif kind == 1:
            wv, wh, sv, sh = r.unpack("<IIII")
            try:
                out = pool_output_shape(dims, wv, wh, sv, sh)
            except Exception as exc:
                raise ModelFormatError(f"{path}: layer {pos + 1}: {exc}") from exc
            layers.append(PoolLayer(wv, wh, sv, sh, dims, out))
            dims = out
        elif kind == 2:
            layers.append(SoftmaxLayer(dims))
        else:
            raise ModelFormatError(f"{path}: unknown layer kind {kind}")
    for layer in layers:
        if layer.kind != "conv":
            continue
        has_mask, = r.unpack("<B")
        if has_mask:
            count = layer.bank.weights.size
            mask = np.frombuffer(r.take(count), dtype=np.uint8)
            layer.freeze_mask = mask.astype(bool).reshape(
                layer.bank.weights.shape
            )
    if r.pos != len(data):
        raise ModelFormatError(
            f"{path}: {len(data) - r.pos} trailing bytes after model"
        )
    return Network(layers, losses[loss_code], input_dims)
