"""Shared builders for randomized test networks."""

import numpy as np

from ignet import (
    Activation,
    ConvSpec,
    DenseSpec,
    FeatureMap,
    Loss,
    PoolSpec,
    SoftmaxSpec,
    build_network,
    forward,
)

ALL_ACTIVATIONS = (Activation.IDENTITY, Activation.RELU, Activation.SIGMOID,
                   Activation.BIPOLAR_SIGMOID)


def fill_random(net, rng, scale=0.3):
    for _, layer in net.param_layers():
        layer.bank.weights[:] = rng.normal(0.0, scale, layer.bank.weights.shape)
        layer.bank.biases[:] = rng.normal(0.0, scale, layer.bank.biases.shape)
    return net


def random_net(rng, activations=ALL_ACTIVATIONS, with_softmax=None,
               max_channels=3):
    """A small random conv/pool/dense chain with materialized weights."""
    in_c = int(rng.integers(1, 3))
    rows = int(rng.integers(5, 8))
    cols = int(rng.integers(5, 8))
    act = activations[int(rng.integers(len(activations)))]
    specs = [ConvSpec(
        filters=int(rng.integers(1, max_channels + 1)),
        filter_v=int(rng.integers(2, 4)),
        filter_h=int(rng.integers(2, 4)),
        activation=act,
    )]
    if rng.random() < 0.5:
        specs.append(PoolSpec(2, 2, 1 + int(rng.integers(2)), 2))
    out_units = int(rng.integers(1, 4))
    specs.append(DenseSpec(units=out_units, activation=act))
    if with_softmax is None:
        with_softmax = rng.random() < 0.4
    if with_softmax and out_units >= 2:
        specs.append(SoftmaxSpec())
        loss = Loss.CROSS_ENTROPY
    else:
        loss = Loss.MSE if rng.random() < 0.5 else Loss.MAE
    net = build_network(specs, loss, (in_c, rows, cols))
    fill_random(net, rng)
    return net


def random_target(net, rng):
    k = net.output_size
    if net.loss is Loss.CROSS_ENTROPY:
        t = np.zeros(k)
        t[int(rng.integers(k))] = 1.0
        return t
    return rng.normal(0.0, 1.0, k)


def off_kink_input(net, rng, margin=1e-3, tries=50):
    """An input whose relu pre-activations stay away from the kink."""
    has_relu = any(ly.activation is Activation.RELU
                   for _, ly in net.param_layers())
    for _ in range(tries):
        fmap = FeatureMap(rng.random(net.input_dims))
        if not has_relu:
            return fmap
        trace = forward(net, fmap)
        ok = all(
            np.abs(trace.layers[li].pre_act.data).min() > margin
            for li, ly in net.param_layers()
            if ly.activation is Activation.RELU
        )
        if ok:
            return fmap
    raise AssertionError("could not find an off-kink input")
