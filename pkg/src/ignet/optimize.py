"""Mini-batch gradient descent: plain, momentum, and Nesterov variants.

Batch gradients are means over the batch, so the learning rate does not need
rescaling when the batch size changes.  Frozen weights and non-learning
biases are never touched and their velocity stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import Network
from .rng import as_generator

KINDS = ("plain", "momentum", "nag")


@dataclass
class OptimizerConfig:
    kind: str = "plain"
    learning_rate: float = 0.01
    momentum_coeff: float = 0.0
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum_coeff < 1.0:
            raise ValueError("momentum_coeff must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class OptimizerState:
    """Velocity buffers mirroring the network's parameters, zeroed at start."""

    def __init__(self, w_vel, b_vel):
        self.w_vel = w_vel
        self.b_vel = b_vel

    @classmethod
    def for_network(cls, net: Network) -> "OptimizerState":
        w_vel, b_vel = [], []
        for layer in net.layers:
            if layer.kind == "conv":
                w_vel.append(np.zeros_like(layer.bank.weights))
                b_vel.append(np.zeros_like(layer.bank.biases))
            else:
                w_vel.append(None)
                b_vel.append(None)
        return cls(w_vel, b_vel)


def _apply(param, vel, grad, frozen, cfg: OptimizerConfig):
    lr = cfg.learning_rate
    mu = cfg.momentum_coeff
    if cfg.kind == "plain":
        delta = -lr * grad
    elif cfg.kind == "momentum":
        vel *= mu
        vel -= lr * grad
        if frozen is not None:
            vel[frozen] = 0.0
        delta = vel.copy()
    else:  # nag, in the lookahead-parameter reformulation
        vel *= mu
        vel -= lr * grad
        if frozen is not None:
            vel[frozen] = 0.0
        delta = mu * vel - lr * grad
    if frozen is not None:
        delta = np.where(frozen, 0.0, delta)
    param += delta


def step(net: Network, grads, state: OptimizerState, cfg: OptimizerConfig,
         freeze_masks=None) -> None:
    """One parameter update in place.

    ``freeze_masks`` optionally overrides the masks stored on the layers
    (a list aligned with the network's layers).
    """
    for li, layer in net.param_layers():
        if grads.weights[li].shape != layer.bank.weights.shape:
            raise ValueError(f"gradient shape mismatch at layer {li}")
        frozen = layer.freeze_mask
        if freeze_masks is not None and freeze_masks[li] is not None:
            frozen = freeze_masks[li]
        _apply(layer.bank.weights, state.w_vel[li], grads.weights[li], frozen, cfg)
        if layer.bank.bias_learning:
            _apply(layer.bank.biases, state.b_vel[li], grads.biases[li], None, cfg)


def minibatch_iter(dataset, batch_size: int, rng):
    """Yield one epoch of batches: a seeded shuffle, then ceil(N/B) slices.

    Every element appears exactly once; the final batch may be short.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = as_generator(rng)
    order = rng.permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        yield [dataset[int(j)] for j in order[start:start + batch_size]]
