"""Dropout, dropconnect, and freezeconnect weight-masking policies.

Weight masks select an exact fraction of positions without replacement.
Dropout, by contrast, zeroes neurons by independent Bernoulli draws (the
conventional form), so its survivor count is binomial rather than exact;
the asymmetry is deliberate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import as_generator

RESAMPLE_SCHEDULES = ("per_run", "per_epoch", "per_batch")


@dataclass(frozen=True)
class RegularizerSpec:
    """A per-layer policy: kind in {dropout, dropconnect, freezeconnect}."""

    kind: str
    rate: float
    resample: str = "per_run"  # freezeconnect only

    def __post_init__(self):
        if self.kind not in ("dropout", "dropconnect", "freezeconnect"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must lie in [0, 1]")
        if self.resample not in RESAMPLE_SCHEDULES:
            raise ValueError(f"unknown resample schedule {self.resample!r}")


def sample_mask(shape, rate: float, rng) -> np.ndarray:
    """Boolean mask selecting exactly round(rate * count) positions.

    Selection is uniform without replacement and deterministic per seed.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    rng = as_generator(rng)
    count = int(np.prod(shape))
    k = round(rate * count)
    mask = np.zeros(count, dtype=bool)
    if k:
        mask[rng.choice(count, size=k, replace=False)] = True
    return mask.reshape(shape)


def apply_dropout(fmap, rate: float, rng, mode: str):
    """Inverted dropout on a feature map.

    Train mode zeroes each neuron independently with probability ``rate`` and
    scales survivors by 1/(1-rate); inference mode is the identity, so no
    correction is needed at prediction time.  Returns (map, mask); the mask is
    None when nothing was applied.
    """
    from .tensor import FeatureMap  # local import to avoid a cycle

    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1); 1 kills the layer")
    if mode == "inference" or rate == 0.0:
        return fmap, None
    rng = as_generator(rng)
    keep = rng.random(fmap.data.shape) >= rate
    scaled = fmap.data * keep / (1.0 - rate)
    return FeatureMap(scaled), keep


def apply_dropconnect(bank, mask: np.ndarray):
    """A bank view whose masked weights behave as zero.

    Masked weights contribute nothing to the forward convolution and receive
    zero gradient; biases are shared with the original bank.
    """
    from .tensor import FilterBank

    if mask.shape != bank.weights.shape:
        raise ValueError(
            f"mask shape {mask.shape} != weights shape {bank.weights.shape}"
        )
    return FilterBank(np.where(mask, 0.0, bank.weights), bank.biases,
                      bank.bias_learning)


def apply_freezeconnect(bank, mask: np.ndarray) -> np.ndarray:
    """Validate and return a frozen-weight annotation for the optimizer.

    Frozen weights stay in every convolution and keep receiving gradients;
    only their updates are suppressed.  The returned mask is what the
    optimizer consults.
    """
    if mask.shape != bank.weights.shape:
        raise ValueError(
            f"mask shape {mask.shape} != weights shape {bank.weights.shape}"
        )
    return mask
