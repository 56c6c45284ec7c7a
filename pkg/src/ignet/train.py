"""Stratified cross-validation harness with repeated per-fold learning,
tolerance-based early stopping, and metric evaluation.

One network learns the folds sequentially: up to ``repeats_per_fold`` passes
over each fold's training portion, with test and validation metrics recorded
after every pass.  The validation part is held out before folding and never
participates in learning.  Given a seed, the whole run is bit-reproducible
for any worker count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .backprop import Gradients, backward
from .data import EncoderSpec, encode_onehot, regression_target
from .errors import DivergenceError
from .net import Network, forward, loss_eval
from .optimize import OptimizerConfig, OptimizerState, minibatch_iter, step
from .regularize import sample_mask
from .rng import as_generator, derive

TASKS = ("classify", "regress")


@dataclass
class CvConfig:
    folds: int = 5
    repeats_per_fold: int = 10
    tolerance: int = 7
    validation_fraction: float = 1.0 / 6.0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.tolerance < 1:
            raise ValueError("tolerance must be >= 1")
        if self.repeats_per_fold < 1:
            raise ValueError("repeats_per_fold must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class Metrics:
    accuracy: float = 0.0  # percent of right guesses (classification)
    mape: float = 0.0  # percent (regression, zero targets excluded)
    mae: float = 0.0
    loss: float = 0.0

    def primary(self, task: str) -> float:
        return self.accuracy if task == "classify" else self.mape


@dataclass
class HistoryRow:
    epoch: int
    fold: int
    pass_num: int
    train_loss: float
    test: Metrics
    validation: Metrics


@dataclass
class TrainHistory:
    task: str
    rows: list = field(default_factory=list)
    fold_outcomes: dict = field(default_factory=dict)  # fold -> stop reason

    @property
    def epochs_run(self) -> int:
        return len(self.rows)

    def to_csv_text(self) -> str:
        lines = ["epoch,fold,pass,train_loss,test_metric,validation_metric"]
        for r in self.rows:
            lines.append(
                f"{r.epoch},{r.fold},{r.pass_num},{float(r.train_loss)!r},"
                f"{float(r.test.primary(self.task))!r},"
                f"{float(r.validation.primary(self.task))!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.to_csv_text())


@dataclass
class LabeledExample:
    """An input map with its target vector, ready for the loss."""

    image: object  # FeatureMap
    target: np.ndarray
    uid: str = ""


class StratumSizeWarning(UserWarning):
    """Some stratum has fewer members than the fold count."""


def stratified_kfold(dataset, k: int, strata, rng) -> list:
    """Split indices into k disjoint folds preserving stratum proportions.

    ``strata`` is either a per-item key sequence or a callable applied to the
    items.  Each stratum is shuffled and dealt round-robin, with the starting
    fold rotating between strata so fold sizes balance; per-fold stratum
    counts differ from the exact proportion by at most one sample.  Strata
    smaller than k are flagged with a warning and still dealt.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = len(dataset)
    keys = ([strata(x) for x in dataset] if callable(strata)
            else list(strata))
    if len(keys) != n:
        raise ValueError("strata length does not match dataset length")
    rng = as_generator(rng)
    by_stratum = {}
    for idx, key in enumerate(keys):
        by_stratum.setdefault(key, []).append(idx)
    small = sorted(str(key) for key, members in by_stratum.items()
                   if len(members) < k)
    if small:
        warnings.warn(
            f"strata smaller than {k} folds: {', '.join(small)}",
            StratumSizeWarning,
            stacklevel=2,
        )
    folds = [[] for _ in range(k)]
    offset = 0
    for key in sorted(by_stratum, key=str):
        members = by_stratum[key]
        order = rng.permutation(len(members))
        for j, pick in enumerate(order):
            folds[(j + offset) % k].append(members[int(pick)])
        offset = (offset + len(members)) % k
    return [sorted(f) for f in folds]


def stratified_split(n: int, fraction: float, strata, rng):
    """(rest indices, held-out indices) preserving stratum proportions."""
    rng = as_generator(rng)
    keys = list(strata)
    by_stratum = {}
    for idx in range(n):
        by_stratum.setdefault(keys[idx], []).append(idx)
    held, rest = [], []
    for key in sorted(by_stratum, key=str):
        members = by_stratum[key]
        order = rng.permutation(len(members))
        take = round(fraction * len(members))
        for j, pick in enumerate(order):
            (held if j < take else rest).append(members[int(pick)])
    return sorted(rest), sorted(held)


def early_stop_check(history, tolerance: int,
                     higher_is_better: bool = True) -> str:
    """'stop' when the last ``tolerance`` evaluations all failed to improve
    on the best value seen so far, else 'continue'."""
    if tolerance < 1:
        raise ValueError("tolerance must be >= 1")
    best = None
    streak = 0
    for value in history:
        improved = best is None or (
            value > best if higher_is_better else value < best
        )
        if improved:
            best = value
            streak = 0
        else:
            streak += 1
    return "stop" if streak >= tolerance else "continue"


def evaluate(net: Network, examples, task: str) -> Metrics:
    """Accuracy for classification; MAPE and MAE for regression.

    The prediction is the argmax of the final output (classification) or the
    single output value (regression).  MAPE skips zero targets, which the MAE
    still covers.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if not examples:
        raise ValueError("no samples to evaluate")
    loss_sum = 0.0
    if task == "classify":
        correct = 0
        for ex in examples:
            out = forward(net, ex.image).outputs
            loss_sum += loss_eval(net.loss, out, ex.target)
            if int(np.argmax(out)) == int(np.argmax(ex.target)):
                correct += 1
        return Metrics(accuracy=100.0 * correct / len(examples),
                       loss=loss_sum / len(examples))
    abs_err_sum = 0.0
    pct_sum = 0.0
    pct_n = 0
    for ex in examples:
        out = forward(net, ex.image).outputs
        loss_sum += loss_eval(net.loss, out, ex.target)
        pred = float(out[0])
        true = float(ex.target[0])
        abs_err_sum += abs(pred - true)
        if true != 0.0:
            pct_sum += abs(pred - true) / abs(true)
            pct_n += 1
    return Metrics(
        mape=100.0 * pct_sum / pct_n if pct_n else 0.0,
        mae=abs_err_sum / len(examples),
        loss=loss_sum / len(examples),
    )


def prepare_classification(samples, spec: EncoderSpec):
    """(examples, strata keys, category table) for a classification run."""
    records = [s.label for s in samples]
    table, vectors = encode_onehot(records, spec)
    examples = [
        LabeledExample(s.image, vectors[i], s.name or str(i))
        for i, s in enumerate(samples)
    ]
    strata = [int(np.argmax(vectors[i])) for i in range(len(samples))]
    return examples, strata, table


def prepare_regression(samples):
    """(examples, strata keys); strata follow the age-category label."""
    examples = [
        LabeledExample(s.image, np.array([regression_target(s.label)]),
                       s.name or str(i))
        for i, s in enumerate(samples)
    ]
    strata = [s.label.age_category for s in samples]
    return examples, strata


def _resample_freeze(net: Network, seed: int, schedule: str, key: int) -> None:
    for li, layer in net.param_layers():
        if layer.freezeconnect > 0.0 and layer.freeze_resample == schedule:
            layer.freeze_mask = sample_mask(
                layer.bank.weights.shape, layer.freezeconnect,
                derive(seed, 7, li, key),
            )


def _train_batch(net, batch, state, opt: OptimizerConfig, rng) -> float:
    total = Gradients.zeros_like(net)
    loss_sum = 0.0
    for ex in batch:  # reduction ordered by sample index
        trace = forward(net, ex.image, "train", rng)
        loss_sum += loss_eval(net.loss, trace.outputs, ex.target)
        total.add_(backward(net, trace, ex.target))
    total.scale_(1.0 / len(batch))
    mean_loss = loss_sum / len(batch)
    if not np.isfinite(mean_loss) or not total.is_finite():
        raise DivergenceError(f"non-finite loss/gradient ({mean_loss})")
    step(net, total, state, opt)
    return mean_loss


def train(net: Network, examples, strata, cv: CvConfig, opt: OptimizerConfig,
          task: str, seed: int):
    """Run the full cross-validated learning procedure.

    The dataset splits into a learn-test part and a held-out validation part;
    the learn-test part folds k ways.  Each fold trains up to
    ``repeats_per_fold`` passes, evaluating test and validation metrics after
    every pass, and stops early once the validation metric fails to improve
    ``tolerance`` times in a row.  Optimizer state carries across passes and
    folds (continuous training of one network).
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if len(examples) != len(strata):
        raise ValueError("examples and strata lengths differ")
    learn_idx, val_idx = stratified_split(
        len(examples), cv.validation_fraction, strata, derive(seed, 1)
    )
    if not val_idx or not learn_idx:
        raise ValueError("validation split left one side empty")
    learn = [examples[i] for i in learn_idx]
    learn_strata = [strata[i] for i in learn_idx]
    validation = [examples[i] for i in val_idx]
    folds = stratified_kfold(learn, cv.folds, learn_strata, derive(seed, 2))
    state = OptimizerState.for_network(net)
    _resample_freeze(net, seed, "per_run", 0)
    history = TrainHistory(task)
    higher_better = task == "classify"
    epoch = 0
    batch_counter = 0
    for fold in range(cv.folds):
        test_set = [learn[i] for i in folds[fold]]
        train_set = [ex for f in range(cv.folds) if f != fold
                     for ex in (learn[i] for i in folds[f])]
        stop_reason = "completed"
        val_history = []
        for pass_num in range(1, cv.repeats_per_fold + 1):
            epoch += 1
            _resample_freeze(net, seed, "per_epoch", epoch)
            mask_rng = derive(seed, 5, epoch)
            batch_losses = []
            for batch in minibatch_iter(train_set, opt.batch_size,
                                        derive(seed, 3, epoch)):
                batch_counter += 1
                _resample_freeze(net, seed, "per_batch", batch_counter)
                batch_losses.append(
                    _train_batch(net, batch, state, opt, mask_rng)
                )
            test_m = evaluate(net, test_set, task)
            val_m = evaluate(net, validation, task)
            history.rows.append(HistoryRow(
                epoch, fold, pass_num,
                float(np.mean(batch_losses)), test_m, val_m,
            ))
            val_history.append(val_m.primary(task))
            if early_stop_check(val_history, cv.tolerance,
                                higher_better) == "stop":
                stop_reason = "early_stop"
                break
        history.fold_outcomes[fold] = stop_reason
    return net, history
