import numpy as np
import pytest

from ignet import (
    ConvSpec,
    DenseSpec,
    FeatureMap,
    Loss,
    OptimizerConfig,
    OptimizerState,
    backward,
    build_network,
    forward,
    minibatch_iter,
    sample_mask,
    step,
)
from ignet.backprop import Gradients

from helpers import fill_random


def single_weight_net(w0=1.0, **spec_kw):
    net = build_network([ConvSpec(1, 1, 1, **spec_kw)], Loss.MSE, (1, 1, 1))
    net.layers[0].bank.weights[0, 0, 0, 0] = w0
    return net


def grads_with(net, wval, bval=0.0):
    g = Gradients.zeros_like(net)
    for li, _ in net.param_layers():
        g.weights[li][:] = wval
        g.biases[li][:] = bval
    return g


class TestStep:
    def test_plain_single_update(self):
        net = single_weight_net(1.0)
        state = OptimizerState.for_network(net)
        step(net, grads_with(net, 0.5), state,
             OptimizerConfig(kind="plain", learning_rate=0.1))
        assert net.layers[0].bank.weights[0, 0, 0, 0] == pytest.approx(0.95)

    def test_momentum_hand_iteration(self):
        net = single_weight_net(0.0)
        state = OptimizerState.for_network(net)
        cfg = OptimizerConfig(kind="momentum", learning_rate=0.1,
                              momentum_coeff=0.9)
        step(net, grads_with(net, 1.0), state, cfg)
        assert net.layers[0].bank.weights[0, 0, 0, 0] == pytest.approx(-0.1)
        step(net, grads_with(net, 1.0), state, cfg)
        assert state.w_vel[0][0, 0, 0, 0] == pytest.approx(-0.19)
        assert net.layers[0].bank.weights[0, 0, 0, 0] == pytest.approx(-0.29)

    @pytest.mark.parametrize("kind", ["momentum", "nag"])
    def test_zero_momentum_reproduces_plain_bitwise(self, kind):
        rng = np.random.default_rng(3)
        nets = [build_network([ConvSpec(2, 2, 2), DenseSpec(2)],
                              Loss.MSE, (1, 4, 4)) for _ in range(2)]
        for n in nets:
            fill_random(n, np.random.default_rng(55))
        cfgs = [OptimizerConfig(kind="plain", learning_rate=0.07),
                OptimizerConfig(kind=kind, learning_rate=0.07,
                                momentum_coeff=0.0)]
        states = [OptimizerState.for_network(n) for n in nets]
        for _ in range(5):
            x = FeatureMap(rng.random((1, 4, 4)))
            t = rng.normal(size=2)
            for n, c, s in zip(nets, cfgs, states):
                step(n, backward(n, forward(n, x), t), s, c)
        for la, lb in zip(nets[0].layers, nets[1].layers):
            assert np.array_equal(la.bank.weights, lb.bank.weights)

    def test_nag_differs_from_momentum_but_matches_lookahead_recursion(self):
        net = single_weight_net(0.0)
        state = OptimizerState.for_network(net)
        cfg = OptimizerConfig(kind="nag", learning_rate=0.1,
                              momentum_coeff=0.9)
        v = 0.0
        w = 0.0
        for g in [1.0, 1.0, -0.5]:
            step(net, grads_with(net, g), state, cfg)
            v = 0.9 * v - 0.1 * g
            w = w + 0.9 * v - 0.1 * g
        assert net.layers[0].bank.weights[0, 0, 0, 0] == pytest.approx(w)

    def test_quadratic_descent_decreases_loss(self):
        # L(w) = (w*x - t)^2 with curvature 2x^2; lr below 1/(2x^2) descends
        net = single_weight_net(3.0)
        x = FeatureMap(np.array([[[1.0]]]))
        t = [1.0]
        cfg = OptimizerConfig(kind="plain", learning_rate=0.2)
        state = OptimizerState.for_network(net)
        losses = []
        for _ in range(10):
            trace = forward(net, x)
            losses.append((trace.outputs[0] - 1.0) ** 2)
            step(net, backward(net, trace, t), state, cfg)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_nonlearning_biases_untouched_velocity_zero(self):
        net = single_weight_net(1.0, bias_learning=False)
        net.layers[0].bank.biases[0] = 0.25
        state = OptimizerState.for_network(net)
        cfg = OptimizerConfig(kind="momentum", learning_rate=0.1,
                              momentum_coeff=0.9)
        for _ in range(50):
            step(net, grads_with(net, 1.0, bval=2.0), state, cfg)
        assert net.layers[0].bank.biases[0] == 0.25
        assert state.b_vel[0][0] == 0.0

    def test_frozen_weights_bit_identical_velocity_zero(self):
        rng = np.random.default_rng(21)
        net = build_network([ConvSpec(2, 2, 2), DenseSpec(1)],
                            Loss.MSE, (1, 4, 4))
        fill_random(net, rng)
        mask = sample_mask(net.layers[0].bank.weights.shape, 0.5, 9)
        net.layers[0].freeze_mask = mask
        before = net.layers[0].bank.weights.copy()
        state = OptimizerState.for_network(net)
        cfg = OptimizerConfig(kind="nag", learning_rate=0.05,
                              momentum_coeff=0.8)
        for _ in range(100):
            g = Gradients.zeros_like(net)
            g.weights[0][:] = rng.normal(size=g.weights[0].shape)
            g.weights[1][:] = rng.normal(size=g.weights[1].shape)
            step(net, g, state, cfg)
        assert np.array_equal(net.layers[0].bank.weights[mask], before[mask])
        assert np.all(state.w_vel[0][mask] == 0.0)

    def test_shape_mismatch_rejected(self):
        net = single_weight_net()
        other = build_network([ConvSpec(2, 1, 1)], Loss.MSE, (1, 1, 1))
        state = OptimizerState.for_network(net)
        with pytest.raises(ValueError):
            step(net, Gradients.zeros_like(other), state, OptimizerConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(kind="adam")
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            OptimizerConfig(momentum_coeff=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig(batch_size=0)


class TestMinibatchIter:
    def test_partition_sizes(self):
        batches = list(minibatch_iter(list(range(100)), 32, 0))
        assert [len(b) for b in batches] == [32, 32, 32, 4]

    def test_every_sample_exactly_once(self):
        batches = list(minibatch_iter(list(range(100)), 32, 5))
        flat = [x for b in batches for x in b]
        assert sorted(flat) == list(range(100))

    def test_batch_larger_than_dataset_gives_full_gradient_descent(self):
        batches = list(minibatch_iter(list(range(10)), 64, 0))
        assert len(batches) == 1 and len(batches[0]) == 10

    def test_same_seed_replays_identically(self):
        a = list(minibatch_iter(list(range(50)), 8, 1234))
        b = list(minibatch_iter(list(range(50)), 8, 1234))
        assert a == b

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            list(minibatch_iter([], 4, 0))


class TestBatchAggregation:
    def test_batch_gradient_is_mean_of_per_sample_gradients(self):
        rng = np.random.default_rng(31)
        net = build_network([ConvSpec(2, 2, 2), DenseSpec(2)],
                            Loss.MSE, (1, 4, 4))
        fill_random(net, rng)
        batch = [(FeatureMap(rng.random((1, 4, 4))), rng.normal(size=2))
                 for _ in range(6)]
        acc = Gradients.zeros_like(net)
        per_sample = []
        for x, t in batch:
            g = backward(net, forward(net, x), t)
            per_sample.append(g)
            acc.add_(g)
        acc.scale_(1.0 / len(batch))
        for li, _ in net.param_layers():
            stacked = np.mean([g.weights[li] for g in per_sample], axis=0)
            np.testing.assert_allclose(acc.weights[li], stacked,
                                       rtol=1e-12, atol=1e-15)
