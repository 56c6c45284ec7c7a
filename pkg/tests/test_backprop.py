import numpy as np
import pytest

import ignet.backprop as bp
from ignet import (
    Activation,
    ConvGeometry,
    ConvSpec,
    DenseSpec,
    FeatureMap,
    FilterBank,
    Loss,
    PoolSpec,
    SoftmaxSpec,
    backward,
    build_network,
    finite_diff_gradient,
    forward,
    gradient_check,
)
from ignet.backprop import neuron_links, weight_links
from ignet.net import activation_arrays, loss_output_gradient
from ignet.regularize import sample_mask

from helpers import fill_random, off_kink_input, random_net, random_target


def chain_1x1(w1=3.0, w2=4.0, loss=Loss.MSE):
    net = build_network([ConvSpec(1, 1, 1), ConvSpec(1, 1, 1)], loss, (1, 1, 1))
    net.layers[0].bank.weights[0, 0, 0, 0] = w1
    net.layers[1].bank.weights[0, 0, 0, 0] = w2
    return net


class TestHandDerived:
    def test_two_weight_identity_chain(self):
        # input 2, w1=3, w2=4, identity, mean-square loss on one output,
        # target 0: output 24, dL/dN = 48, dL/dw2 = 48*6, dL/dw1 = 48*4*2
        net = chain_1x1()
        trace = forward(net, FeatureMap(np.array([[[2.0]]])))
        grads = backward(net, trace, [0.0])
        assert grads.weights[1][0, 0, 0, 0] == 288.0
        assert grads.weights[0][0, 0, 0, 0] == 384.0

    def test_exact_fit_under_mae_gives_zero_gradients(self):
        net = chain_1x1()
        net.loss = Loss.MAE
        trace = forward(net, FeatureMap(np.array([[[2.0]]])))
        grads = backward(net, trace, trace.outputs.copy())
        assert np.all(grads.weights[0] == 0.0)
        assert np.all(grads.weights[1] == 0.0)
        assert np.all(grads.biases[0] == 0.0)

    def test_bias_gradient_sums_over_positions_sharing_it(self):
        # one 2x2 output channel, identity, mean-square target 0: the bias
        # derivative is the sum of all four output sensitivities
        net = build_network([ConvSpec(1, 2, 2)], Loss.MSE, (1, 3, 3))
        net.layers[0].bank.weights[:] = 0.25
        trace = forward(net, FeatureMap(np.arange(9.0).reshape(1, 3, 3)))
        grads = backward(net, trace, np.zeros(4))
        expect = loss_output_gradient(Loss.MSE, trace, np.zeros(4)).sum()
        assert grads.biases[0][0] == pytest.approx(expect, rel=1e-12)


class TestFiniteDifferenceOracle:
    def test_quadratic_single_weight(self):
        # loss = w^2 at w=3: derivative 6
        net = build_network([ConvSpec(1, 1, 1)], Loss.MSE, (1, 1, 1))
        net.layers[0].bank.weights[0, 0, 0, 0] = 3.0
        g = finite_diff_gradient(net, FeatureMap(np.array([[[1.0]]])),
                                 [0.0], epsilon=1e-4)
        assert g.weights[0][0, 0, 0, 0] == pytest.approx(6.0, abs=1e-6)

    def test_zero_network_mae_zero_target(self):
        net = build_network([ConvSpec(1, 2, 2), DenseSpec(1)],
                            Loss.MAE, (1, 3, 3))
        g = finite_diff_gradient(net, FeatureMap.zeros(1, 3, 3), [0.0], 1e-5)
        assert np.all(g.weights[0] == 0.0)
        assert np.all(g.weights[1] == 0.0)

    def test_epsilon_must_be_positive(self):
        net = chain_1x1()
        with pytest.raises(ValueError):
            finite_diff_gradient(net, FeatureMap.zeros(1, 1, 1), [0.0], 0.0)

    def test_includes_nonlearning_biases(self):
        net = build_network([ConvSpec(1, 1, 1, bias_learning=False)],
                            Loss.MSE, (1, 1, 1))
        net.layers[0].bank.weights[0, 0, 0, 0] = 1.0
        g = finite_diff_gradient(net, FeatureMap(np.array([[[1.0]]])),
                                 [0.0], 1e-5)
        # d/db (w*x + b)^2 at output 1, target 0 -> 2
        assert g.biases[0][0] == pytest.approx(2.0, abs=1e-8)

    def test_oracle_sweep_identity_and_sigmoid(self):
        rng = np.random.default_rng(101)
        worst = 0.0
        for _ in range(25):
            net = random_net(rng, activations=(Activation.IDENTITY,
                                               Activation.SIGMOID))
            x = FeatureMap(rng.random(net.input_dims))
            t = random_target(net, rng)
            analytic = backward(net, forward(net, x), t)
            numeric = finite_diff_gradient(net, x, t, 1e-5)
            for li, _ in net.param_layers():
                for a, n in ((analytic.weights[li], numeric.weights[li]),
                             (analytic.biases[li], numeric.biases[li])):
                    rel = np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))
                    worst = max(worst, float(rel.max()))
        assert worst < 1e-5


class TestGradientCheck:
    def shallow_identity_net(self, rng):
        net = build_network([ConvSpec(2, 3, 3), DenseSpec(2)],
                            Loss.MSE, (1, 6, 6))
        return fill_random(net, rng)

    def test_passes_on_identity_preset(self):
        rng = np.random.default_rng(5)
        net = self.shallow_identity_net(rng)
        samples = [(FeatureMap(rng.random(net.input_dims)),
                    rng.normal(size=net.output_size)) for _ in range(10)]
        report = gradient_check(net, samples, epsilon=1e-5, tolerance=1e-5)
        assert report.passed
        assert report.max_relative_error < 1e-5

    def test_sign_flip_is_caught_and_located(self, monkeypatch):
        rng = np.random.default_rng(6)
        net = self.shallow_identity_net(rng)
        real_backward = bp.backward

        def corrupted(net_, trace, target):
            grads = real_backward(net_, trace, target)
            grads.weights[1][1, 0, 2, 2] *= -1.0  # deliberate sign flip
            return grads

        monkeypatch.setattr(bp, "backward", corrupted)
        samples = [(FeatureMap(rng.random(net.input_dims)),
                    rng.normal(size=net.output_size)) for _ in range(3)]
        report = bp.gradient_check(net, samples, 1e-5, 1e-5)
        assert not report.passed
        assert (report.worst_layer, report.worst_kind) == (1, "weight")
        assert report.worst_index == (1, 0, 2, 2)

    def test_frozen_weights_do_not_alter_gradients(self):
        rng = np.random.default_rng(7)
        net = self.shallow_identity_net(rng)
        for _, layer in net.param_layers():
            layer.freeze_mask = sample_mask(layer.bank.weights.shape, 0.5,
                                            rng)
        samples = [(FeatureMap(rng.random(net.input_dims)),
                    rng.normal(size=net.output_size)) for _ in range(5)]
        assert gradient_check(net, samples, 1e-5, 1e-5).passed


class TestLiteralForms:
    def test_single_output_last_layer_is_a_one_term_product(self):
        # with one output neuron the last layer's weight gradient is exactly
        # (input element) * (activation derivative) * (loss gradient)
        rng = np.random.default_rng(11)
        for _ in range(10):
            net = build_network(
                [ConvSpec(2, 2, 2, activation=Activation.SIGMOID),
                 DenseSpec(1, activation=Activation.SIGMOID)],
                Loss.MAE, (1, 5, 5),
            )
            fill_random(net, rng)
            x = FeatureMap(rng.random(net.input_dims))
            t = rng.normal(size=1)
            trace = forward(net, x)
            grads = backward(net, trace, t)
            last = trace.layers[1]
            _, deriv = activation_arrays(Activation.SIGMOID, last.pre_act.data)
            g = loss_output_gradient(Loss.MAE, trace, t)[0]
            expect = last.input_map.data[None, :, :, :] * deriv.ravel()[0] * g
            assert np.array_equal(grads.weights[1], expect)

    def test_upstream_weight_scaling_scales_first_layer_gradients(self):
        # identity activations, zero biases, all-zero targets with positive
        # outputs: the loss gradient is constant, so layer-1 weight gradients
        # are exactly linear in layer-2 weights
        rng = np.random.default_rng(13)
        net = build_network([ConvSpec(2, 3, 3), DenseSpec(2)],
                            Loss.MAE, (1, 6, 6))
        for _, layer in net.param_layers():
            layer.bank.weights[:] = np.abs(rng.normal(
                0.2, 0.1, layer.bank.weights.shape))
        x = FeatureMap(rng.random(net.input_dims) + 0.1)
        t = np.zeros(2)
        base = backward(net, forward(net, x), t).weights[0]
        c = 3.7
        net.layers[1].bank.weights[:] *= c
        scaled = backward(net, forward(net, x), t).weights[0]
        np.testing.assert_allclose(scaled, c * base, rtol=1e-12)

    def test_gradients_finite_on_random_nets(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            net = random_net(rng)
            x = off_kink_input(net, rng)
            t = random_target(net, rng)
            grads = backward(net, forward(net, x), t)
            assert grads.is_finite()


class TestConnectivity:
    def test_weight_links_match_brute_enumeration(self):
        bank = FilterBank.zeros(1, 1, 2, 2)
        geom = ConvGeometry(stride_v=2, stride_h=1)
        links = weight_links((1, 5, 4), bank, geom)
        # output rows at input rows {0,2}: positions y in {0,1}
        assert links[(0, 0, 0, 0)] == [
            ((0, 0, 0), (0, 0, 0)), ((0, 0, 1), (0, 0, 1)),
            ((0, 0, 2), (0, 0, 2)),
            ((0, 1, 0), (0, 2, 0)), ((0, 1, 1), (0, 2, 1)),
            ((0, 1, 2), (0, 2, 2)),
        ]
        assert len(links) == 4

    def test_weight_links_respect_padding(self):
        bank = FilterBank.zeros(1, 1, 2, 1)
        geom = ConvGeometry(zero_pad_v=1)
        links = weight_links((1, 2, 1), bank, geom)
        # filter row 0 never reaches a real input row at output y=0 (pad)
        assert links[(0, 0, 0, 0)] == [((0, 1, 0), (0, 0, 0)),
                                       ((0, 2, 0), (0, 1, 0))]

    def test_sum_over_links_reproduces_backward(self):
        rng = np.random.default_rng(19)
        net = build_network([ConvSpec(2, 2, 2), ConvSpec(1, 2, 2)],
                            Loss.MSE, (1, 4, 4))
        fill_random(net, rng)
        x = FeatureMap(rng.random(net.input_dims))
        t = rng.normal(size=net.output_size)
        trace = forward(net, x)
        grads = backward(net, trace, t)
        last = net.layers[1]
        links = weight_links(last.in_dims, last.bank, last.geom)
        gvec = loss_output_gradient(Loss.MSE, trace, t).reshape(last.out_dims)
        _, deriv = activation_arrays(last.activation,
                                     trace.layers[1].pre_act.data)
        for (o, i, r, c), pairs in links.items():
            total = 0.0
            for (beta, alpha) in pairs:
                total += (trace.layers[1].input_map.data[alpha]
                          * deriv[beta] * gvec[beta])
            assert abs(total - grads.weights[1][o, i, r, c]) <= 1e-12 * max(
                1.0, abs(total))

    def test_neuron_links_list_upstream_weights_and_targets(self):
        next_bank = FilterBank.zeros(2, 1, 2, 2)
        links = neuron_links((1, 3, 3), next_bank, ConvGeometry())
        # the center neuron feeds all four filter offsets of both channels
        center = links[(0, 1, 1)]
        assert len(center) == 8
        weights_seen = {w for w, _ in center}
        assert weights_seen == {(o, 0, r, c) for o in range(2)
                                for r in range(2) for c in range(2)}
        # corner neuron participates in exactly one position per channel
        assert len(links[(0, 0, 0)]) == 2

    def test_neuron_links_consistent_with_weight_links(self):
        rng = np.random.default_rng(23)
        bank = FilterBank.zeros(2, 2, 2, 3)
        geom = ConvGeometry(stride_v=2)
        in_dims = (2, 5, 6)
        wl = weight_links(in_dims, bank, geom)
        nl = neuron_links(in_dims, bank, geom)
        # (weight, alpha->beta) relation must be the transpose of (neuron, links)
        pairs_from_wl = {(alpha, widx, beta)
                         for widx, pairs in wl.items()
                         for beta, alpha in pairs}
        pairs_from_nl = {(alpha, widx, beta)
                         for alpha, pairs in nl.items()
                         for widx, beta in pairs}
        assert pairs_from_wl == pairs_from_nl


class TestPoolingAndSoftmaxPaths:
    def test_pool_routes_gradient_to_argmax_only(self):
        net = build_network([ConvSpec(1, 1, 1), PoolSpec(2, 2)],
                            Loss.MSE, (1, 2, 2))
        net.layers[0].bank.weights[:] = 1.0
        x = FeatureMap(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        trace = forward(net, x)
        grads = backward(net, trace, [0.0])
        # only the argmax element (value 4) contributes to the conv weight
        assert grads.weights[0][0, 0, 0, 0] == pytest.approx(2.0 * 4.0 * 4.0)

    def test_random_nets_with_pool_and_softmax_match_oracle(self):
        rng = np.random.default_rng(29)
        worst = 0.0
        for _ in range(10):
            net = build_network(
                [ConvSpec(2, 3, 3, activation=Activation.BIPOLAR_SIGMOID),
                 PoolSpec(2, 2), DenseSpec(3), SoftmaxSpec()],
                Loss.CROSS_ENTROPY, (1, 7, 7),
            )
            fill_random(net, rng)
            x = FeatureMap(rng.random(net.input_dims))
            t = np.zeros(3)
            t[int(rng.integers(3))] = 1.0
            analytic = backward(net, forward(net, x), t)
            numeric = finite_diff_gradient(net, x, t, 1e-5)
            for li, _ in net.param_layers():
                rel = (np.abs(analytic.weights[li] - numeric.weights[li])
                       / np.maximum(1e-8, np.abs(analytic.weights[li])
                                    + np.abs(numeric.weights[li])))
                worst = max(worst, float(rel.max()))
        assert worst < 1e-5
