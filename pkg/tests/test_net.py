import numpy as np
import pytest

from ignet import (
    Activation,
    ConvSpec,
    DenseSpec,
    FeatureMap,
    Loss,
    PoolSpec,
    ShapeChainError,
    SoftmaxSpec,
    activation_eval,
    build_network,
    forward,
    loss_eval,
    loss_output_gradient,
)
from ignet.net import activation_arrays, softmax

from helpers import fill_random, random_net


def chain_1x1(w1=3.0, w2=4.0, loss=Loss.MSE,
              activation=Activation.IDENTITY):
    net = build_network(
        [ConvSpec(1, 1, 1, activation=activation),
         ConvSpec(1, 1, 1, activation=activation)],
        loss, (1, 1, 1),
    )
    net.layers[0].bank.weights[0, 0, 0, 0] = w1
    net.layers[1].bank.weights[0, 0, 0, 0] = w2
    return net


class TestBuildNetwork:
    def test_consistent_chain_builds(self):
        net = build_network(
            [ConvSpec(2, 3, 3), DenseSpec(4), SoftmaxSpec()],
            Loss.CROSS_ENTROPY, (1, 8, 8),
        )
        assert [ly.kind for ly in net.layers] == ["conv", "conv", "softmax"]
        assert net.output_dims == (4, 1, 1)

    def test_dense_filter_covers_whole_input(self):
        net = build_network([ConvSpec(3, 3, 3), DenseSpec(5)],
                            Loss.MSE, (1, 8, 8))
        dense = net.layers[1]
        assert (dense.bank.v, dense.bank.h) == dense.in_dims[1:]
        assert dense.out_dims == (5, 1, 1)

    def test_softmax_must_be_last(self):
        with pytest.raises(ShapeChainError, match="softmax"):
            build_network([SoftmaxSpec(), DenseSpec(4)],
                          Loss.CROSS_ENTROPY, (1, 4, 4))

    def test_oversized_filter_names_layer(self):
        with pytest.raises(ShapeChainError, match="layer 1"):
            build_network([ConvSpec(1, 9, 9)], Loss.MSE, (1, 4, 4))

    def test_cross_entropy_needs_softmax(self):
        with pytest.raises(ShapeChainError):
            build_network([DenseSpec(3)], Loss.CROSS_ENTROPY, (1, 2, 2))

    def test_softmax_needs_cross_entropy(self):
        with pytest.raises(ShapeChainError):
            build_network([DenseSpec(3), SoftmaxSpec()], Loss.MSE, (1, 2, 2))

    def test_empty_spec_list_rejected(self):
        with pytest.raises(ShapeChainError):
            build_network([], Loss.MSE, (1, 2, 2))


class TestForward:
    def test_identity_chain_traces_both_layers(self):
        net = chain_1x1()
        trace = forward(net, FeatureMap(np.array([[[2.0]]])))
        assert trace.layers[0].post_act.data.ravel()[0] == 6.0
        assert trace.outputs.tolist() == [24.0]

    def test_zero_weights_zero_output(self):
        net = build_network([ConvSpec(2, 2, 2), DenseSpec(3)],
                            Loss.MSE, (1, 4, 4))
        trace = forward(net, FeatureMap(np.random.default_rng(0).random((1, 4, 4))))
        assert np.all(trace.outputs == 0.0)

    def test_softmax_symmetry(self):
        net = build_network([DenseSpec(2), SoftmaxSpec()],
                            Loss.CROSS_ENTROPY, (1, 1, 1))
        trace = forward(net, FeatureMap(np.array([[[0.7]]])))
        assert trace.outputs.tolist() == [0.5, 0.5]

    def test_dimension_mismatch_rejected(self):
        net = chain_1x1()
        with pytest.raises(ShapeChainError):
            forward(net, FeatureMap.zeros(1, 2, 2))

    def test_linear_superposition_on_random_identity_nets(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            net = random_net(rng, activations=(Activation.IDENTITY,),
                             with_softmax=False)
            for _, ly in net.param_layers():
                ly.bank.biases[:] = 0.0
            # max-pool is nonlinear; restrict to pure conv chains
            if any(ly.kind == "maxpool" for ly in net.layers):
                continue
            x1 = rng.random(net.input_dims)
            x2 = rng.random(net.input_dims)
            a, b = rng.normal(size=2)
            mixed = forward(net, FeatureMap(a * x1 + b * x2)).outputs
            split = (a * forward(net, FeatureMap(x1)).outputs
                     + b * forward(net, FeatureMap(x2)).outputs)
            np.testing.assert_allclose(mixed, split, rtol=1e-10, atol=1e-10)


class TestActivations:
    def test_identity_passthrough(self):
        assert activation_eval(Activation.IDENTITY, -3.7) == (-3.7, 1.0)

    def test_bipolar_sigmoid_at_zero(self):
        assert activation_eval(Activation.BIPOLAR_SIGMOID, 0.0) == (0.0, 0.5)

    def test_relu_negative_branch(self):
        assert activation_eval(Activation.RELU, -1.0) == (0.0, 0.0)

    def test_relu_kink_derivative_defined_as_zero(self):
        assert activation_eval(Activation.RELU, 0.0)[1] == 0.0

    def test_sigmoid_value(self):
        val, der = activation_eval(Activation.SIGMOID, 0.0)
        assert val == 0.5 and der == 0.25

    @pytest.mark.parametrize("act", [Activation.IDENTITY, Activation.RELU,
                                     Activation.SIGMOID,
                                     Activation.BIPOLAR_SIGMOID])
    def test_derivative_matches_central_differences(self, act):
        rng = np.random.default_rng(17)
        x = rng.uniform(-6, 6, size=1000)
        if act is Activation.RELU:
            x = x[np.abs(x) > 1e-3]  # sampled away from the kink
        h = 1e-6
        _, der = activation_arrays(act, x)
        hi, _ = activation_arrays(act, x + h)
        lo, _ = activation_arrays(act, x - h)
        numeric = (hi - lo) / (2 * h)
        denom = np.maximum(np.abs(der), 1.0)
        assert np.max(np.abs(der - numeric) / denom) < 1e-6

    def test_derivatives_finite_everywhere(self):
        x = np.array([-700.0, -30.0, 0.0, 30.0, 700.0])
        for act in Activation:
            val, der = activation_arrays(act, x)
            assert np.isfinite(val).all() and np.isfinite(der).all()


class TestLosses:
    def test_mse_single(self):
        assert loss_eval(Loss.MSE, [3.0], [1.0]) == 4.0

    def test_mae_mean(self):
        assert loss_eval(Loss.MAE, [2.0, 4.0], [1.0, 1.0]) == 2.0

    def test_cross_entropy_perfect_prediction(self):
        assert loss_eval(Loss.CROSS_ENTROPY, [1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_cross_entropy_floors_probabilities(self):
        val = loss_eval(Loss.CROSS_ENTROPY, [0.0, 1.0], [1.0, 0.0])
        assert val == pytest.approx(-np.log(1e-12))

    def test_losses_nonnegative(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            o = rng.normal(size=4)
            t = rng.normal(size=4)
            assert loss_eval(Loss.MSE, o, t) >= 0.0
            assert loss_eval(Loss.MAE, o, t) >= 0.0
            p = softmax(rng.normal(size=4))
            onehot = np.zeros(4)
            onehot[rng.integers(4)] = 1.0
            assert loss_eval(Loss.CROSS_ENTROPY, p, onehot) >= 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            loss_eval(Loss.MSE, [1.0], [1.0, 2.0])


class TestLossOutputGradient:
    def test_mse_factor_of_two_over_k(self):
        net = chain_1x1()
        trace = forward(net, FeatureMap(np.array([[[0.25]]])))
        g = loss_output_gradient(Loss.MSE, trace, [1.0 * trace.outputs[0] - 2.0])
        assert g.tolist() == [4.0]

    def test_softmax_cross_entropy_fused_form(self):
        net = build_network([DenseSpec(2), SoftmaxSpec()],
                            Loss.CROSS_ENTROPY, (1, 1, 1))
        trace = forward(net, FeatureMap(np.array([[[0.0]]])))
        g = loss_output_gradient(Loss.CROSS_ENTROPY, trace, [1.0, 0.0])
        assert g.tolist() == [-0.5, 0.5]

    def test_mae_zero_at_exact_fit(self):
        net = chain_1x1()
        trace = forward(net, FeatureMap(np.array([[[2.0]]])))
        g = loss_output_gradient(Loss.MAE, trace, trace.outputs.copy())
        assert g.tolist() == [0.0]


class TestSoftmaxProperties:
    def test_sum_and_range(self):
        # float64 saturates to exactly 0/1 once the gap passes ~36 nats,
        # so the open-interval property is tested on the representable range
        rng = np.random.default_rng(31)
        for _ in range(200):
            z = rng.uniform(-15, 15, size=int(rng.integers(2, 8)))
            s = softmax(z)
            assert abs(s.sum() - 1.0) < 1e-12
            assert np.all(s > 0.0) and np.all(s < 1.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(37)
        for _ in range(100):
            z = rng.uniform(-10, 10, size=5)
            c = rng.uniform(-100, 100)
            np.testing.assert_allclose(softmax(z + c), softmax(z),
                                       rtol=1e-12, atol=1e-12)


def test_train_mode_requires_known_mode():
    net = chain_1x1()
    with pytest.raises(ValueError):
        forward(net, FeatureMap.zeros(1, 1, 1), mode="banana")


def test_random_net_builder_smoke():
    rng = np.random.default_rng(3)
    for _ in range(10):
        net = random_net(rng)
        fill_random(net, rng)
        x = FeatureMap(rng.random(net.input_dims))
        assert forward(net, x).outputs.shape == (net.output_size,)
