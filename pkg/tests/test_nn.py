import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowtrack import nn


def conv1x1(weight, bias, stride=1, padding=0):
    return nn.ConvLayer(np.array([[[[weight]]]], dtype=np.float32),
                        np.array([bias], dtype=np.float32), stride, padding)


class TestConv2d:
    def test_zero_weight_annihilates(self):
        y = nn.conv2d_forward(np.full((1, 1, 1, 1), 5, np.float32), conv1x1(0.0, 0.0))
        assert y.item() == 0.0

    def test_scalar_affine(self):
        y = nn.conv2d_forward(np.full((1, 1, 1, 1), 2, np.float32), conv1x1(3.0, 1.0))
        assert y.item() == 7.0

    def test_hand_sum_of_nine_ones(self):
        layer = nn.ConvLayer(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
        y = nn.conv2d_forward(np.ones((1, 1, 3, 3), np.float32), layer)
        assert y.shape == (1, 1, 1, 1)
        assert y.item() == 9.0

    def test_output_spatial_size(self):
        layer = nn.ConvLayer(np.ones((2, 3, 3, 3), np.float32), np.zeros(2, np.float32),
                             stride=2, padding=1)
        y = nn.conv2d_forward(np.zeros((1, 3, 7, 9), np.float32), layer)
        assert y.shape == (1, 2, (7 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)

    def test_channel_mismatch_names_both_shapes(self):
        layer = nn.ConvLayer(np.ones((1, 2, 1, 1), np.float32), np.zeros(1, np.float32))
        with pytest.raises(nn.ShapeError) as err:
            nn.conv2d_forward(np.zeros((1, 3, 4, 4), np.float32), layer)
        assert "(1, 3, 4, 4)" in str(err.value) and "(1, 2, 1, 1)" in str(err.value)

    def test_too_small_input(self):
        layer = nn.ConvLayer(np.ones((1, 1, 5, 5), np.float32), np.zeros(1, np.float32))
        with pytest.raises(nn.ShapeError, match="too small"):
            nn.conv2d_forward(np.zeros((1, 1, 3, 3), np.float32), layer)

    def test_linear_in_input_with_zero_bias(self):
        rng = np.random.default_rng(3)
        layer = nn.ConvLayer(rng.standard_normal((2, 3, 3, 3)).astype(np.float32),
                             np.zeros(2, np.float32), padding=1)
        x = rng.standard_normal((1, 3, 5, 5)).astype(np.float32)
        np.testing.assert_allclose(nn.conv2d_forward(2.5 * x, layer),
                                   2.5 * nn.conv2d_forward(x, layer), rtol=1e-5)


class TestConv2dBackward:
    def test_zero_grad_out(self):
        x = np.ones((1, 1, 3, 3), np.float32)
        layer = nn.ConvLayer(np.ones((1, 1, 2, 2), np.float32), np.zeros(1, np.float32))
        gx, gw, gb = nn.conv2d_backward(x, layer, np.zeros((1, 1, 2, 2), np.float32))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_scalar_product_rule(self):
        x = np.full((1, 1, 1, 1), 2, np.float32)
        gx, gw, gb = nn.conv2d_backward(x, conv1x1(3.0, 0.0),
                                        np.ones((1, 1, 1, 1), np.float32))
        assert gx.item() == 3.0 and gw.item() == 2.0 and gb.item() == 1.0

    def test_grad_out_shape_checked(self):
        x = np.zeros((1, 1, 4, 4), np.float32)
        layer = nn.ConvLayer(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
        with pytest.raises(nn.ShapeError, match="grad_out"):
            nn.conv2d_backward(x, layer, np.zeros((1, 1, 4, 4), np.float32))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-1, 1, (1, 2, 4, 4))

        def fn(params):
            w, b = params
            layer = nn.ConvLayer(w, b, stride=1, padding=0)
            y = nn.conv2d_forward(x, layer)
            _, gw, gb = nn.conv2d_backward(x, layer, np.ones_like(y))
            return float(y.sum()), [gw, gb]

        report = nn.finite_difference_check(
            fn, [rng.uniform(-1, 1, (2, 2, 3, 3)), rng.uniform(-1, 1, 2)])
        assert report.passed, report


class TestBatchNorm:
    def test_eval_identity_stats(self):
        layer = nn.make_batchnorm(2)
        layer.epsilon = 0.0
        x = np.arange(16, dtype=np.float32).reshape(1, 2, 2, 4)
        np.testing.assert_array_equal(nn.batchnorm_forward(x, layer), x)

    def test_eval_constant_output(self):
        layer = nn.make_batchnorm(1)
        layer.gamma[:] = 0.0
        layer.beta[:] = 5.0
        y = nn.batchnorm_forward(np.random.default_rng(0).normal(size=(2, 1, 3, 3)), layer)
        np.testing.assert_array_equal(y, np.full_like(y, 5.0))

    def test_train_hand_example(self):
        layer = nn.make_batchnorm(1, mode="train")
        layer.epsilon = 0.0
        x = np.array([2.0, 4.0], dtype=np.float32).reshape(1, 1, 1, 2)
        np.testing.assert_allclose(nn.batchnorm_forward(x, layer).ravel(),
                                   [-1.0, 1.0], atol=1e-6)

    def test_train_single_element_errors(self):
        layer = nn.make_batchnorm(1, mode="train")
        with pytest.raises(nn.ShapeError, match="variance"):
            nn.batchnorm_forward(np.ones((1, 1, 1, 1), np.float32), layer)

    def test_running_stats_update_keeps_var_positive(self):
        layer = nn.make_batchnorm(1, mode="train")
        x = np.array([1.0, 1.0, 1.0, 1.0], np.float32).reshape(1, 1, 1, 4)
        for _ in range(50):
            nn.batchnorm_forward(x, layer)
        assert np.all(layer.running_var > 0)
        assert layer.running_mean[0] == pytest.approx(1.0, abs=0.01)

    def test_eval_output_is_affine_in_input(self):
        rng = np.random.default_rng(4)
        layer = nn.make_batchnorm(3)
        layer.running_mean[:] = rng.normal(size=3)
        layer.running_var[:] = rng.uniform(0.5, 2.0, size=3)
        layer.gamma[:] = rng.normal(size=3)
        layer.beta[:] = rng.normal(size=3)
        x = rng.normal(size=(2, 3, 4, 4))
        y0 = nn.batchnorm_forward(np.zeros_like(x), layer)
        # affine: f(x) - f(0) is linear
        lhs = nn.batchnorm_forward(3.0 * x, layer) - y0
        rhs = 3.0 * (nn.batchnorm_forward(x, layer) - y0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestActivations:
    def test_softshrink_values(self):
        x = np.array([1.2, 0.3, -0.9, 0.5, -0.5])
        np.testing.assert_allclose(nn.softshrink(x, 0.5), [0.7, 0.0, -0.4, 0.0, 0.0],
                                   atol=1e-7)

    def test_softshrink_negative_lambda(self):
        with pytest.raises(ValueError):
            nn.softshrink(np.zeros(1), -0.1)

    def test_sigmoid_at_zero(self):
        y, _ = nn.activation_forward_backward("sigmoid", np.zeros(1), np.ones(1))
        assert y[0] == pytest.approx(0.5)

    def test_relu_negative(self):
        y, g = nn.activation_forward_backward("relu", np.array([-3.0]), np.ones(1))
        assert y[0] == 0.0 and g[0] == 0.0

    def test_relu_tie_uses_zero_branch(self):
        _, g = nn.activation_forward_backward("relu", np.array([0.0]), np.ones(1))
        assert g[0] == 0.0

    def test_softshrink_grad_outside_dead_zone(self):
        _, g = nn.activation_forward_backward("softshrink", np.array([2.0]),
                                              np.ones(1), lam=0.5)
        assert g[0] == 1.0

    def test_softshrink_grad_boundary_is_dead(self):
        _, g = nn.activation_forward_backward("softshrink", np.array([0.5, -0.5]),
                                              np.ones(2), lam=0.5)
        assert not g.any()

    def test_sigmoid_gradient(self):
        x = np.array([0.7])
        y, g = nn.activation_forward_backward("sigmoid", x, np.ones(1))
        assert g[0] == pytest.approx(y[0] * (1 - y[0]))

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            nn.activation_forward_backward("tanh", np.zeros(1), np.zeros(1))


class TestBilinearSample:
    def test_integer_location_exact(self):
        f = np.arange(12, dtype=np.float32).reshape(1, 3, 4)
        assert nn.bilinear_sample(f, 2.0, 3.0)[0] == f[0, 2, 3]

    def test_center_of_2x2(self):
        f = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert nn.bilinear_sample(f, 0.5, 0.5)[0] == pytest.approx(2.5)

    def test_far_out_of_bounds_is_zero(self):
        f = np.ones((2, 2, 2), np.float32)
        np.testing.assert_array_equal(nn.bilinear_sample(f, -10.0, -10.0), [0.0, 0.0])

    def test_edge_partial_taps(self):
        f = np.ones((1, 2, 2), np.float32)
        # halfway off the top edge: only the two lower taps contribute
        assert nn.bilinear_sample(f, -0.5, 0.0)[0] == pytest.approx(0.5)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**31 - 1),
           st.floats(0.0, 1.99), st.floats(0.0, 1.99))
    def test_convex_combination_in_bounds(self, seed, i, j):
        rng = np.random.default_rng(seed)
        f = rng.uniform(-5, 5, size=(1, 3, 3))
        taps = [f[0, int(np.floor(i)) + di, int(np.floor(j)) + dj]
                for di in (0, 1) for dj in (0, 1)]
        v = nn.bilinear_sample(f, i, j)[0]
        assert min(taps) - 1e-9 <= v <= max(taps) + 1e-9


class TestSgd:
    def test_zero_lr_keeps_params(self):
        p = [np.array([1.0, 2.0])]
        nn.sgd_step(p, [np.array([5.0, -5.0])], 0.0, 0.9, nn.SgdState())
        np.testing.assert_array_equal(p[0], [1.0, 2.0])

    def test_plain_step(self):
        p = [np.array([1.0])]
        nn.sgd_step(p, [np.array([2.0])], 0.1, 0.0, nn.SgdState())
        assert p[0][0] == pytest.approx(0.8)

    def test_two_momentum_steps(self):
        p = [np.array([0.0])]
        state = nn.SgdState()
        nn.sgd_step(p, [np.array([1.0])], 0.1, 0.9, state)
        nn.sgd_step(p, [np.array([1.0])], 0.1, 0.9, state)
        assert p[0][0] == pytest.approx(-0.29)

    def test_shape_mismatch(self):
        with pytest.raises(nn.ShapeError):
            nn.sgd_step([np.zeros(2)], [np.zeros(3)], 0.1, 0.0, nn.SgdState())


class TestFiniteDifferenceCheck:
    def test_constant_function_passes(self):
        def fn(params):
            return 1.0, [np.zeros_like(p) for p in params]

        report = nn.finite_difference_check(fn, [np.ones(3)])
        assert report.passed and report.max_rel_error == 0.0

    def test_detects_wrong_gradient(self):
        def fn(params):
            (p,) = params
            return float((p ** 2).sum()), [3.0 * p]  # true grad is 2p

        report = nn.finite_difference_check(fn, [np.array([1.0, -2.0])])
        assert not report.passed

    def test_single_conv_with_l1_loss(self):
        rng = np.random.default_rng(21)
        x = rng.uniform(-1, 1, (1, 1, 4, 4))
        target = rng.uniform(-1, 1, (1, 2, 2, 2))

        def fn(params):
            w, b = params
            layer = nn.ConvLayer(w, b, stride=1, padding=0)
            y = nn.conv2d_forward(x, layer)
            loss = float(np.abs(y - target).sum())
            _, gw, gb = nn.conv2d_backward(x, layer, np.sign(y - target))
            return loss, [gw, gb]

        report = nn.finite_difference_check(
            fn, [rng.uniform(-1, 1, (2, 1, 3, 3)), rng.uniform(-1, 1, 2)])
        assert report.passed, report
