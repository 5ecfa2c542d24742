"""Tests for the dense-network core: forward/backward, optimizer, snapshots."""

import numpy as np
import pytest

from irdec import netcore


def _identity_linear(width):
    """A single linear layer whose weight matrix is the identity."""
    params = np.zeros(netcore.param_count((width, width)))
    params[: width * width] = np.eye(width).ravel()
    return netcore.DenseNet((width, width), "tanh", "identity", params)


def _manual_forward(net, x):
    """Independent straight-line re-evaluation of a tanh/identity net.

    Deliberately written as explicit per-layer slicing and loops rather than
    reusing any helper from the package, so it can serve as an oracle.
    """
    offset = 0
    h = np.array(x, dtype=float)
    widths = net.layer_widths
    for layer in range(len(widths) - 1):
        fan_in, fan_out = widths[layer], widths[layer + 1]
        weight = np.array(
            [net.params[offset + r * fan_out: offset + (r + 1) * fan_out]
             for r in range(fan_in)])
        offset += fan_in * fan_out
        bias = net.params[offset: offset + fan_out]
        offset += fan_out
        h = h @ weight + bias
        if layer < len(widths) - 2:
            h = np.tanh(h)
    return h


class TestForward:
    def test_identity_layer_returns_input(self):
        net = _identity_linear(3)
        x = np.array([0.3, -1.2, 2.5])
        assert np.allclose(netcore.forward(net, x), x)

    def test_all_zero_params_give_zero_output(self):
        widths = (4, 5, 2)
        net = netcore.DenseNet(widths, "relu", "identity",
                               np.zeros(netcore.param_count(widths)))
        out = netcore.forward(net, np.array([1.0, -2.0, 3.0, 4.0]))
        assert np.array_equal(out, np.zeros(2))

    def test_random_net_matches_manual_reevaluation(self):
        rng = np.random.default_rng(42)
        net = netcore.init_dense_net((2, 4, 1), "tanh", "identity", rng)
        x = rng.normal(size=2)
        want = _manual_forward(net, x)
        assert np.allclose(netcore.forward(net, x), want, rtol=1e-12, atol=0)

    def test_forward_is_pure(self):
        rng = np.random.default_rng(3)
        net = netcore.init_dense_net((3, 8, 2), "tanh", "identity", rng)
        x = rng.normal(size=(5, 3))
        a = netcore.forward(net, x)
        b = netcore.forward(net, x)
        assert np.array_equal(a, b)

    def test_sigmoid_outputs_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(11)
        net = netcore.init_dense_net((2, 6, 1), "tanh", "sigmoid", rng)
        # Include extreme inputs so the logit clamp is exercised.
        x = np.vstack([rng.normal(size=(50, 2)), [[1e6, 1e6]], [[-1e6, -1e6]]])
        out = netcore.forward(net, x)
        assert np.all(out > 0.0)
        assert np.all(out < 1.0)

    def test_finite_input_gives_finite_output(self):
        rng = np.random.default_rng(5)
        for transform in netcore.OUTPUT_TRANSFORMS:
            width = 2 if transform == "bounded_gaussian_head" else 3
            net = netcore.init_dense_net((4, 8, width), "relu", transform, rng)
            out = netcore.forward(net, rng.normal(size=(10, 4)) * 100.0)
            assert np.all(np.isfinite(out))

    def test_dimension_mismatch_rejected(self):
        net = _identity_linear(3)
        with pytest.raises(netcore.DimensionError):
            netcore.forward(net, np.zeros(4))

    def test_param_count_matches_layout(self):
        widths = (3, 7, 5, 2)
        want = (3 + 1) * 7 + (7 + 1) * 5 + (5 + 1) * 2
        assert netcore.param_count(widths) == want
        rng = np.random.default_rng(0)
        net = netcore.init_dense_net(widths, "tanh", "identity", rng)
        assert net.params.shape == (want,)

    def test_bounded_head_logstd_clamped(self):
        rng = np.random.default_rng(9)
        net = netcore.init_dense_net((2, 4, 4), "tanh",
                                     "bounded_gaussian_head", rng)
        out = netcore.forward(net, rng.normal(size=(20, 2)) * 1e4)
        log_std = out[:, 2:]
        assert np.all(log_std >= netcore.LOG_STD_MIN)
        assert np.all(log_std <= netcore.LOG_STD_MAX)


class TestBackward:
    def test_constant_net_gradients_by_hand(self):
        # Single linear layer with zero weights: output = bias, so the bias
        # gradient is the upstream itself and each weight gradient is
        # input[i] * upstream[j].
        widths = (2, 3)
        net = netcore.DenseNet(widths, "tanh", "identity",
                               np.zeros(netcore.param_count(widths)))
        x = np.array([1.5, -2.0])
        upstream = np.array([1.0, 2.0, -1.0])
        param_grad, input_grad = netcore.backward(net, x, upstream)
        want_weights = np.outer(x, upstream).ravel()
        assert np.allclose(param_grad[:6], want_weights)
        assert np.allclose(param_grad[6:], upstream)
        assert np.allclose(input_grad, np.zeros(2))  # zero weights

    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(2)
        net = netcore.init_dense_net((3, 5, 2), "tanh", "identity", rng)
        param_grad, input_grad = netcore.backward(
            net, rng.normal(size=3), np.zeros(2))
        assert np.array_equal(param_grad, np.zeros_like(net.params))
        assert np.array_equal(input_grad, np.zeros(3))

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    @pytest.mark.parametrize("transform", ["identity", "sigmoid"])
    def test_matches_finite_differences(self, activation, transform):
        rng = np.random.default_rng(17)
        net = netcore.init_dense_net((3, 6, 2), activation, transform, rng)
        x = rng.normal(size=(4, 3))
        upstream = rng.normal(size=(4, 2))
        analytic, _ = netcore.backward(net, x, upstream)

        def scalar(params):
            return float(np.sum(
                upstream * netcore.forward(net.with_params(params), x)))

        numeric = netcore.finite_difference_grad(scalar, net.params)
        errs = netcore.relative_errors(analytic, numeric)
        assert errs.max() <= 1e-4

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(23)
        net = netcore.init_dense_net((3, 5, 2), "tanh", "identity", rng)
        x = rng.normal(size=3)
        upstream = rng.normal(size=2)
        _, input_grad = netcore.backward(net, x, upstream)

        def scalar(point):
            return float(upstream @ netcore.forward(net, point))

        numeric = netcore.finite_difference_grad(scalar, x)
        assert netcore.relative_errors(input_grad, numeric).max() <= 1e-4

    def test_batch_param_grad_sums_over_rows(self):
        rng = np.random.default_rng(31)
        net = netcore.init_dense_net((2, 4, 1), "tanh", "identity", rng)
        x = rng.normal(size=(3, 2))
        upstream = rng.normal(size=(3, 1))
        batched, _ = netcore.backward(net, x, upstream)
        summed = sum(netcore.backward(net, x[i], upstream[i])[0]
                     for i in range(3))
        assert np.allclose(batched, summed)

    def test_upstream_dimension_mismatch_rejected(self):
        net = _identity_linear(2)
        with pytest.raises(netcore.DimensionError):
            netcore.backward(net, np.zeros(2), np.zeros(3))


class TestAdamStep:
    def test_zero_gradient_is_fixed_point(self):
        params = np.array([1.0, -2.0, 0.5])
        opt = netcore.OptimizerState.fresh(3, step_size=0.1)
        new_params, new_opt = netcore.adam_step(params, np.zeros(3), opt)
        assert np.array_equal(new_params, params)
        assert new_opt.step_count == 1

    def test_single_scalar_step_by_hand(self):
        # With decays (0.9, 0.999) and one unit gradient, bias correction
        # makes the moment ratio exactly 1, so the step is
        # step_size / (1 + epsilon).
        opt = netcore.OptimizerState.fresh(1, step_size=0.1)
        new_params, _ = netcore.adam_step(np.array([0.0]), np.array([1.0]), opt)
        want = -0.1 * 1.0 / (1.0 + 1e-8)
        assert np.isclose(new_params[0], want, rtol=0, atol=1e-15)
        assert abs(new_params[0] + 0.1) < 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        params = rng.normal(size=5)
        grads = rng.normal(size=5)
        opt = netcore.OptimizerState.fresh(5, step_size=0.01)
        out1 = netcore.adam_step(params, grads, opt)
        out2 = netcore.adam_step(params, grads, opt)
        assert np.array_equal(out1[0], out2[0])
        assert np.array_equal(out1[1].first_moment, out2[1].first_moment)

    def test_step_count_increments_by_one(self):
        params = np.zeros(2)
        opt = netcore.OptimizerState.fresh(2, step_size=0.1)
        for want in (1, 2, 3):
            params, opt = netcore.adam_step(params, np.ones(2), opt)
            assert opt.step_count == want

    def test_non_finite_gradient_rejected(self):
        opt = netcore.OptimizerState.fresh(2, step_size=0.1)
        with pytest.raises(netcore.NonFiniteError):
            netcore.adam_step(np.zeros(2), np.array([np.nan, 0.0]), opt)

    def test_dimension_mismatch_rejected(self):
        opt = netcore.OptimizerState.fresh(2, step_size=0.1)
        with pytest.raises(netcore.DimensionError):
            netcore.adam_step(np.zeros(3), np.zeros(3), opt)


class TestGradCheck:
    def test_quadratic_loss_on_linear_net_passes(self):
        rng = np.random.default_rng(6)
        net = netcore.init_dense_net((2, 3), "tanh", "identity", rng)
        x = rng.normal(size=2)

        def loss_fn(out):
            return float(0.5 * np.sum(out ** 2)), np.asarray(out)

        report = netcore.grad_check(net, loss_fn, x, tolerance=1e-4)
        assert report.passed
        assert report.max_relative_error <= 1e-4

    def test_zero_tolerance_fails_on_nondegenerate_case(self):
        rng = np.random.default_rng(7)
        net = netcore.init_dense_net((2, 4, 1), "tanh", "identity", rng)

        def loss_fn(out):
            return float(np.sum(out)), np.ones_like(out)

        report = netcore.grad_check(net, loss_fn, rng.normal(size=2),
                                    tolerance=0.0)
        assert not report.passed

    def test_constant_loss_reports_zero_error(self):
        rng = np.random.default_rng(8)
        net = netcore.init_dense_net((2, 3, 1), "tanh", "identity", rng)

        def loss_fn(out):
            return 1.0, np.zeros_like(out)

        report = netcore.grad_check(net, loss_fn, rng.normal(size=2),
                                    tolerance=1e-4)
        assert report.max_relative_error == 0.0
        assert report.passed

    def test_report_verdict_matches_threshold(self):
        rng = np.random.default_rng(9)
        net = netcore.init_dense_net((2, 3, 1), "tanh", "identity", rng)

        def loss_fn(out):
            return float(np.sum(out ** 3)), 3.0 * np.asarray(out) ** 2

        report = netcore.grad_check(net, loss_fn, rng.normal(size=2),
                                    tolerance=1e-4)
        assert report.passed == (report.max_relative_error <= report.tolerance)


class TestSnapshots:
    def test_save_load_roundtrip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(13)
        net = netcore.init_dense_net((3, 8, 4), "relu",
                                     "bounded_gaussian_head", rng)
        path = tmp_path / "net.bin"
        netcore.save_net(net, path)
        loaded = netcore.load_net(path)
        assert loaded.layer_widths == net.layer_widths
        assert loaded.activation == net.activation
        assert loaded.output_transform == net.output_transform
        assert np.array_equal(loaded.params, net.params)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a snapshot at all")
        with pytest.raises(ValueError):
            netcore.load_net(path)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(14)
        net = netcore.init_dense_net((2, 3), "tanh", "identity", rng)
        path = tmp_path / "net.bin"
        netcore.save_net(net, path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(ValueError):
            netcore.load_net(path)
