import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchguard import (
    Conv,
    ConvLayerSpec,
    MaxPool2x2,
    NumericError,
    ReLU,
    ShapeError,
    Tensor,
    conv3x3,
    forward_prefix,
    maxpool2x2,
    relu,
)
from patchguard.tensor import output_shape

from .conftest import random_tensor
from .oracles import conv3x3_loops, maxpool2x2_loops


def make_spec(rng, c_in, c_out):
    return ConvLayerSpec(
        c_in,
        c_out,
        rng.standard_normal((c_out, c_in, 3, 3)).astype(np.float32),
        rng.standard_normal(c_out).astype(np.float32),
    )


class TestTensor:
    def test_flat_layout_is_channel_major(self):
        t = Tensor.from_flat(np.arange(12, dtype=np.float32), 2, 3, 2)
        assert t.array[1, 0, 0] == 6.0
        assert np.array_equal(t.data, np.arange(12, dtype=np.float32))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Tensor.from_flat(np.zeros(5, dtype=np.float32), 2, 3, 2)

    def test_zero_dim_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 2, 2), dtype=np.float32))


class TestConvOracle:
    def test_oracle_matches_hand_computed_1x2x2(self):
        # 1x2x2 input [[1,2],[3,4]], kernel entries 1..9 row-major, bias 0
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        kernel = np.arange(1, 10, dtype=np.float64).reshape(1, 1, 3, 3)
        out = conv3x3_loops(x, kernel, np.zeros(1))
        assert np.array_equal(out[0], [[77.0, 67.0], [47.0, 37.0]])


class TestConv3x3:
    def test_zero_input_passes_only_bias(self, rng):
        spec = make_spec(rng, 1, 1)
        b = float(spec.bias[0])
        out = conv3x3(Tensor(np.zeros((1, 3, 3), dtype=np.float32)), spec)
        assert np.allclose(out.array, b)

    def test_identity_kernel(self):
        kernel = np.zeros((1, 1, 3, 3), dtype=np.float32)
        kernel[0, 0, 1, 1] = 1.0
        spec = ConvLayerSpec(1, 1, kernel, np.zeros(1, dtype=np.float32))
        out = conv3x3(Tensor(np.full((1, 1, 1), 7.25, dtype=np.float32)), spec)
        assert out.array[0, 0, 0] == 7.25

    def test_matches_loop_oracle(self, rng):
        x = random_tensor(rng, 2, 5, 5)
        spec = make_spec(rng, 2, 4)
        got = conv3x3(x, spec)
        want = conv3x3_loops(x.array, spec.kernel, spec.bias)
        assert got.array.shape == (4, 5, 5)
        np.testing.assert_allclose(got.array, want, atol=1e-5)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            conv3x3(random_tensor(rng, 3, 4, 4), make_spec(rng, 2, 2))

    def test_nonfinite_input_rejected(self, rng):
        arr = np.zeros((1, 2, 2), dtype=np.float32)
        arr[0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            conv3x3(Tensor(arr), make_spec(rng, 1, 1))

    def test_linearity_with_zero_bias(self, rng):
        spec = ConvLayerSpec(
            2,
            3,
            rng.standard_normal((3, 2, 3, 3)).astype(np.float32),
            np.zeros(3, dtype=np.float32),
        )
        x = random_tensor(rng, 2, 6, 6)
        y = random_tensor(rng, 2, 6, 6)
        a, b = 1.7, -0.4
        combined = conv3x3(Tensor(a * x.array + b * y.array), spec)
        separate = a * conv3x3(x, spec).array + b * conv3x3(y, spec).array
        np.testing.assert_allclose(combined.array, separate, rtol=1e-4, atol=1e-5)


class TestReLU:
    def test_basic_values(self):
        t = Tensor(np.array([[[-1.0, 0.0, 2.0]]], dtype=np.float32))
        assert np.array_equal(relu(t).array, [[[0.0, 0.0, 2.0]]])

    def test_all_negative_becomes_zero(self, rng):
        t = Tensor(-np.abs(rng.standard_normal((2, 3, 3))).astype(np.float32) - 0.1)
        assert np.array_equal(relu(t).array, np.zeros((2, 3, 3), dtype=np.float32))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_idempotent(self, seed):
        t = random_tensor(np.random.default_rng(seed), 2, 4, 4)
        once = relu(t)
        twice = relu(once)
        assert np.array_equal(once.array, twice.array)


class TestMaxPool:
    def test_single_window(self):
        t = Tensor.from_flat([1.0, 2.0, 3.0, 4.0], 1, 2, 2)
        assert maxpool2x2(t).array[0, 0, 0] == 4.0

    def test_constant_tensor(self):
        t = Tensor(np.full((3, 4, 6), 2.5, dtype=np.float32))
        out = maxpool2x2(t)
        assert out.array.shape == (3, 2, 3)
        assert np.all(out.array == 2.5)

    def test_matches_window_oracle(self, rng):
        t = random_tensor(rng, 3, 8, 8)
        np.testing.assert_array_equal(
            maxpool2x2(t).array, maxpool2x2_loops(t.array)
        )

    def test_odd_dimension_rejected(self, rng):
        with pytest.raises(ShapeError):
            maxpool2x2(random_tensor(rng, 1, 3, 4))


class TestForwardPrefix:
    def layers(self, rng):
        return [
            Conv(make_spec(rng, 2, 3)),
            ReLU(),
            Conv(make_spec(rng, 3, 2)),
        ]

    def test_zero_input_zero_bias_through_relu(self, rng):
        spec = ConvLayerSpec(
            1,
            2,
            rng.standard_normal((2, 1, 3, 3)).astype(np.float32),
            np.zeros(2, dtype=np.float32),
        )
        out = forward_prefix(
            Tensor(np.zeros((1, 4, 4), dtype=np.float32)), [Conv(spec), ReLU()], 1
        )
        assert np.array_equal(out.array, np.zeros((2, 4, 4), dtype=np.float32))

    def test_prefix_of_one_equals_conv(self, rng):
        layers = self.layers(rng)
        x = random_tensor(rng, 2, 5, 5)
        np.testing.assert_array_equal(
            forward_prefix(x, layers, 0).array, conv3x3(x, layers[0].spec).array
        )

    def test_three_layer_prefix_equals_manual_chain(self, rng):
        layers = self.layers(rng)
        x = random_tensor(rng, 2, 5, 5)
        manual = conv3x3(relu(conv3x3(x, layers[0].spec)), layers[2].spec)
        np.testing.assert_array_equal(
            forward_prefix(x, layers, 2).array, manual.array
        )

    def test_error_names_failing_layer(self, rng):
        layers = self.layers(rng) + [MaxPool2x2()]
        x = random_tensor(rng, 2, 5, 5)  # odd dims reach the pool at index 3
        with pytest.raises(ShapeError, match="layer 3"):
            forward_prefix(x, layers, 3)

    def test_upto_out_of_range(self, rng):
        with pytest.raises(ShapeError):
            forward_prefix(random_tensor(rng, 2, 4, 4), self.layers(rng), 5)


class TestShapeAlgebra:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([4, 6, 8]))
    @settings(max_examples=20, deadline=None)
    def test_predicted_shape_matches_actual(self, seed, size):
        rng = np.random.default_rng(seed)
        layers = [
            Conv(make_spec(rng, 3, 4)),
            ReLU(),
            MaxPool2x2(),
            Conv(make_spec(rng, 4, 2)),
            ReLU(),
        ]
        x = random_tensor(rng, 3, size, size)
        predicted = output_shape(layers, (3, size, size))
        actual = forward_prefix(x, layers, len(layers) - 1)
        assert (actual.channels, actual.height, actual.width) == predicted

    def test_finite_in_finite_out(self, rng):
        layers = [Conv(make_spec(rng, 3, 4)), ReLU(), MaxPool2x2()]
        out = forward_prefix(random_tensor(rng, 3, 8, 8, scale=100.0), layers, 2)
        assert out.is_finite()
