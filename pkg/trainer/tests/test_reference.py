import math
from fractions import Fraction

import numpy as np
import pytest

from nnfi_trainer.quantize import QuantLayer
from nnfi_trainer.reference import (conv2d_int, dense_int, maxpool2_int,
                                    requant_saturate)


class TestRequant:
    def test_matches_rational_rounding(self):
        values = np.arange(-2000, 2001)
        for shift in range(0, 8):
            got = requant_saturate(values, shift)
            for v, g in zip(values, got):
                q = (math.floor(Fraction(int(v), 2 ** shift) + Fraction(1, 2))
                     if shift else int(v))
                assert int(g) == max(-128, min(127, q))


class TestConv:
    def test_hand_computed_3x3(self):
        x = np.arange(9, dtype=np.int8).reshape(3, 3, 1)
        w = np.zeros((3, 3, 1, 1), np.int8)
        w[1, 1, 0, 0] = 2  # center tap: out = 2 * x + bias
        # decs chosen so both shifts come out as 0
        layer = QuantLayer("c", w, np.array([3], np.int8),
                           weight_dec=0, bias_dec=-7, input_dec=0, output_dec=-7)
        assert layer.output_right_shift == 0 and layer.bias_left_shift == 0
        out = conv2d_int(x, layer)
        assert np.array_equal(out.reshape(3, 3), 2 * np.arange(9).reshape(3, 3) + 3)

    def test_zero_padding_at_border(self):
        x = np.full((2, 2, 1), 10, np.int8)
        w = np.ones((3, 3, 1, 1), np.int8)
        layer = QuantLayer("c", w, np.zeros(1, np.int8),
                           weight_dec=0, bias_dec=-7, input_dec=0, output_dec=-7)
        out = conv2d_int(x, layer).reshape(2, 2)
        # each output sums the 2x2 block that falls inside the image
        assert (out == 40).all()


class TestPoolDense:
    def test_pool(self):
        x = np.array([[1, 2], [3, 4]], np.int8).reshape(2, 2, 1)
        assert maxpool2_int(x).reshape(-1).tolist() == [4]

    def test_pool_block_independence(self):
        rng = np.random.default_rng(0)
        x = rng.integers(-128, 128, (6, 8, 3)).astype(np.int8)
        out = maxpool2_int(x)
        for i in range(3):
            for j in range(4):
                for c in range(3):
                    assert out[i, j, c] == x[2 * i:2 * i + 2,
                                             2 * j:2 * j + 2, c].max()

    def test_dense(self):
        w = np.array([[1, 0], [0, 2]], np.int8)
        layer = QuantLayer("d", w, np.array([5, -1], np.int8),
                           weight_dec=0, bias_dec=-7, input_dec=0, output_dec=-7)
        assert layer.output_right_shift == 0 and layer.bias_left_shift == 0
        out = dense_int(np.array([3, 4], np.int8), layer)
        assert out.tolist() == [8, 7]
