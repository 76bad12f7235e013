"""Brute-force oracles and model builders shared by the test suite.

The oracles are deliberately dumb (nested Python loops, exact rational
rounding) and independent of the vectorized implementation paths they
check.
"""

import math
from fractions import Fraction

import numpy as np

from nnfi import (AccumMode, Dataset, ModelGraph, QuantTensor, conv2d_layer,
                  dense_layer, flatten_layer, relu_layer)


def shift_round_oracle(value: int, shift: int, mode: AccumMode) -> int:
    """Round-to-nearest (ties toward +inf) of value / 2**shift, then narrow."""
    if shift == 0:
        q = int(value)
    else:
        q = math.floor(Fraction(int(value), 2 ** shift) + Fraction(1, 2))
    if mode is AccumMode.SATURATE:
        return max(-128, min(127, q))
    return ((q & 0xFF) ^ 0x80) - 0x80


def conv_reference(x, weights, bias, bias_left_shift, right_shift, mode):
    """Same-padded convolution by direct summation."""
    h, w, _ = x.shape
    z, _, c, k_total = weights.shape
    p = z // 2
    out = np.zeros((h, w, k_total), np.int8)
    for k in range(k_total):
        for i in range(h):
            for j in range(w):
                acc = int(bias[k]) << bias_left_shift
                for m in range(z):
                    for n in range(z):
                        ii, jj = i + m - p, j + n - p
                        if 0 <= ii < h and 0 <= jj < w:
                            for ch in range(c):
                                acc += int(weights[m, n, ch, k]) * int(x[ii, jj, ch])
                out[i, j, k] = shift_round_oracle(acc, right_shift, mode)
    return out


def dense_reference(x, weights, bias, bias_left_shift, right_shift, mode):
    n_in, n_out = weights.shape
    out = np.zeros(n_out, np.int8)
    for j in range(n_out):
        acc = int(bias[j]) << bias_left_shift
        for i in range(n_in):
            acc += int(weights[i, j]) * int(x[i])
        out[j] = shift_round_oracle(acc, right_shift, mode)
    return out


def maxpool_reference(x):
    h, w, c = x.shape
    out = np.zeros((h // 2, w // 2, c), np.int8)
    for i in range(h // 2):
        for j in range(w // 2):
            for ch in range(c):
                out[i, j, ch] = x[2 * i:2 * i + 2, 2 * j:2 * j + 2, ch].max()
    return out


def random_int8(rng, shape):
    return rng.integers(-128, 128, size=shape).astype(np.int8)


def random_image_tensor(rng, shape):
    return QuantTensor(tuple(shape), random_int8(rng, shape), 0)


def build_small_model(seed=0, h=6, w=6, c=2, k=3, z=3, n_out=4,
                      conv_shift=8, dense_shift=9):
    """conv -> relu -> flatten -> dense -> relu, every fault family addressable."""
    rng = np.random.default_rng(seed)
    conv_w = QuantTensor((z, z, c, k), random_int8(rng, (z, z, c, k)), 0)
    conv_b = random_int8(rng, k)
    dense_w = QuantTensor((h * w * k, n_out), random_int8(rng, (h * w * k, n_out)), 0)
    dense_b = random_int8(rng, n_out)
    layers = (
        conv2d_layer("conv1", (h, w, c), conv_w, conv_b, bias_dec=0,
                     output_dec=conv_shift - 7, output_right_shift=conv_shift,
                     bias_left_shift=2),
        relu_layer("conv1_relu", (h, w, k), conv_shift - 7),
        flatten_layer("flatten", (h, w, k), conv_shift - 7),
        dense_layer("dense1", dense_w, dense_b, bias_dec=0,
                    output_dec=dense_shift + conv_shift - 14,
                    output_right_shift=dense_shift, bias_left_shift=2),
        relu_layer("dense1_relu", (n_out,), dense_shift + conv_shift - 14),
    )
    return ModelGraph(layers, (h, w, c), input_dec=0, num_classes=n_out)


def random_config(rng):
    """Random small conv configuration within the acceptance bounds."""
    return {
        "h": int(rng.integers(1, 5)) * 2,  # 2..8, even so pooling-free shapes stay easy
        "w": int(rng.integers(1, 5)) * 2,
        "c": int(rng.integers(1, 5)),
        "k": int(rng.integers(1, 9)),
        "z": int(rng.choice([1, 3])),
        "n_out": int(rng.integers(2, 6)),
    }


def tiny_dataset(rng, n=6, size=28):
    """Random uint8 images with random labels in [0, 9]."""
    images = rng.integers(0, 256, size=(n, size, size)).astype(np.uint8)
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    return Dataset(images, labels)
