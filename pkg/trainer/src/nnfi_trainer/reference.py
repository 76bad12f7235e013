"""Independent integer reference inference for golden traces.

This is the exporter's own int8 pipeline: one big patch-matrix matmul per
convolution, strided-slice max pooling, saturating requantization with
round-half-up (+2**(shift-1) then arithmetic shift). The simulator engine
implements the same arithmetic contract with entirely different code; the
``nnfi validate`` command checks the two agree bit-exactly on every layer.
"""

from __future__ import annotations

import numpy as np


def requant_saturate(acc: np.ndarray, right_shift: int) -> np.ndarray:
    acc = acc.astype(np.int64)
    if right_shift > 0:
        acc = (acc + (1 << (right_shift - 1))) >> right_shift
    return np.clip(acc, -128, 127).astype(np.int8)


def conv2d_int(x: np.ndarray, layer) -> np.ndarray:
    """Same-padded conv over an (H, W, C) int8 map, all kernels at once."""
    h, w, c = x.shape
    z = layer.weights.shape[0]
    k = layer.weights.shape[3]
    p = z // 2
    xp = np.zeros((h + 2 * p, w + 2 * p, c), np.int64)
    xp[p:p + h, p:p + w, :] = x
    cols = np.empty((h * w, z * z * c), np.int64)
    for m in range(z):
        for n in range(z):
            at = (m * z + n) * c
            cols[:, at:at + c] = xp[m:m + h, n:n + w, :].reshape(h * w, c)
    acc = cols @ layer.weights.reshape(z * z * c, k).astype(np.int64)
    acc += layer.bias.astype(np.int64) << layer.bias_left_shift
    return requant_saturate(acc, layer.output_right_shift).reshape(h, w, k)


def maxpool2_int(x: np.ndarray) -> np.ndarray:
    return np.maximum.reduce([x[0::2, 0::2], x[0::2, 1::2],
                              x[1::2, 0::2], x[1::2, 1::2]])


def dense_int(x: np.ndarray, layer) -> np.ndarray:
    acc = x.astype(np.int64) @ layer.weights.astype(np.int64)
    acc += layer.bias.astype(np.int64) << layer.bias_left_shift
    return requant_saturate(acc, layer.output_right_shift)


def run_reference(qmodel, image_int8: np.ndarray) -> list:
    """Per-layer int8 buffers for one (28, 28, 1) quantized image.

    Returns ordered (layer_name, buffer, dec) tuples covering every stage
    the simulator snapshots (conv pre-activation, then the in-place relu,
    pooling, flatten view, dense pre-activation, relu, logits).
    """
    out = []

    def record(name, values, dec):
        out.append((name, values.copy(), dec))
        return values

    x = image_int8.reshape(28, 28, 1)
    c1 = record("conv1", conv2d_int(x, qmodel.conv1), qmodel.conv1.output_dec)
    r1 = record("conv1_relu", np.maximum(c1, 0), qmodel.conv1.output_dec)
    p1 = record("pool1", maxpool2_int(r1), qmodel.conv1.output_dec)
    c2 = record("conv2", conv2d_int(p1, qmodel.conv2), qmodel.conv2.output_dec)
    r2 = record("conv2_relu", np.maximum(c2, 0), qmodel.conv2.output_dec)
    p2 = record("pool2", maxpool2_int(r2), qmodel.conv2.output_dec)
    flat = record("flatten", p2.reshape(-1), qmodel.conv2.output_dec)
    d1 = record("dense1", dense_int(flat, qmodel.dense1), qmodel.dense1.output_dec)
    rd1 = record("dense1_relu", np.maximum(d1, 0), qmodel.dense1.output_dec)
    record("dense2", dense_int(rd1, qmodel.dense2), qmodel.dense2.output_dec)
    return out


def predict(qmodel, image_int8: np.ndarray) -> int:
    logits = run_reference(qmodel, image_int8)[-1][1]
    return int(np.argmax(logits))


def quantized_accuracy(qmodel, images_u8: np.ndarray, labels: np.ndarray) -> float:
    from .data import quantize_images
    codes = quantize_images(images_u8)
    correct = sum(predict(qmodel, codes[i]) == int(labels[i])
                  for i in range(len(labels)))
    return correct / len(labels)
