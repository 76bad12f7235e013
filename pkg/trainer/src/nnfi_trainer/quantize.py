"""Post-training quantization: per-tensor powers-of-two scales.

Each tensor gets one signed exponent ``dec`` with real = code * 2**(dec-7),
where dec = ceil(log2(max |tensor|)) (0 for an all-zero tensor). Weights
and biases are quantized directly; activation exponents are calibrated
from the max pre-activation magnitude over the training set.

The integer pipeline then needs two shift amounts per parametric layer:

    output_right_shift = 7 - dec_in - dec_w + dec_out   (accumulator -> output)
    bias_left_shift    = 7 - dec_in - dec_w + dec_b     (bias -> accumulator)

Both must be nonnegative; dec_b is raised when a tiny bias range would
drive the bias shift negative (precision loss on a bias nobody can
represent anyway, never a correctness issue).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .data import model_inputs
from .model import FashionCNN


def dec_of(max_abs: float) -> int:
    """Smallest d with 2**d >= max_abs; 0 when the tensor is all zero."""
    if max_abs == 0:
        return 0
    d = math.ceil(math.log2(max_abs))
    while math.ldexp(1.0, d) < max_abs:
        d += 1
    while math.ldexp(1.0, d - 1) >= max_abs:
        d -= 1
    return d


def quantize_tensor(values: np.ndarray, dec: int) -> np.ndarray:
    """Round-half-away-from-zero to int8 at scale 2**(7-dec)."""
    scaled = values.astype(np.float64) * 2.0 ** (7 - dec)
    q = np.floor(np.abs(scaled) + 0.5) * np.sign(scaled)
    return np.clip(q, -128, 127).astype(np.int8)


@dataclass
class QuantLayer:
    """One parametric layer of the integer pipeline."""

    name: str
    weights: np.ndarray  # int8, (Z, Z, C, K) for conv, (in, out) for dense
    bias: np.ndarray     # int8, (K,) / (out,)
    weight_dec: int
    bias_dec: int
    input_dec: int
    output_dec: int

    @property
    def output_right_shift(self) -> int:
        return 7 - self.input_dec - self.weight_dec + self.output_dec

    @property
    def bias_left_shift(self) -> int:
        return 7 - self.input_dec - self.weight_dec + self.bias_dec


@dataclass
class QuantModel:
    input_dec: int
    conv1: QuantLayer
    conv2: QuantLayer
    dense1: QuantLayer
    dense2: QuantLayer

    @property
    def layers(self):
        return (self.conv1, self.conv2, self.dense1, self.dense2)

    @property
    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@torch.no_grad()
def calibrate_activations(model: FashionCNN, images: np.ndarray,
                          batch_size: int = 1024) -> dict:
    """Max |pre-activation| per quantization point over a calibration set."""
    model.eval()
    maxima = {"conv1": 0.0, "conv2": 0.0, "dense1": 0.0, "dense2": 0.0}
    x_all = torch.from_numpy(model_inputs(images)).unsqueeze(1)
    for start in range(0, len(x_all), batch_size):
        preacts = model.forward_preacts(x_all[start:start + batch_size])
        for name, tensor in preacts.items():
            maxima[name] = max(maxima[name], float(tensor.abs().max()))
    return maxima


def _conv_weights_hwck(conv: torch.nn.Conv2d) -> np.ndarray:
    # torch stores (K, C, Z, Z); the integer engine wants (Z, Z, C, K)
    return conv.weight.detach().permute(2, 3, 1, 0).numpy()


def _dense1_weights_in_out(fc: torch.nn.Linear) -> np.ndarray:
    # torch flattens feature maps channel-major (c, h, w); the integer
    # engine flattens its HWC buffers position-major (h, w, c)
    w = fc.weight.detach().reshape(fc.out_features, 48, 7, 7)
    return w.permute(2, 3, 1, 0).reshape(7 * 7 * 48, fc.out_features).numpy()


def _dense_weights_in_out(fc: torch.nn.Linear) -> np.ndarray:
    return fc.weight.detach().t().numpy()


def quantize_model(model: FashionCNN, calibration_images: np.ndarray) -> QuantModel:
    maxima = calibrate_activations(model, calibration_images)
    act_dec = {name: dec_of(m) for name, m in maxima.items()}
    input_dec = 0  # pixels map to [0, 127] at scale 1/128

    def make(name, weights_f, bias_f, in_dec):
        w_dec = dec_of(float(np.max(np.abs(weights_f))))
        b_dec = dec_of(float(np.max(np.abs(bias_f))))
        floor_dec = in_dec + w_dec - 7  # keeps bias_left_shift >= 0
        if b_dec < floor_dec:
            warnings.warn(f"{name}: raising bias dec {b_dec} -> {floor_dec}")
            b_dec = floor_dec
        layer = QuantLayer(name, quantize_tensor(weights_f, w_dec),
                           quantize_tensor(bias_f, b_dec), w_dec, b_dec,
                           in_dec, act_dec[name])
        if not 0 <= layer.output_right_shift <= 31:
            raise ValueError(f"{name}: output_right_shift "
                             f"{layer.output_right_shift} out of range")
        return layer

    conv1 = make("conv1", _conv_weights_hwck(model.conv1),
                 model.conv1.bias.detach().numpy(), input_dec)
    conv2 = make("conv2", _conv_weights_hwck(model.conv2),
                 model.conv2.bias.detach().numpy(), act_dec["conv1"])
    dense1 = make("dense1", _dense1_weights_in_out(model.fc1),
                  model.fc1.bias.detach().numpy(), act_dec["conv2"])
    dense2 = make("dense2", _dense_weights_in_out(model.fc2),
                  model.fc2.bias.detach().numpy(), act_dec["dense1"])
    return QuantModel(input_dec, conv1, conv2, dense1, dense2)


def quantmodel_from_records(records) -> QuantModel:
    """Rebuild a QuantModel from NNFI records (our own reader's output)."""
    by_name = {r.name: r for r in records}
    input_dec = by_name["input"].output_dec

    def layer(name, dims, in_dec):
        r = by_name[name]
        built = QuantLayer(name, r.weights.reshape(dims), r.bias,
                           r.weight_dec, r.bias_dec, in_dec, r.output_dec)
        if (built.output_right_shift != r.output_right_shift
                or built.bias_left_shift != r.bias_left_shift):
            raise ValueError(f"{name}: stored shifts disagree with dec exponents")
        return built

    conv1 = layer("conv1", (3, 3, 1, 32), input_dec)
    conv2 = layer("conv2", (3, 3, 32, 48), conv1.output_dec)
    dense1 = layer("dense1", (2352, 24), conv2.output_dec)
    dense2 = layer("dense2", (24, 10), dense1.output_dec)
    return QuantModel(input_dec, conv1, conv2, dense1, dense2)
