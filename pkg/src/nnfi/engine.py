"""Layer-by-layer int8 CNN inference over persistent buffers.

The engine mimics how MCU deployment libraries execute a small CNN: one
int8 output buffer per layer lives in an arena that models SRAM, layers
run strictly in order, ReLU mutates its input buffer in place, and a
convolution writes its output channel by channel inside a loop over the
kernels. Faults hook exactly those control-flow points:

* the top of the conv kernel loop (early exit / skipped iteration leave
  output channels stale — whatever the buffer held before),
* each bias load of a dense layer,
* each element of a ReLU pass.

Two convolution backends are provided. ``naive`` follows the direct
nested-loop formulation; ``im2col`` materializes the patch matrix and
reduces each output channel to a matrix-vector product, like CMSIS-NN
style kernels. Both are bit-exact equal, fault-free and under faults.

Buffer contents persist across inferences unless ``BufferArena.reset`` is
invoked (or ``reset_between_inferences`` is set), which is what makes the
memory effect observable: skipping all kernels of the first conv layer
leaves the previous inference's features in place, and every downstream
layer deterministically recomputes the previous prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import StructuralError
from .faults import (BiasCorrupt, ConvEarlyExit, ConvSkipKernel, FaultHooks,
                     FaultPlan, KernelDecision, NoFault, ReluDecision,
                     ReluForceReset, ReluSkipReset)
from .qtensor import AccumMode, QuantTensor, requantize_array

KIND_CONV2D = "conv2d"
KIND_MAXPOOL = "maxpool2x2"
KIND_RELU = "relu"
KIND_DENSE = "dense"
KIND_FLATTEN = "flatten"
KIND_SOFTMAX = "softmax"
ALL_KINDS = (KIND_CONV2D, KIND_MAXPOOL, KIND_RELU, KIND_DENSE, KIND_FLATTEN,
             KIND_SOFTMAX)

#: Layer kinds that reuse their input buffer (in-place / view semantics).
ALIAS_KINDS = (KIND_RELU, KIND_FLATTEN, KIND_SOFTMAX)

BACKENDS = ("naive", "im2col")


def _prod(shape) -> int:
    n = 1
    for d in shape:
        n *= int(d)
    return n


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the graph: shapes, quantization exponents, payloads.

    ``output_right_shift`` moves the wide accumulator into the output's
    scale; ``bias_left_shift`` aligns the int8 bias into the accumulator's
    scale. Both are computed by whoever exported the model; the engine only
    requires them to be valid shift amounts.
    """

    kind: str
    name: str
    input_shape: tuple
    output_shape: tuple
    weights: QuantTensor | None = None
    bias: np.ndarray | None = None
    bias_dec: int = 0
    output_dec: int = 0
    output_right_shift: int = 0
    bias_left_shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "output_shape", tuple(int(d) for d in self.output_shape))
        if self.kind not in ALL_KINDS:
            raise StructuralError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if not 0 <= self.output_right_shift <= 31:
            raise StructuralError(f"layer {self.name!r}: output_right_shift outside [0, 31]")
        if not 0 <= self.bias_left_shift <= 31:
            raise StructuralError(f"layer {self.name!r}: bias_left_shift outside [0, 31]")
        if self.bias is not None and self.bias.dtype != np.int8:
            raise StructuralError(f"layer {self.name!r}: bias must be int8")
        check = _KIND_CHECKS[self.kind]
        check(self)

    @property
    def parameter_count(self) -> int:
        n = 0
        if self.weights is not None:
            n += self.weights.size
        if self.bias is not None:
            n += self.bias.size
        return n


def _check_conv2d(layer: LayerSpec):
    if layer.weights is None:
        raise StructuralError(f"conv layer {layer.name!r} has no weights")
    if len(layer.weights.shape) != 4 or len(layer.input_shape) != 3:
        raise StructuralError(f"conv layer {layer.name!r}: bad shapes")
    z0, z1, c, k = layer.weights.shape
    h, w, cin = layer.input_shape
    if z0 != z1 or z0 % 2 == 0:
        raise StructuralError(
            f"conv layer {layer.name!r}: kernels must be square with odd size, got {z0}x{z1}")
    if c != cin:
        raise StructuralError(
            f"conv layer {layer.name!r}: weight channels {c} != input channels {cin}")
    if layer.output_shape != (h, w, k):
        raise StructuralError(
            f"conv layer {layer.name!r}: output shape {layer.output_shape} != {(h, w, k)}")
    if layer.bias is not None and layer.bias.size != k:
        raise StructuralError(f"conv layer {layer.name!r}: bias length {layer.bias.size} != {k}")


def _check_dense(layer: LayerSpec):
    if layer.weights is None:
        raise StructuralError(f"dense layer {layer.name!r} has no weights")
    if len(layer.weights.shape) != 2:
        raise StructuralError(f"dense layer {layer.name!r}: weights must be [in, out]")
    n_in, n_out = layer.weights.shape
    if _prod(layer.input_shape) != n_in:
        raise StructuralError(
            f"dense layer {layer.name!r}: input size {_prod(layer.input_shape)} != {n_in}")
    if layer.output_shape != (n_out,):
        raise StructuralError(f"dense layer {layer.name!r}: output shape must be ({n_out},)")
    if layer.bias is not None and layer.bias.size != n_out:
        raise StructuralError(f"dense layer {layer.name!r}: bias length != {n_out}")


def _check_maxpool(layer: LayerSpec):
    if len(layer.input_shape) != 3:
        raise StructuralError(f"pool layer {layer.name!r}: input must be (H, W, C)")
    h, w, c = layer.input_shape
    if h % 2 or w % 2:
        raise StructuralError(f"pool layer {layer.name!r}: spatial dims must be even")
    if layer.output_shape != (h // 2, w // 2, c):
        raise StructuralError(f"pool layer {layer.name!r}: bad output shape")


def _check_same_shape(layer: LayerSpec):
    if layer.output_shape != layer.input_shape:
        raise StructuralError(f"layer {layer.name!r}: output shape must equal input shape")


def _check_flatten(layer: LayerSpec):
    if len(layer.output_shape) != 1 or _prod(layer.input_shape) != layer.output_shape[0]:
        raise StructuralError(f"flatten layer {layer.name!r}: sizes disagree")


_KIND_CHECKS = {
    KIND_CONV2D: _check_conv2d,
    KIND_DENSE: _check_dense,
    KIND_MAXPOOL: _check_maxpool,
    KIND_RELU: _check_same_shape,
    KIND_FLATTEN: _check_flatten,
    KIND_SOFTMAX: _check_same_shape,
}


def conv2d_layer(name, input_shape, weights, bias, *, bias_dec=0, output_dec=0,
                 output_right_shift=0, bias_left_shift=0) -> LayerSpec:
    h, w, _ = input_shape
    k = weights.shape[3]
    return LayerSpec(KIND_CONV2D, name, tuple(input_shape), (h, w, k), weights,
                     bias, bias_dec, output_dec, output_right_shift, bias_left_shift)


def dense_layer(name, weights, bias, *, bias_dec=0, output_dec=0,
                output_right_shift=0, bias_left_shift=0) -> LayerSpec:
    n_in, n_out = weights.shape
    return LayerSpec(KIND_DENSE, name, (n_in,), (n_out,), weights, bias,
                     bias_dec, output_dec, output_right_shift, bias_left_shift)


def relu_layer(name, shape, output_dec=0) -> LayerSpec:
    return LayerSpec(KIND_RELU, name, tuple(shape), tuple(shape), output_dec=output_dec)


def maxpool_layer(name, input_shape, output_dec=0) -> LayerSpec:
    h, w, c = input_shape
    return LayerSpec(KIND_MAXPOOL, name, (h, w, c), (h // 2, w // 2, c),
                     output_dec=output_dec)


def flatten_layer(name, input_shape, output_dec=0) -> LayerSpec:
    return LayerSpec(KIND_FLATTEN, name, tuple(input_shape), (_prod(input_shape),),
                     output_dec=output_dec)


def softmax_layer(name, n, output_dec=0) -> LayerSpec:
    return LayerSpec(KIND_SOFTMAX, name, (n,), (n,), output_dec=output_dec)


@dataclass(frozen=True)
class ModelGraph:
    """Ordered layer list plus the model input description."""

    layers: tuple
    input_shape: tuple
    input_dec: int = 0
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise StructuralError("duplicate layer names in model")
        cur = self.input_shape
        for layer in self.layers:
            if layer.input_shape != cur:
                raise StructuralError(
                    f"layer {layer.name!r}: input shape {layer.input_shape} "
                    f"does not match previous output {cur}")
            cur = layer.output_shape
        if self.layers and _prod(cur) != self.num_classes:
            raise StructuralError(
                f"final output size {_prod(cur)} != num_classes {self.num_classes}")
        if self.layers and self.layers[0].kind in ALIAS_KINDS:
            raise StructuralError("first layer cannot be an in-place layer")
        object.__setattr__(self, "_by_name", {l.name: l for l in self.layers})

    @property
    def parameter_count(self) -> int:
        return sum(l.parameter_count for l in self.layers)

    def layer(self, name: str) -> LayerSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise StructuralError(f"model has no layer named {name!r}") from None

    @property
    def layer_names(self) -> tuple:
        return tuple(l.name for l in self.layers)


class BufferArena:
    """Named per-layer int8 output buffers, persistent across inferences.

    Buffers are allocated once (zeroed) and never reallocated; in-place
    layers (relu/flatten/softmax) alias their input layer's storage, the
    way the MCU implementation reuses RAM. Contents survive from one
    inference to the next unless :meth:`reset` runs, so partially skipped
    conv layers leave stale channels behind.
    """

    def __init__(self, model: ModelGraph, reset_between_inferences: bool = False):
        self.reset_between_inferences = bool(reset_between_inferences)
        self.layer_names = model.layer_names
        self._buffers = {}
        self._owned = []
        prev = None
        for layer in model.layers:
            size = _prod(layer.output_shape)
            if layer.kind in ALIAS_KINDS:
                if prev is None or prev.size != size:
                    raise StructuralError(
                        f"layer {layer.name!r} cannot alias its input buffer")
                raw = prev
            else:
                raw = np.zeros(size, dtype=np.int8)
                self._owned.append(raw)
            self._buffers[layer.name] = raw
            prev = raw

    def raw(self, name: str) -> np.ndarray:
        try:
            return self._buffers[name]
        except KeyError:
            raise StructuralError(f"arena has no buffer for layer {name!r}") from None

    def snapshot(self, name: str) -> np.ndarray:
        return self.raw(name).copy()

    def reset(self):
        for buf in self._owned:
            buf.fill(0)

    def matches(self, model: ModelGraph) -> bool:
        return (self.layer_names == model.layer_names
                and all(self._buffers[l.name].size == _prod(l.output_shape)
                        for l in model.layers))


@dataclass
class Prediction:
    """Inference outcome: raw logits, argmax label, display-only scores."""

    label: int
    logits: np.ndarray
    scores: np.ndarray
    trace: dict | None = None


def softmax_or_argmax(logits: np.ndarray, output_dec: int = 0) -> Prediction:
    """Label = lowest index attaining the max raw logit.

    The normalized scores are the softmax of the dequantized logits; they
    are reported for display only and never affect the label (softmax is
    monotone, so argmax over raw int8 logits is the prediction).
    """
    flat = np.asarray(logits).reshape(-1)
    label = int(np.argmax(flat))
    reals = flat.astype(np.float64) * 2.0 ** (output_dec - 7)
    e = np.exp(reals - np.max(reals))
    return Prediction(label=label, logits=flat.astype(np.int8).copy(),
                      scores=e / np.sum(e))


def _pad_same(x: np.ndarray, z: int) -> np.ndarray:
    """Zero-pad (H, W, C) so a ZxZ kernel keeps the spatial size, as int64."""
    p = z // 2
    h, w, c = x.shape
    out = np.zeros((h + 2 * p, w + 2 * p, c), dtype=np.int64)
    out[p:p + h, p:p + w, :] = x
    return out


def _conv_preamble(input_q: QuantTensor, layer: LayerSpec, out_buffer: np.ndarray):
    if layer.kind != KIND_CONV2D:
        raise StructuralError(f"layer {layer.name!r} is not a conv layer")
    if tuple(input_q.shape) != layer.input_shape:
        raise StructuralError(
            f"conv {layer.name!r}: input shape {input_q.shape} != {layer.input_shape}")
    if out_buffer.size != _prod(layer.output_shape):
        raise StructuralError(f"conv {layer.name!r}: output buffer size mismatch")
    h, w, _ = layer.input_shape
    z = layer.weights.shape[0]
    k = layer.weights.shape[3]
    xp = _pad_same(input_q.reshaped(), z)
    w64 = layer.weights.reshaped().astype(np.int64)
    bias = layer.bias if layer.bias is not None else np.zeros(k, dtype=np.int8)
    out3d = out_buffer.reshape(h, w, k)
    return h, w, z, k, xp, w64, bias, out3d


def conv2d_naive(input_q: QuantTensor, layer: LayerSpec, out_buffer: np.ndarray,
                 hooks: FaultHooks | None = None,
                 mode: AccumMode = AccumMode.SATURATE):
    """Direct convolution: outer loop over kernels, same zero padding.

    The kernel-loop hook is consulted before each kernel (and once more
    after the last one, where an early exit is a no-op). Exit stops the
    loop: channels >= k keep their previous buffer contents. A skipped
    iteration leaves exactly channel k stale, bias initialization included,
    and continues with k+1.
    """
    h, w, z, k_total, xp, w64, bias, out3d = _conv_preamble(input_q, layer, out_buffer)
    for k in range(k_total + 1):
        if hooks is not None:
            decision = hooks.on_kernel_loop(layer.name, k)
            if decision is KernelDecision.EXIT:
                break
            if decision is KernelDecision.SKIP_ONE:
                continue
        if k == k_total:
            break
        acc = np.full((h, w), int(bias[k]) << layer.bias_left_shift, dtype=np.int64)
        for m in range(z):
            for n in range(z):
                acc += xp[m:m + h, n:n + w, :] @ w64[m, n, :, k]
        out3d[:, :, k] = requantize_array(acc, layer.output_right_shift, mode)


def conv2d_im2col(input_q: QuantTensor, layer: LayerSpec, out_buffer: np.ndarray,
                  hooks: FaultHooks | None = None,
                  mode: AccumMode = AccumMode.SATURATE):
    """im2col convolution: patch matrix once, then one matvec per kernel.

    Rows of the patch matrix are output positions, columns are the ZxZxC
    patch elements (zero padded). The loop over output channels consults
    the same kernel-loop hook with identical Exit/SkipOne semantics, and
    the fault-free result is bit-exact equal to :func:`conv2d_naive`.
    """
    h, w, z, k_total, xp, w64, bias, out3d = _conv_preamble(input_q, layer, out_buffer)
    c = layer.weights.shape[2]
    cols = np.empty((h * w, z * z * c), dtype=np.int64)
    for m in range(z):
        for n in range(z):
            j = (m * z + n) * c
            cols[:, j:j + c] = xp[m:m + h, n:n + w, :].reshape(h * w, c)
    wflat = w64.reshape(z * z * c, k_total)
    for k in range(k_total + 1):
        if hooks is not None:
            decision = hooks.on_kernel_loop(layer.name, k)
            if decision is KernelDecision.EXIT:
                break
            if decision is KernelDecision.SKIP_ONE:
                continue
        if k == k_total:
            break
        acc = cols @ wflat[:, k]
        acc += int(bias[k]) << layer.bias_left_shift
        out3d[:, :, k] = requantize_array(acc, layer.output_right_shift, mode).reshape(h, w)


_CONV_BACKENDS: dict[str, Callable] = {
    "naive": conv2d_naive,
    "im2col": conv2d_im2col,
}


def relu_inplace(buffer: np.ndarray, hooks: FaultHooks | None = None,
                 layer_name: str = ""):
    """Elementwise max(0, x) on the buffer, honoring a per-element fault.

    Elements are processed in index order; a single-shot plan can disturb
    at most one of them, so the untargeted elements are plain ReLU and are
    applied vectorized. SkipReset leaves the element's (possibly negative)
    pre-activation in place; ForceReset zeroes it even when positive.
    """
    flat = buffer.reshape(-1)
    target = hooks.relu_target(layer_name) if hooks is not None else None
    decision = ReluDecision.NORMAL
    original = 0
    if target is not None:
        if not 0 <= target < flat.size:
            raise StructuralError(
                f"relu fault element {target} outside layer {layer_name!r} "
                f"of size {flat.size}")
        original = int(flat[target])
        decision = hooks.on_relu_element(layer_name, target, original)
    np.maximum(flat, 0, out=flat)
    if decision is ReluDecision.SKIP_RESET:
        flat[target] = original
    elif decision is ReluDecision.FORCE_RESET:
        flat[target] = 0


def maxpool2x2(input_q: QuantTensor) -> QuantTensor:
    """2x2 max pooling with stride 2, per channel; dec unchanged."""
    if len(input_q.shape) != 3:
        raise StructuralError("maxpool input must be (H, W, C)")
    h, w, c = input_q.shape
    if h % 2 or w % 2:
        raise StructuralError(f"maxpool needs even spatial dims, got {h}x{w}")
    x = input_q.reshaped()
    pooled = x.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))
    return QuantTensor((h // 2, w // 2, c), pooled, input_q.dec)


def dense(input_values: np.ndarray, layer: LayerSpec, out_buffer: np.ndarray,
          hooks: FaultHooks | None = None, mode: AccumMode = AccumMode.SATURATE):
    """Fully connected layer; the bias load of each neuron is hookable.

    The hook may substitute an arbitrary int32 for the stored bias (and the
    bias guard countermeasure filters the loaded value). The returned value
    enters the accumulator through the bias left shift, so a corrupted bias
    dominates the weighted sum and saturates the output.
    """
    if layer.kind != KIND_DENSE:
        raise StructuralError(f"layer {layer.name!r} is not a dense layer")
    x = input_values.reshape(-1)
    n_in, n_out = layer.weights.shape
    if x.size != n_in:
        raise StructuralError(
            f"dense {layer.name!r}: input size {x.size} != {n_in}")
    if out_buffer.size != n_out:
        raise StructuralError(f"dense {layer.name!r}: output buffer size mismatch")
    acc = x.astype(np.int64) @ layer.weights.reshaped().astype(np.int64)
    bias = layer.bias if layer.bias is not None else np.zeros(n_out, dtype=np.int8)
    for j in range(n_out):
        b = int(bias[j])
        if hooks is not None:
            b = hooks.on_bias_load(layer.name, j, b)
        acc[j] += b << layer.bias_left_shift
    if hooks is not None:
        bound = hooks.output_clamp_bound()
        if bound is not None:
            np.clip(acc, -bound, bound, out=acc)
    out_buffer[:] = requantize_array(acc, layer.output_right_shift, mode)


def validate_fault(model: ModelGraph, spec):
    """Reject fault specs whose layer or index is out of bounds."""
    if spec is None or isinstance(spec, NoFault):
        return
    layer = model.layer(spec.layer)
    if isinstance(spec, ConvEarlyExit):
        if layer.kind != KIND_CONV2D:
            raise StructuralError(f"{spec.layer!r} is not a conv layer")
        k = layer.weights.shape[3]
        if not 0 <= spec.last_kernel <= k:
            raise StructuralError(
                f"last_kernel {spec.last_kernel} outside [0, {k}] for {spec.layer!r}")
    elif isinstance(spec, ConvSkipKernel):
        if layer.kind != KIND_CONV2D:
            raise StructuralError(f"{spec.layer!r} is not a conv layer")
        k = layer.weights.shape[3]
        if not 0 <= spec.kernel < k:
            raise StructuralError(
                f"kernel {spec.kernel} outside [0, {k - 1}] for {spec.layer!r}")
    elif isinstance(spec, BiasCorrupt):
        if layer.kind != KIND_DENSE:
            raise StructuralError(f"{spec.layer!r} is not a dense layer")
        n_out = layer.weights.shape[1]
        if not 0 <= spec.neuron < n_out:
            raise StructuralError(
                f"neuron {spec.neuron} outside [0, {n_out - 1}] for {spec.layer!r}")
    elif isinstance(spec, (ReluSkipReset, ReluForceReset)):
        if layer.kind != KIND_RELU:
            raise StructuralError(f"{spec.layer!r} is not a relu layer")
        size = _prod(layer.output_shape)
        if not 0 <= spec.element < size:
            raise StructuralError(
                f"element {spec.element} outside [0, {size - 1}] for {spec.layer!r}")
    else:
        raise StructuralError(f"unknown fault spec {spec!r}")


def infer(model: ModelGraph, image: QuantTensor, arena: BufferArena,
          plan: FaultPlan | None = None, *, guard=None, backend: str = "naive",
          accum_mode: AccumMode = AccumMode.SATURATE,
          record_trace: bool = False) -> Prediction:
    """Run the model over the arena, firing at most one fault.

    ``plan`` is single shot: once a hook matches, the plan disarms for the
    rest of the inference (and for any reuse of the same plan object).
    When ``arena.reset_between_inferences`` is set, all buffers are zeroed
    before the first layer, otherwise contents from the previous inference
    remain visible to partially skipped layers.
    """
    if not model.layers:
        raise StructuralError("cannot run inference on an empty model")
    if tuple(image.shape) != model.input_shape:
        raise StructuralError(
            f"image shape {image.shape} != model input {model.input_shape}")
    if not arena.matches(model):
        raise StructuralError("arena was built for a different model")
    if backend not in _CONV_BACKENDS:
        raise StructuralError(f"unknown conv backend {backend!r}")
    if plan is not None:
        validate_fault(model, plan.spec)
    conv_fn = _CONV_BACKENDS[backend]
    hooks = FaultHooks(plan, guard)

    if arena.reset_between_inferences:
        arena.reset()

    trace = {} if record_trace else None
    current = image.reshaped()
    cur_dec = model.input_dec
    logits = None
    logits_dec = 0
    for layer in model.layers:
        if layer.kind == KIND_CONV2D:
            raw = arena.raw(layer.name)
            conv_fn(QuantTensor(layer.input_shape, current, cur_dec), layer, raw,
                    hooks, accum_mode)
            current = raw.reshape(layer.output_shape)
            cur_dec = layer.output_dec
        elif layer.kind == KIND_RELU:
            relu_inplace(arena.raw(layer.name), hooks, layer.name)
        elif layer.kind == KIND_MAXPOOL:
            pooled = maxpool2x2(QuantTensor(layer.input_shape, current, cur_dec))
            raw = arena.raw(layer.name)
            raw[:] = pooled.values.reshape(-1)
            current = raw.reshape(layer.output_shape)
        elif layer.kind == KIND_FLATTEN:
            current = arena.raw(layer.name)
        elif layer.kind == KIND_DENSE:
            raw = arena.raw(layer.name)
            dense(current, layer, raw, hooks, accum_mode)
            current = raw
            cur_dec = layer.output_dec
        elif layer.kind == KIND_SOFTMAX:
            logits = current
            logits_dec = cur_dec
        if record_trace:
            trace[layer.name] = current.reshape(layer.output_shape).copy()

    if logits is None:
        logits = current
        logits_dec = cur_dec
    if logits.size != model.num_classes:
        raise StructuralError(
            f"final layer produced {logits.size} values, expected {model.num_classes}")
    prediction = softmax_or_argmax(logits, logits_dec)
    prediction.trace = trace
    return prediction


def fashion_cnn_layers(conv1, conv2, dense1, dense2, input_dec: int = 0):
    """Assemble the standard Fashion-MNIST graph from four parameter packs.

    Each pack is a dict with keys weights (QuantTensor), bias (int8 array),
    bias_dec, output_dec, output_right_shift, bias_left_shift. The layout is
    conv 32x3x3 / relu / pool, conv 48x3x3 / relu / pool, flatten,
    dense 24 / relu, dense 10 / softmax: 70,914 trainable parameters.
    """
    layers = [
        conv2d_layer("conv1", (28, 28, 1), **conv1),
        relu_layer("conv1_relu", (28, 28, 32), conv1["output_dec"]),
        maxpool_layer("pool1", (28, 28, 32), conv1["output_dec"]),
        conv2d_layer("conv2", (14, 14, 32), **conv2),
        relu_layer("conv2_relu", (14, 14, 48), conv2["output_dec"]),
        maxpool_layer("pool2", (14, 14, 48), conv2["output_dec"]),
        flatten_layer("flatten", (7, 7, 48), conv2["output_dec"]),
        dense_layer("dense1", **dense1),
        relu_layer("dense1_relu", (24,), dense1["output_dec"]),
        dense_layer("dense2", **dense2),
        softmax_layer("softmax", 10, dense2["output_dec"]),
    ]
    model = ModelGraph(tuple(layers), (28, 28, 1), input_dec=input_dec, num_classes=10)
    if model.parameter_count != 70914:
        raise StructuralError(
            f"reference architecture must have 70,914 parameters, "
            f"got {model.parameter_count}")
    return model


def random_fashion_cnn(seed: int = 0) -> ModelGraph:
    """The standard architecture with random weights and plausible shifts.

    Useful for structural tests and demos that do not need a trained model;
    the shift choices keep activations spread over the int8 range instead
    of saturating or vanishing.
    """
    rng = np.random.default_rng(seed)

    def pack(weights_shape, n_out, rs, bls, in_dec, w_dec):
        w = rng.integers(-128, 128, size=weights_shape, dtype=np.int64).astype(np.int8)
        b = rng.integers(-128, 128, size=n_out, dtype=np.int64).astype(np.int8)
        return {
            "weights": QuantTensor(weights_shape, w, w_dec),
            "bias": b,
            "bias_dec": bls - 7 + in_dec + w_dec,
            "output_dec": rs + in_dec + w_dec - 7,
            "output_right_shift": rs,
            "bias_left_shift": bls,
        }

    conv1 = pack((3, 3, 1, 32), 32, rs=8, bls=4, in_dec=0, w_dec=0)
    conv2 = pack((3, 3, 32, 48), 48, rs=10, bls=4, in_dec=conv1["output_dec"], w_dec=0)
    d1 = pack((2352, 24), 24, rs=11, bls=4, in_dec=conv2["output_dec"], w_dec=0)
    d2 = pack((24, 10), 10, rs=8, bls=4, in_dec=d1["output_dec"], w_dec=0)
    return fashion_cnn_layers(conv1, conv2, d1, d2, input_dec=0)
