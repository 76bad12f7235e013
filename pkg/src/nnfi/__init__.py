"""Bit-exact simulator of int8 CNN inference on 32-bit microcontrollers,
with pluggable single instruction-skip fault models, software
countermeasures, and a sweep campaign harness."""

from .campaign import (FAULT_FAMILIES, BaselineResult, IndexResult, SweepReport,
                       SweepSpec, majority_label, model_digest, run_baseline,
                       run_sweep, write_report)
from .engine import (BACKENDS, BufferArena, LayerSpec, ModelGraph, Prediction,
                     conv2d_im2col, conv2d_layer, conv2d_naive, dense,
                     dense_layer, fashion_cnn_layers, flatten_layer, infer,
                     maxpool2x2, maxpool_layer, random_fashion_cnn, relu_inplace,
                     relu_layer, softmax_layer, softmax_or_argmax, validate_fault)
from .errors import (BadMagicError, DatasetError, ModelFormatError, NnfiError,
                     PayloadMismatchError, StructuralError, TruncatedFileError,
                     UnsupportedVersionError)
from .faults import (DEFAULT_CORRUPT_VALUE, BiasCorrupt, ConvEarlyExit,
                     ConvSkipKernel, CountermeasureConfig, FaultHooks, FaultPlan,
                     KernelDecision, NoFault, ReluDecision, ReluForceReset,
                     ReluSkipReset, fault_from_json, fault_to_json, on_bias_load,
                     on_kernel_loop, on_relu_element)
from .model_io import (Dataset, GoldenTrace, load_idx, load_model,
                       load_model_bytes, load_traces, quantize_input,
                       save_model, save_model_bytes, save_traces, select_subset)
from .qtensor import (INT8_MAX, INT8_MIN, Accumulator, AccumMode, QuantTensor,
                      compute_dec, dequantize, quantize, quantize_array,
                      requantize, requantize_array, requantize_value)

__version__ = "0.1.0"
