"""Golden trace export: per-layer integer buffers for a handful of images."""

from __future__ import annotations

import numpy as np

from .data import quantize_images
from .nnfi_format import write_traces
from .reference import run_reference


def golden_traces(qmodel, images_u8: np.ndarray, labels: np.ndarray,
                  indices) -> list:
    codes = quantize_images(images_u8)
    traces = []
    for idx in indices:
        layers = run_reference(qmodel, codes[idx])
        traces.append({
            "index": int(idx),
            "input": codes[idx].reshape(28, 28, 1),
            "input_dec": qmodel.input_dec,
            "label": int(labels[idx]),
            "layers": layers,
        })
    return traces


def export_golden_traces(qmodel, images_u8, labels, n: int, path) -> list:
    traces = golden_traces(qmodel, images_u8, labels, range(n))
    write_traces(traces, path)
    return traces
