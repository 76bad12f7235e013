"""Writer (and reader, for self-checks) of the NNFI container format.

This mirrors the documented byte layout, implemented independently of the
simulator package:

    header:  b"NNFI" | u16 version=1 | u16 record_count      (little endian)
    record:  u8 kind | u16 name_len | name
             u32 ndim | u32 * ndim dims
             i8 weight_dec | i8 bias_dec | i8 output_dec
             u8 output_right_shift | u8 bias_left_shift
             u32 weight_len | int8 weight bytes
             u32 bias_len | int8 bias bytes
    kinds:   0 input, 1 conv2d, 2 maxpool2x2, 3 relu, 4 dense,
             5 flatten, 6 softmax, 7 trace
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"NNFI"
VERSION = 1

KIND_INPUT = 0
KIND_CONV2D = 1
KIND_MAXPOOL = 2
KIND_RELU = 3
KIND_DENSE = 4
KIND_FLATTEN = 5
KIND_SOFTMAX = 6
KIND_TRACE = 7

_EMPTY = np.empty(0, np.int8)


@dataclass
class Record:
    kind: int
    name: str
    dims: tuple
    weight_dec: int = 0
    bias_dec: int = 0
    output_dec: int = 0
    output_right_shift: int = 0
    bias_left_shift: int = 0
    weights: np.ndarray = field(default_factory=lambda: _EMPTY)
    bias: np.ndarray = field(default_factory=lambda: _EMPTY)


def _encode_record(rec: Record) -> bytes:
    name = rec.name.encode("utf-8")
    out = bytearray()
    out += struct.pack("<BH", rec.kind, len(name))
    out += name
    out += struct.pack(f"<I{len(rec.dims)}I", len(rec.dims), *rec.dims)
    out += struct.pack("<bbbBB", rec.weight_dec, rec.bias_dec, rec.output_dec,
                       rec.output_right_shift, rec.bias_left_shift)
    w = np.ascontiguousarray(rec.weights, dtype=np.int8).tobytes()
    b = np.ascontiguousarray(rec.bias, dtype=np.int8).tobytes()
    out += struct.pack("<I", len(w)) + w
    out += struct.pack("<I", len(b)) + b
    return bytes(out)


def write_container(records, path) -> bytes:
    data = MAGIC + struct.pack("<HH", VERSION, len(records))
    data += b"".join(_encode_record(r) for r in records)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def read_container(path) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<HH", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos = 8
    records = []
    for _ in range(count):
        kind, name_len = struct.unpack_from("<BH", data, pos)
        pos += 3
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        wdec, bdec, odec, rs, ls = struct.unpack_from("<bbbBB", data, pos)
        pos += 5
        (wlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        weights = np.frombuffer(data, np.int8, wlen, pos).copy()
        pos += wlen
        (blen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        bias = np.frombuffer(data, np.int8, blen, pos).copy()
        pos += blen
        records.append(Record(kind, name, tuple(dims), wdec, bdec, odec, rs,
                              ls, weights, bias))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return records


def model_records(qmodel) -> list:
    """The record sequence for the standard Fashion-MNIST architecture."""
    c1, c2, d1, d2 = qmodel.conv1, qmodel.conv2, qmodel.dense1, qmodel.dense2

    def param_record(kind, layer, dims):
        return Record(kind, layer.name, dims, layer.weight_dec, layer.bias_dec,
                      layer.output_dec, layer.output_right_shift,
                      layer.bias_left_shift, layer.weights.reshape(-1),
                      layer.bias.reshape(-1))

    def plain(kind, name, dims, dec):
        return Record(kind, name, dims, output_dec=dec)

    return [
        Record(KIND_INPUT, "input", (28, 28, 1), output_dec=qmodel.input_dec),
        param_record(KIND_CONV2D, c1, (3, 3, 1, 32)),
        plain(KIND_RELU, "conv1_relu", (28, 28, 32), c1.output_dec),
        plain(KIND_MAXPOOL, "pool1", (14, 14, 32), c1.output_dec),
        param_record(KIND_CONV2D, c2, (3, 3, 32, 48)),
        plain(KIND_RELU, "conv2_relu", (14, 14, 48), c2.output_dec),
        plain(KIND_MAXPOOL, "pool2", (7, 7, 48), c2.output_dec),
        plain(KIND_FLATTEN, "flatten", (7 * 7 * 48,), c2.output_dec),
        param_record(KIND_DENSE, d1, (2352, 24)),
        plain(KIND_RELU, "dense1_relu", (24,), d1.output_dec),
        param_record(KIND_DENSE, d2, (24, 10)),
        plain(KIND_SOFTMAX, "softmax", (10,), d2.output_dec),
    ]


def write_model(qmodel, path) -> bytes:
    return write_container(model_records(qmodel), path)


def trace_records(traces) -> list:
    """Trace records: name "<image_index>/<layer>"; the input record carries
    the quantized image and a one-byte label."""
    records = []
    for tr in traces:
        records.append(Record(
            KIND_TRACE, f"{tr['index']}/input", (28, 28, 1),
            output_dec=tr["input_dec"], weights=tr["input"].reshape(-1),
            bias=np.array([tr.get("label", -1)], np.int8)))
        for name, values, dec in tr["layers"]:
            records.append(Record(KIND_TRACE, f"{tr['index']}/{name}",
                                  tuple(values.shape), output_dec=dec,
                                  weights=values.reshape(-1)))
    return records


def write_traces(traces, path) -> bytes:
    return write_container(trace_records(traces), path)
