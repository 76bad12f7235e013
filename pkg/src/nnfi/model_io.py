"""NNFI weight/trace container, IDX dataset loading, input quantization.

The NNFI container is a minimal little-endian binary format that keeps the
quantization metadata (per-tensor ``dec`` exponents and the two shift
amounts) explicit and testable:

    header:  magic "NNFI" | u16 version (=1) | u16 record_count
    record:  u8 kind
             u16 name_len | name (UTF-8)
             u32 ndim | u32 * ndim dims
             i8 weight_dec | i8 bias_dec | i8 output_dec
             u8 output_right_shift | u8 bias_left_shift
             u32 weight_len | weight bytes (int8, row-major)
             u32 bias_len | bias bytes (int8)

    kinds:   0 input (dims = model input shape, output_dec = input dec)
             1 conv2d (dims = weight shape [Z, Z, C, K])
             2 maxpool2x2 / 3 relu / 5 flatten / 6 softmax (dims = output shape)
             4 dense (dims = [in, out])
             7 trace (dims = buffer shape, weight bytes = buffer snapshot)

A model file is an input record followed by one record per layer. Golden
trace files reuse the same parser: every record has kind 7 and is named
``<image_index>/<layer_name>``; the ``<i>/input`` record carries the
quantized input image and a one-byte label payload.

Payload lengths must match the declared dims exactly and trailing bytes
after the last record are an error.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .engine import (KIND_CONV2D, KIND_DENSE, KIND_FLATTEN, KIND_MAXPOOL,
                     KIND_RELU, KIND_SOFTMAX, LayerSpec, ModelGraph, _prod)
from .errors import (BadMagicError, DatasetError, PayloadMismatchError,
                     StructuralError, TruncatedFileError,
                     UnsupportedVersionError)
from .qtensor import QuantTensor

MAGIC = b"NNFI"
VERSION = 1

_KIND_TAGS = {
    "input": 0,
    KIND_CONV2D: 1,
    KIND_MAXPOOL: 2,
    KIND_RELU: 3,
    KIND_DENSE: 4,
    KIND_FLATTEN: 5,
    KIND_SOFTMAX: 6,
    "trace": 7,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


@dataclass
class _RawRecord:
    kind: str
    name: str
    dims: tuple
    weight_dec: int
    bias_dec: int
    output_dec: int
    output_right_shift: int
    bias_left_shift: int
    weights: np.ndarray
    bias: np.ndarray


class _Reader:
    def __init__(self, data: bytes, context: str = "header"):
        self.data = data
        self.pos = 0
        self.context = context

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"file truncated inside {self.context} "
                f"(needed {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def _write_record(out: bytearray, rec: _RawRecord):
    name_bytes = rec.name.encode("utf-8")
    out += struct.pack("<BH", _KIND_TAGS[rec.kind], len(name_bytes))
    out += name_bytes
    out += struct.pack("<I", len(rec.dims))
    out += struct.pack(f"<{len(rec.dims)}I", *rec.dims)
    out += struct.pack("<bbbBB", rec.weight_dec, rec.bias_dec, rec.output_dec,
                       rec.output_right_shift, rec.bias_left_shift)
    wbytes = rec.weights.astype(np.int8, copy=False).tobytes()
    bbytes = rec.bias.astype(np.int8, copy=False).tobytes()
    out += struct.pack("<I", len(wbytes)) + wbytes
    out += struct.pack("<I", len(bbytes)) + bbytes


def _read_record(reader: _Reader) -> _RawRecord:
    (tag,) = reader.unpack("B")
    if tag not in _TAG_KINDS:
        raise PayloadMismatchError(f"unknown record kind tag {tag} in {reader.context}")
    (name_len,) = reader.unpack("H")
    name = reader.take(name_len).decode("utf-8")
    reader.context = f"record {name!r}"
    (ndim,) = reader.unpack("I")
    if ndim > 8:
        raise PayloadMismatchError(f"record {name!r}: implausible ndim {ndim}")
    dims = reader.unpack(f"{ndim}I") if ndim else ()
    weight_dec, bias_dec, output_dec, rs, ls = reader.unpack("bbbBB")
    (wlen,) = reader.unpack("I")
    weights = np.frombuffer(reader.take(wlen), dtype=np.int8)
    (blen,) = reader.unpack("I")
    bias = np.frombuffer(reader.take(blen), dtype=np.int8)
    return _RawRecord(_TAG_KINDS[tag], name, tuple(int(d) for d in dims),
                      weight_dec, bias_dec, output_dec, rs, ls, weights, bias)


def _read_container(data: bytes, context: str) -> list:
    reader = _Reader(data, context)
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = reader.unpack("HH")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}")
    records = []
    for _ in range(count):
        reader.context = f"record {len(records)} of {count}"
        records.append(_read_record(reader))
    if reader.pos != len(data):
        raise PayloadMismatchError(
            f"{len(data) - reader.pos} trailing bytes after record "
            f"{records[-1].name!r}" if records else "trailing bytes after header")
    return records


def save_model_bytes(model: ModelGraph) -> bytes:
    """Serialize a model to NNFI bytes (an empty model is just the header)."""
    records = []
    if model.layers:
        records.append(_RawRecord("input", "input", model.input_shape, 0, 0,
                                  model.input_dec, 0, 0,
                                  np.empty(0, np.int8), np.empty(0, np.int8)))
    for layer in model.layers:
        if layer.kind in (KIND_CONV2D, KIND_DENSE):
            dims = layer.weights.shape
            weights = layer.weights.values.reshape(-1)
            bias = layer.bias if layer.bias is not None else np.empty(0, np.int8)
            wdec = layer.weights.dec
        else:
            dims = layer.output_shape
            weights = np.empty(0, np.int8)
            bias = np.empty(0, np.int8)
            wdec = 0
        records.append(_RawRecord(layer.kind, layer.name, dims, wdec,
                                  layer.bias_dec, layer.output_dec,
                                  layer.output_right_shift, layer.bias_left_shift,
                                  weights, bias))
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", VERSION, len(records))
    for rec in records:
        _write_record(out, rec)
    return bytes(out)


def save_model(model: ModelGraph, path):
    data = save_model_bytes(model)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write model to {path}: {exc}") from exc


def load_model_bytes(data: bytes) -> ModelGraph:
    records = _read_container(data, "model header")
    if not records:
        return ModelGraph((), (), input_dec=0)
    first = records[0]
    if first.kind != "input":
        raise PayloadMismatchError(
            f"first record must be the input record, got {first.kind!r} "
            f"({first.name!r})")
    if first.weights.size or first.bias.size:
        raise PayloadMismatchError("input record must not carry payloads")
    input_shape = first.dims
    input_dec = first.output_dec
    layers = []
    cur = input_shape
    for rec in records[1:]:
        layers.append(_layer_from_record(rec, cur))
        cur = layers[-1].output_shape
    try:
        model = ModelGraph(tuple(layers), input_shape, input_dec=input_dec,
                           num_classes=_prod(cur) if layers else 10)
    except StructuralError as exc:
        raise PayloadMismatchError(str(exc)) from exc
    return model


def _layer_from_record(rec: _RawRecord, cur: tuple) -> LayerSpec:
    if rec.kind == "trace":
        raise PayloadMismatchError(
            f"record {rec.name!r}: trace records do not belong in a model file")
    if rec.kind == "input":
        raise PayloadMismatchError(f"record {rec.name!r}: duplicate input record")
    if rec.kind in (KIND_CONV2D, KIND_DENSE):
        expect = _prod(rec.dims)
        if rec.weights.size != expect:
            raise PayloadMismatchError(
                f"layer {rec.name!r}: weight payload {rec.weights.size} "
                f"does not match shape {rec.dims} ({expect})")
        n_out = rec.dims[-1]
        if rec.bias.size not in (0, n_out):
            raise PayloadMismatchError(
                f"layer {rec.name!r}: bias payload {rec.bias.size}, expected {n_out}")
        weights = QuantTensor(rec.dims, rec.weights.copy(), rec.weight_dec)
        bias = rec.bias.copy() if rec.bias.size else None
        try:
            if rec.kind == KIND_CONV2D:
                return LayerSpec(KIND_CONV2D, rec.name, cur,
                                 (cur[0], cur[1], rec.dims[3]), weights, bias,
                                 rec.bias_dec, rec.output_dec,
                                 rec.output_right_shift, rec.bias_left_shift)
            return LayerSpec(KIND_DENSE, rec.name, cur, (rec.dims[1],), weights,
                             bias, rec.bias_dec, rec.output_dec,
                             rec.output_right_shift, rec.bias_left_shift)
        except (StructuralError, IndexError) as exc:
            raise PayloadMismatchError(f"layer {rec.name!r}: {exc}") from exc
    if rec.weights.size or rec.bias.size:
        raise PayloadMismatchError(
            f"layer {rec.name!r}: kind {rec.kind!r} must not carry payloads")
    try:
        return LayerSpec(rec.kind, rec.name, cur, rec.dims,
                         output_dec=rec.output_dec)
    except StructuralError as exc:
        raise PayloadMismatchError(f"layer {rec.name!r}: {exc}") from exc


def load_model(path) -> ModelGraph:
    with open(path, "rb") as fh:
        return load_model_bytes(fh.read())


@dataclass
class GoldenTrace:
    """Per-image golden record: quantized input plus each layer's buffer."""

    image_index: int
    input_values: np.ndarray  # int8, model input shape
    input_dec: int
    label: int | None
    layers: list  # ordered (layer_name, int8 ndarray, dec)


def save_traces(traces, path):
    out = bytearray()
    out += MAGIC
    records = []
    for tr in traces:
        records.append(_RawRecord(
            "trace", f"{tr.image_index}/input", tuple(tr.input_values.shape),
            0, 0, tr.input_dec, 0, 0, tr.input_values.reshape(-1),
            np.array([tr.label if tr.label is not None else -1], dtype=np.int8)))
        for name, values, dec in tr.layers:
            records.append(_RawRecord(
                "trace", f"{tr.image_index}/{name}", tuple(values.shape),
                0, 0, dec, 0, 0, values.reshape(-1), np.empty(0, np.int8)))
    out += struct.pack("<HH", VERSION, len(records))
    for rec in records:
        _write_record(out, rec)
    with open(path, "wb") as fh:
        fh.write(out)


def load_traces(path) -> list:
    with open(path, "rb") as fh:
        records = _read_container(fh.read(), "trace header")
    traces = {}
    order = []
    for rec in records:
        if rec.kind != "trace":
            raise PayloadMismatchError(
                f"record {rec.name!r}: model records do not belong in a trace file")
        idx_str, _, layer_name = rec.name.partition("/")
        try:
            idx = int(idx_str)
        except ValueError:
            raise PayloadMismatchError(
                f"trace record {rec.name!r}: name must be 'index/layer'") from None
        if rec.weights.size != _prod(rec.dims):
            raise PayloadMismatchError(
                f"trace record {rec.name!r}: payload {rec.weights.size} does not "
                f"match shape {rec.dims}")
        values = rec.weights.reshape(rec.dims).copy()
        if layer_name == "input":
            label = int(rec.bias[0]) if rec.bias.size else -1
            traces[idx] = GoldenTrace(idx, values, rec.output_dec,
                                      None if label < 0 else label, [])
            order.append(idx)
        else:
            if idx not in traces:
                raise PayloadMismatchError(
                    f"trace record {rec.name!r} appears before its input record")
            traces[idx].layers.append((layer_name, values, rec.output_dec))
    return [traces[i] for i in order]


@dataclass
class Dataset:
    """Paired images (N, H, W) uint8 and labels (N,) in [0, 9]."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx])


def select_subset(dataset: Dataset, n: int, seed: int = 0) -> Dataset:
    """Seeded random subset without replacement, in drawn order."""
    if n > len(dataset):
        raise DatasetError(f"subset of {n} from a dataset of {len(dataset)}")
    rng = np.random.default_rng(seed)
    return dataset.subset(rng.choice(len(dataset), size=n, replace=False))


def _read_maybe_gzip(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair (plain or gzipped).

    IDX is big-endian: magic 0x00000803 for images (count, rows, cols then
    pixel bytes) and 0x00000801 for labels (count then label bytes).
    """
    img = _read_maybe_gzip(images_path)
    if len(img) < 16:
        raise DatasetError(f"{images_path}: too short for an IDX image file")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetError(
            f"{images_path}: bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    if len(img) - 16 != count * rows * cols:
        raise DatasetError(
            f"{images_path}: payload {len(img) - 16} bytes, "
            f"expected {count}x{rows}x{cols}")
    images = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(count, rows, cols)

    lab = _read_maybe_gzip(labels_path)
    if len(lab) < 8:
        raise DatasetError(f"{labels_path}: too short for an IDX label file")
    magic, lcount = struct.unpack(">II", lab[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetError(
            f"{labels_path}: bad IDX magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(lab) - 8 != lcount:
        raise DatasetError(f"{labels_path}: payload does not match count {lcount}")
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8)
    if count != lcount:
        raise DatasetError(
            f"image count {count} != label count {lcount} "
            f"({images_path} vs {labels_path})")
    return Dataset(images.copy(), labels.copy())


def quantize_input(image: np.ndarray) -> QuantTensor:
    """Quantize one uint8 image to int8 with dec = 0.

    Pixel p in [0, 255] maps to round(p / 255 * 127) in [0, 127]; the input
    is treated as covering the real range [0, 1). Integer arithmetic only
    (ties cannot occur for p in [0, 255]).
    """
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, np.newaxis]
    q = ((img.astype(np.int32) * 254 + 255) // 510).astype(np.int8)
    return QuantTensor(img.shape, q.reshape(-1), 0)
