"""Fashion-MNIST IDX loading and the int8 input mapping.

The input quantization must match the simulator's contract exactly:
pixel p in [0, 255] maps to round(p / 255 * 127), stored int8 with a zero
scale exponent, i.e. real value = code / 128.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")

_DATA_DIR_CANDIDATES = ("data/fashion", "/root/data/fashion")


def find_data_dir(explicit=None) -> Path | None:
    """Locate the Fashion-MNIST IDX files (env NNFI_DATA_DIR, then defaults)."""
    candidates = []
    if explicit:
        candidates.append(explicit)
    if os.environ.get("NNFI_DATA_DIR"):
        candidates.append(os.environ["NNFI_DATA_DIR"])
    candidates.extend(_DATA_DIR_CANDIDATES)
    for cand in candidates:
        root = Path(cand)
        if any((root / (TEST_FILES[0] + suffix)).is_file()
               for suffix in ("", ".gz")):
            return root
    return None


def _read(path: Path) -> bytes:
    for suffix in ("", ".gz"):
        p = Path(str(path) + suffix)
        if p.is_file():
            data = p.read_bytes()
            return gzip.decompress(data) if data[:2] == b"\x1f\x8b" else data
    raise FileNotFoundError(f"{path}[.gz] not found")


def load_pair(data_dir, images_name: str, labels_name: str):
    img = _read(Path(data_dir) / images_name)
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != 0x803:
        raise ValueError(f"{images_name}: bad IDX magic 0x{magic:08x}")
    images = np.frombuffer(img, np.uint8, offset=16).reshape(count, rows, cols)
    lab = _read(Path(data_dir) / labels_name)
    magic, lcount = struct.unpack(">II", lab[:8])
    if magic != 0x801 or lcount != count:
        raise ValueError(f"{labels_name}: bad magic or count mismatch")
    labels = np.frombuffer(lab, np.uint8, offset=8)
    return images.copy(), labels.copy()


def load_train(data_dir):
    return load_pair(data_dir, *TRAIN_FILES)


def load_test(data_dir):
    return load_pair(data_dir, *TEST_FILES)


def quantize_images(images: np.ndarray) -> np.ndarray:
    """uint8 pixels -> int8 codes, round(p/255*127) by exact integer math."""
    return ((images.astype(np.int32) * 254 + 255) // 510).astype(np.int8)


def model_inputs(images: np.ndarray) -> np.ndarray:
    """Float inputs the network trains and calibrates on: the dequantized
    int8 codes (code / 128), so float and integer pipelines see the same
    values."""
    return quantize_images(images).astype(np.float32) / 128.0
