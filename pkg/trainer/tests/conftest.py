import shutil
import struct
from pathlib import Path

import numpy as np
import pytest

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts"


def write_idx_pair(root: Path, prefix: str, images, labels):
    images = np.asarray(images, np.uint8)
    labels = np.asarray(labels, np.uint8)
    n, r, c = images.shape
    (root / f"{prefix}-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x803, n, r, c) + images.tobytes())
    (root / f"{prefix}-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 0x801, n) + labels.tobytes())


@pytest.fixture(scope="session")
def synthetic_data_dir(tmp_path_factory):
    """A tiny fake Fashion-MNIST directory for mechanical pipeline tests."""
    root = tmp_path_factory.mktemp("synth")
    rng = np.random.default_rng(0)
    write_idx_pair(root, "train", rng.integers(0, 256, (256, 28, 28)),
                   rng.integers(0, 10, 256))
    write_idx_pair(root, "t10k", rng.integers(0, 256, (64, 28, 28)),
                   rng.integers(0, 10, 64))
    return root


@pytest.fixture(scope="session")
def simulator_cli():
    path = shutil.which("nnfi")
    if path is None:
        pytest.skip("simulator CLI (nnfi) not on PATH")
    return path


@pytest.fixture(scope="session")
def real_data_dir():
    from nnfi_trainer.data import find_data_dir
    root = find_data_dir()
    if root is None:
        pytest.skip("Fashion-MNIST IDX files not found "
                    "(set NNFI_DATA_DIR or place them in data/fashion)")
    return root


@pytest.fixture(scope="session")
def artifacts_dir():
    """Trained artifacts (model, traces, metrics) from the pipeline command."""
    needed = ["fashion_cnn.nnfi", "golden_traces.nnfi", "metrics.json",
              "fashion_cnn.pt"]
    if not all((ARTIFACTS / name).is_file() for name in needed):
        pytest.skip("trained artifacts missing; run "
                    "`nnfi-trainer pipeline --out-dir trainer/artifacts` first")
    return ARTIFACTS
