import numpy as np
import pytest

from nnfi_trainer.nnfi_format import (KIND_CONV2D, KIND_INPUT, KIND_TRACE,
                                      MAGIC, Record, read_container,
                                      trace_records, write_container)


def test_header_layout(tmp_path):
    path = tmp_path / "empty.nnfi"
    data = write_container([], path)
    assert data == MAGIC + b"\x01\x00\x00\x00"
    assert read_container(path) == []


def test_record_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    records = [
        Record(KIND_INPUT, "input", (28, 28, 1), output_dec=-2),
        Record(KIND_CONV2D, "conv1", (3, 3, 1, 4), weight_dec=-1, bias_dec=2,
               output_dec=3, output_right_shift=9, bias_left_shift=4,
               weights=rng.integers(-128, 128, 36).astype(np.int8),
               bias=rng.integers(-128, 128, 4).astype(np.int8)),
    ]
    path = tmp_path / "m.nnfi"
    write_container(records, path)
    got = read_container(path)
    assert len(got) == 2
    assert got[0].kind == KIND_INPUT and got[0].dims == (28, 28, 1)
    assert got[0].output_dec == -2
    assert got[1].name == "conv1"
    assert got[1].weight_dec == -1 and got[1].bias_left_shift == 4
    assert np.array_equal(got[1].weights, records[1].weights)
    assert np.array_equal(got[1].bias, records[1].bias)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.nnfi"
    path.write_bytes(b"XXXX\x01\x00\x00\x00")
    with pytest.raises(ValueError, match="magic"):
        read_container(path)


def test_trailing_bytes(tmp_path):
    path = tmp_path / "bad.nnfi"
    path.write_bytes(MAGIC + b"\x01\x00\x00\x00" + b"junk")
    with pytest.raises(ValueError, match="trailing"):
        read_container(path)


def test_trace_records_shape():
    tr = {"index": 3, "input": np.zeros((28, 28, 1), np.int8), "input_dec": 0,
          "label": 5, "layers": [("conv1", np.ones((2, 2, 1), np.int8), 1)]}
    records = trace_records([tr])
    assert [r.name for r in records] == ["3/input", "3/conv1"]
    assert all(r.kind == KIND_TRACE for r in records)
    assert records[0].bias.tolist() == [5]
    assert records[1].dims == (2, 2, 1)
