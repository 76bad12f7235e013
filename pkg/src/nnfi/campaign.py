"""Fault sweep orchestration and metrics.

A sweep runs one fault family over a list of loop/neuron indices, executes
the whole test set per index, and records accuracy, the per-label
prediction histogram and the memory-effect count (inferences whose logits
are bit-identical to the immediately previous inference). Every inference
gets a fresh single-shot plan; whether the shot lands is a seeded Bernoulli
draw with ``injection_success_prob`` (1.0 reproduces the deterministic
simulation curves).

All randomness derives from the one recorded seed, and report writing is
deterministic, so identical (model, dataset, sweep, seed) produce
byte-identical report files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import BufferArena, ModelGraph, infer, validate_fault
from .errors import StructuralError
from .faults import (DEFAULT_CORRUPT_VALUE, BiasCorrupt, ConvEarlyExit,
                     ConvSkipKernel, CountermeasureConfig, FaultPlan, NoFault,
                     ReluForceReset, ReluSkipReset)
from .model_io import Dataset, quantize_input, save_model_bytes
from .qtensor import AccumMode

FAULT_FAMILIES = ("conv_early_exit", "conv_skip_kernel", "bias_corrupt",
                  "relu_skip", "relu_force")


@dataclass(frozen=True)
class SweepSpec:
    """One fault family swept over ``index_range`` on a named layer."""

    fault_family: str
    layer: str
    index_range: tuple
    corrupt_value: int = DEFAULT_CORRUPT_VALUE
    countermeasures: CountermeasureConfig = field(default_factory=CountermeasureConfig)
    injection_success_prob: float = 1.0
    seed: int = 0
    backend: str = "naive"
    accum_mode: AccumMode = AccumMode.SATURATE

    def __post_init__(self):
        object.__setattr__(self, "index_range",
                           tuple(int(i) for i in self.index_range))
        if self.fault_family not in FAULT_FAMILIES:
            raise StructuralError(f"unknown fault family {self.fault_family!r}")
        if not self.index_range:
            raise StructuralError("index_range must be nonempty")
        if not 0.0 < self.injection_success_prob <= 1.0:
            raise StructuralError(
                f"injection_success_prob {self.injection_success_prob} outside (0, 1]")

    def fault_for_index(self, index: int):
        if self.fault_family == "conv_early_exit":
            return ConvEarlyExit(self.layer, index)
        if self.fault_family == "conv_skip_kernel":
            return ConvSkipKernel(self.layer, index)
        if self.fault_family == "bias_corrupt":
            return BiasCorrupt(self.layer, index, self.corrupt_value)
        if self.fault_family == "relu_skip":
            return ReluSkipReset(self.layer, index)
        return ReluForceReset(self.layer, index)

    def to_json_dict(self) -> dict:
        return {
            "fault_family": self.fault_family,
            "layer": self.layer,
            "index_range": list(self.index_range),
            "corrupt_value": self.corrupt_value,
            "injection_success_prob": self.injection_success_prob,
            "seed": self.seed,
            "backend": self.backend,
            "accum_mode": self.accum_mode.value,
            "countermeasures": {
                "ram_reset": self.countermeasures.ram_reset,
                "bias_guard": self.countermeasures.bias_guard,
                "bound": self.countermeasures.bound,
                "clamp_on": self.countermeasures.clamp_on,
            },
        }


@dataclass
class BaselineResult:
    accuracy: float
    predictions: list

    @property
    def label_histogram(self) -> list:
        hist = [0] * 10
        for p in self.predictions:
            hist[p] += 1
        return hist


@dataclass
class IndexResult:
    index: int
    accuracy: float
    label_histogram: list
    memory_effect_count: int


@dataclass
class SweepReport:
    sweep: SweepSpec
    baseline_accuracy: float
    baseline_histogram: list
    n_images: int
    num_classes: int
    model_sha256: str
    rows: list

    def memory_effect_rate(self, row: IndexResult) -> float:
        if self.n_images < 2:
            return 0.0
        return row.memory_effect_count / (self.n_images - 1)

    def to_json_dict(self) -> dict:
        return {
            "metadata": {
                "model_sha256": self.model_sha256,
                "seed": self.sweep.seed,
                "n_images": self.n_images,
                "num_classes": self.num_classes,
                "sweep": self.sweep.to_json_dict(),
            },
            "baseline": {
                "accuracy": self.baseline_accuracy,
                "label_histogram": list(self.baseline_histogram),
            },
            "rows": [
                {
                    "index": r.index,
                    "accuracy": r.accuracy,
                    "memory_effect_count": r.memory_effect_count,
                    "memory_effect_rate": self.memory_effect_rate(r),
                    "label_histogram": list(r.label_histogram),
                }
                for r in self.rows
            ],
        }


def model_digest(model: ModelGraph) -> str:
    return hashlib.sha256(save_model_bytes(model)).hexdigest()


def run_baseline(model: ModelGraph, dataset: Dataset, backend: str = "naive",
                 accum_mode: AccumMode = AccumMode.SATURATE) -> BaselineResult:
    """Fault-free accuracy with the arena reset between images."""
    if len(dataset) == 0:
        raise StructuralError("dataset must be nonempty")
    arena = BufferArena(model, reset_between_inferences=True)
    predictions = []
    correct = 0
    for img, label in zip(dataset.images, dataset.labels):
        pred = infer(model, quantize_input(img), arena, backend=backend,
                     accum_mode=accum_mode)
        predictions.append(pred.label)
        correct += int(pred.label == int(label))
    return BaselineResult(correct / len(dataset), predictions)


def _run_index(model: ModelGraph, dataset: Dataset, sweep: SweepSpec,
               index: int, seed_seq) -> IndexResult:
    rng = np.random.default_rng(seed_seq)
    ram_reset = sweep.countermeasures.ram_reset
    arena = BufferArena(model, reset_between_inferences=ram_reset)
    spec = sweep.fault_for_index(index)
    hist = [0] * model.num_classes
    correct = 0
    mem_count = 0
    prev_logits = None
    for img, label in zip(dataset.images, dataset.labels):
        fire = bool(rng.random() < sweep.injection_success_prob)
        plan = FaultPlan(spec if fire else NoFault())
        pred = infer(model, quantize_input(img), arena, plan,
                     guard=sweep.countermeasures, backend=sweep.backend,
                     accum_mode=sweep.accum_mode)
        hist[pred.label] += 1
        correct += int(pred.label == int(label))
        # A reset inference starts from zeroed buffers, so logits equality
        # with the previous inference cannot be a memory effect; the count
        # tracks state carryover only.
        if (not ram_reset and prev_logits is not None
                and np.array_equal(pred.logits, prev_logits)):
            mem_count += 1
        prev_logits = pred.logits
    return IndexResult(index, correct / len(dataset), hist, mem_count)


def _run_index_star(args) -> IndexResult:
    return _run_index(*args)


def run_sweep(model: ModelGraph, dataset: Dataset, sweep: SweepSpec,
              workers: int = 1) -> SweepReport:
    """Execute a sweep; indices may run in parallel, images never do.

    Images run in dataset order inside each index (each index owns a private
    arena), which is what makes memory-effect counting meaningful. When
    ram_reset is off the sweep is forced to a single worker.
    """
    if len(dataset) == 0:
        raise StructuralError("dataset must be nonempty")
    for index in sweep.index_range:
        validate_fault(model, sweep.fault_for_index(index))
    if workers > 1 and not sweep.countermeasures.ram_reset:
        warnings.warn("memory-effect sweep (ram_reset off): forcing workers=1")
        workers = 1

    baseline = run_baseline(model, dataset, sweep.backend, sweep.accum_mode)
    children = np.random.SeedSequence(sweep.seed).spawn(len(sweep.index_range))
    tasks = [(model, dataset, sweep, index, child)
             for index, child in zip(sweep.index_range, children)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_index_star, tasks))
    else:
        rows = [_run_index_star(t) for t in tasks]
    return SweepReport(sweep, baseline.accuracy, baseline.label_histogram,
                       len(dataset), model.num_classes, model_digest(model), rows)


def majority_label(histogram) -> tuple:
    """(label, count) with the highest count, ties to the lowest label."""
    hist = list(histogram)
    if not hist:
        raise StructuralError("histogram must be nonempty")
    label = int(np.argmax(hist))
    return label, hist[label]


def _fmt(x: float) -> str:
    return format(x, ".10g")


def write_report(report: SweepReport, path, fmt: str = "csv"):
    """Write a report; a baseline row with index -1 precedes sweep rows in CSV."""
    if fmt == "csv":
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                n = report.num_classes
                writer.writerow(["index", "accuracy", "memory_effect_rate"]
                                + [f"hist_{i}" for i in range(n)])
                writer.writerow([-1, _fmt(report.baseline_accuracy), _fmt(0.0)]
                                + list(report.baseline_histogram))
                for row in report.rows:
                    writer.writerow([row.index, _fmt(row.accuracy),
                                     _fmt(report.memory_effect_rate(row))]
                                    + list(row.label_histogram))
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    elif fmt == "json":
        try:
            with open(path, "w") as fh:
                json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    else:
        raise StructuralError(f"unknown report format {fmt!r}")


def read_report_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
