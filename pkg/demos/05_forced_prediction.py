"""Forced predictions via bias corruption, and the bounds countermeasure.

Writing a large value (say, an address) into a dense-layer bias register
saturates that neuron for every input, which drags most predictions toward
one label. The guard checks each loaded bias against a bound and restores
the stored original when it is exceeded.
"""

import numpy as np

from nnfi import (CountermeasureConfig, Dataset, SweepSpec, majority_label,
                  random_fashion_cnn, run_sweep)

rng = np.random.default_rng(2)
model = random_fashion_cnn(seed=2)
dataset = Dataset(rng.integers(0, 256, (50, 28, 28)).astype(np.uint8),
                  rng.integers(0, 10, 50).astype(np.uint8))

corrupt = 0x2000_0000  # a plausible SRAM base address

print("--- unguarded bias corruption, dense1 neurons 0..3 ---")
sweep = SweepSpec(fault_family="bias_corrupt", layer="dense1",
                  index_range=(0, 1, 2, 3), corrupt_value=corrupt, seed=5)
report = run_sweep(model, dataset, sweep)
print(f"baseline accuracy: {report.baseline_accuracy:.3f}")
for row in report.rows:
    label, count = majority_label(row.label_histogram)
    print(f"neuron {row.index}: accuracy={row.accuracy:.3f} "
          f"majority label {label} ({count}/{len(dataset)})")

print("\n--- same faults with the restore guard (|bias| <= 2048) ---")
guard = CountermeasureConfig(bias_guard="restore", bound=2048)
sweep = SweepSpec(fault_family="bias_corrupt", layer="dense1",
                  index_range=(0, 1, 2, 3), corrupt_value=corrupt, seed=5,
                  countermeasures=guard)
report = run_sweep(model, dataset, sweep)
for row in report.rows:
    print(f"neuron {row.index}: accuracy={row.accuracy:.3f} "
          f"(baseline {report.baseline_accuracy:.3f}) "
          f"recovered={row.accuracy == report.baseline_accuracy}")
