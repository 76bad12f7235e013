"""Sweep the conv1 early-exit index and watch accuracy degrade.

Writes a CSV report (index -1 is the fault-free baseline row). With a
trained model and the real test set the curve drops to chance at index 0
and recovers toward the baseline once most kernels execute; here random
weights and random images only demonstrate the mechanics and the report
plumbing.
"""

import numpy as np

from nnfi import (Dataset, SweepSpec, majority_label, random_fashion_cnn,
                  run_sweep, write_report)

rng = np.random.default_rng(7)
model = random_fashion_cnn(seed=3)
dataset = Dataset(rng.integers(0, 256, (40, 28, 28)).astype(np.uint8),
                  rng.integers(0, 10, 40).astype(np.uint8))

sweep = SweepSpec(fault_family="conv_early_exit", layer="conv1",
                  index_range=tuple(range(0, 33)), seed=11)
report = run_sweep(model, dataset, sweep)

print(f"baseline accuracy: {report.baseline_accuracy:.3f}")
print("idx  accuracy  majority  mem")
for row in report.rows:
    label, count = majority_label(row.label_histogram)
    bar = "#" * round(row.accuracy * 40)
    print(f"{row.index:3d}  {row.accuracy:8.3f}  {label} x{count:<4d} "
          f"{row.memory_effect_count:3d}  {bar}")

write_report(report, "early_exit_sweep.csv", "csv")
print("\nwrote early_exit_sweep.csv")
print("identity check: accuracy at index 32 == baseline:",
      report.rows[32].accuracy == report.baseline_accuracy)
