"""One inference under each instruction-skip fault family.

Uses a randomly initialized copy of the standard Fashion-MNIST CNN (two
conv layers, two dense layers, 70,914 parameters) so it runs without any
trained weights or dataset.
"""

import numpy as np

from nnfi import (BiasCorrupt, BufferArena, ConvEarlyExit, ConvSkipKernel,
                  CountermeasureConfig, FaultPlan, ReluForceReset,
                  ReluSkipReset, fault_to_json, infer, quantize_input,
                  random_fashion_cnn)

rng = np.random.default_rng(0)
model = random_fashion_cnn(seed=0)
print(f"model: {model.parameter_count} parameters, "
      f"layers: {', '.join(model.layer_names)}")

image = quantize_input(rng.integers(0, 256, (28, 28)).astype(np.uint8))

baseline = infer(model, image, BufferArena(model, reset_between_inferences=True))
print(f"\nfault-free: label={baseline.label} logits={baseline.logits.tolist()}")

faults = [
    ConvEarlyExit("conv1", 0),      # no kernel of conv1 executes
    ConvEarlyExit("conv1", 17),     # kernels 17..31 skipped
    ConvEarlyExit("conv1", 32),     # exit after the loop: no-op
    ConvSkipKernel("conv1", 5),     # exactly kernel 5 skipped
    BiasCorrupt("dense1", 0),       # an address value lands in the bias register
    ReluSkipReset("dense1_relu", 3),   # element 3 keeps its negative value
    ReluForceReset("dense1_relu", 0),  # element 0 zeroed even if positive
]

for spec in faults:
    arena = BufferArena(model, reset_between_inferences=True)
    pred = infer(model, image, arena, FaultPlan(spec))
    changed = "unchanged" if pred.label == baseline.label else f"label -> {pred.label}"
    same = np.array_equal(pred.logits, baseline.logits)
    print(f"{fault_to_json(spec)}\n    logits {'identical' if same else 'differ'}, "
          f"{changed}")

# the bias guard restores the stored value when the loaded one is out of bounds
guard = CountermeasureConfig(bias_guard="restore", bound=2048)
pred = infer(model, image, BufferArena(model, True),
             FaultPlan(BiasCorrupt("dense1", 0)), guard=guard)
print(f"\nbias corrupt + restore guard: logits identical = "
      f"{np.array_equal(pred.logits, baseline.logits)}")
