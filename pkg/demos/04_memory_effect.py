"""The memory effect: a fully skipped first conv layer replays the
previous prediction.

Conv outputs live in RAM buffers that persist between inferences. When an
early exit at kernel 0 skips the whole conv1 loop, the features of the
previous image are still sitting in the buffer, every downstream layer
recomputes from them, and the logits come out bit-identical to the
previous inference. A RAM reset between inferences is the countermeasure.
"""

import numpy as np

from nnfi import (BufferArena, ConvEarlyExit, FaultPlan, infer,
                  quantize_input, random_fashion_cnn)

rng = np.random.default_rng(1)
model = random_fashion_cnn(seed=1)
images = [quantize_input(rng.integers(0, 256, (28, 28)).astype(np.uint8))
          for _ in range(4)]

print("--- persistent buffers (no reset) ---")
arena = BufferArena(model, reset_between_inferences=False)
prev = infer(model, images[0], arena)        # clean inference on image 0
print(f"image 0 (clean):   label={prev.label}")
for i, img in enumerate(images[1:], start=1):
    pred = infer(model, img, arena, FaultPlan(ConvEarlyExit("conv1", 0)))
    replay = np.array_equal(pred.logits, prev.logits)
    print(f"image {i} (faulted): label={pred.label}  replays previous: {replay}")
    prev = pred

print("\n--- with RAM reset between inferences ---")
arena = BufferArena(model, reset_between_inferences=True)
clean = infer(model, images[0], arena)
print(f"image 0 (clean):   label={clean.label}")
for i, img in enumerate(images[1:], start=1):
    pred = infer(model, img, arena, FaultPlan(ConvEarlyExit("conv1", 0)))
    replay = np.array_equal(pred.logits, clean.logits)
    print(f"image {i} (faulted): label={pred.label}  replays clean run: {replay} "
          f"(zero-feature prediction instead)")
