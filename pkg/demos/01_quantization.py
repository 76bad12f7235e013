"""Walk through the powers-of-two quantization arithmetic.

Every tensor stores int8 codes and one scale exponent `dec`:
real = code * 2**(dec - 7). That turns all layer math into integer MACs
plus bit shifts, which is exactly what the MCU kernels do.
"""

import numpy as np

from nnfi import (Accumulator, AccumMode, QuantTensor, compute_dec,
                  dequantize, quantize, requantize)

# dec comes from the largest magnitude in the tensor
for max_abs in (1.0, 6.0, 0.5, 0.0):
    print(f"compute_dec({max_abs}) = {compute_dec(max_abs)}")

# quantize / dequantize round trip: error is at most half a step
print()
for x in (0.5, -0.25, 0.3, 0.99):
    dec = compute_dec(abs(x))
    code = quantize(x, dec)
    back = dequantize(code, dec)
    print(f"x={x:+.4f} dec={dec:+d} code={code:+4d} back={back:+.6f} "
          f"err={abs(back - x):.6f} (half step = {2.0 ** (dec - 8):.6f})")

# a whole tensor at once
weights = np.array([[0.31, -0.52], [0.08, 0.44]])
t = QuantTensor.from_real(weights)
print(f"\nweights dec={t.dec}")
print("codes:\n", t.reshaped())
print("dequantized:\n", t.dequantized())

# accumulators narrow back to int8 after a rounding right shift
print()
for value, shift in ((300, 2), (256, 1), (300, 0), (-10000, 4)):
    sat = requantize(Accumulator(value, AccumMode.SATURATE), shift)
    wrap = requantize(Accumulator(value, AccumMode.WRAP), shift)
    print(f"requantize({value:+6d} >> {shift}): saturate={sat:+4d} wrap={wrap:+4d}")

# wrap mode is what an unchecked 8-bit store does: the low byte, signed.
# It reproduces the integer-overflow artifacts some deployment stacks show.
