"""Fixed-point tensors and powers-of-two quantization arithmetic.

Every tensor carries int8 codes plus one signed scale exponent ``dec``:

    value_real = value_int * 2**(dec - 7)

so ``2**(7 - dec)`` is the quantization scale and all layer arithmetic
reduces to integer multiply-accumulate plus bit shifts, exactly like the
int8 kernels shipped on Cortex-M class targets.

MAC results live in a wide accumulator and are narrowed back to int8 by
:func:`requantize`. Narrowing is either saturating (the well-behaved
default) or wrapping, i.e. keeping the low 8 bits like an unchecked
byte store; the wrap mode reproduces the overflow artifacts some MCU
deployment libraries exhibit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import StructuralError

INT8_MIN = -128
INT8_MAX = 127

# Requantization rounding is a constant +2**(shift-1) offset followed by an
# arithmetic right shift. The constant offset is translation invariant, which
# keeps wrap-mode narrowing exactly periodic with period 256 * 2**shift.


class AccumMode(Enum):
    """How a wide accumulator narrows back to int8."""

    SATURATE = "saturate"
    WRAP = "wrap"

    @classmethod
    def from_name(cls, name: str) -> "AccumMode":
        try:
            return cls(name)
        except ValueError:
            raise StructuralError(f"unknown accumulator mode {name!r}") from None


@dataclass
class Accumulator:
    """Transient wide MAC register with a narrowing policy."""

    value: int
    mode: AccumMode = AccumMode.SATURATE


@dataclass(frozen=True)
class QuantTensor:
    """Int8 tensor with a per-tensor powers-of-two scale exponent.

    Activations are laid out (H, W, C), conv kernels (Z, Z, C, K) and
    dense weights (in, out), all row-major.
    """

    shape: tuple
    values: np.ndarray
    dec: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if self.values.dtype != np.int8:
            raise StructuralError(
                f"QuantTensor values must be int8, got {self.values.dtype}"
            )
        n = 1
        for d in self.shape:
            n *= d
        if self.values.size != n:
            raise StructuralError(
                f"QuantTensor shape {self.shape} expects {n} values, "
                f"got {self.values.size}"
            )

    @property
    def size(self) -> int:
        return self.values.size

    def reshaped(self) -> np.ndarray:
        """The values as an ndarray of ``self.shape`` (a view when possible)."""
        return self.values.reshape(self.shape)

    def dequantized(self) -> np.ndarray:
        """Float view of the tensor, values * 2**(dec - 7)."""
        return self.values.astype(np.float64) * 2.0 ** (self.dec - 7)

    @classmethod
    def from_real(cls, array, dec: int | None = None) -> "QuantTensor":
        """Quantize a float array, deriving ``dec`` from its max magnitude."""
        arr = np.asarray(array, dtype=np.float64)
        if dec is None:
            dec = compute_dec(float(np.max(np.abs(arr))) if arr.size else 0.0)
        return cls(arr.shape, quantize_array(arr, dec), dec)


def compute_dec(max_abs: float) -> int:
    """Scale exponent for a tensor whose largest magnitude is ``max_abs``.

    Returns ceil(log2(max_abs)), i.e. the smallest d with 2**d >= max_abs.
    An all-zero tensor has no meaningful scale; 0 is returned so that
    downstream shift computations stay well defined.
    """
    if max_abs < 0:
        raise StructuralError("max_abs must be nonnegative")
    if max_abs == 0:
        return 0
    d = math.ceil(math.log2(max_abs))
    # guard against float log imprecision near exact powers of two
    while math.ldexp(1.0, d) < max_abs:
        d += 1
    while math.ldexp(1.0, d - 1) >= max_abs:
        d -= 1
    return d


def quantize(x_f: float, dec: int) -> int:
    """Real value -> int8 code: round-half-away-from-zero of x_f * 2**(7-dec)."""
    if not -32 <= dec <= 32:
        raise StructuralError(f"dec {dec} outside sane range [-32, 32]")
    scaled = math.ldexp(x_f, 7 - dec)
    q = int(math.floor(abs(scaled) + 0.5))
    if scaled < 0:
        q = -q
    return max(INT8_MIN, min(INT8_MAX, q))


def quantize_array(values, dec: int) -> np.ndarray:
    """Vectorized :func:`quantize` returning an int8 ndarray."""
    if not -32 <= dec <= 32:
        raise StructuralError(f"dec {dec} outside sane range [-32, 32]")
    scaled = np.asarray(values, dtype=np.float64) * 2.0 ** (7 - dec)
    q = np.floor(np.abs(scaled) + 0.5) * np.sign(scaled)
    return np.clip(q, INT8_MIN, INT8_MAX).astype(np.int8)


def dequantize(x_i: int, dec: int) -> float:
    """Int8 code -> real value: x_i * 2**(dec - 7)."""
    return math.ldexp(x_i, dec - 7)


def saturate_to_int8(value: int) -> int:
    return max(INT8_MIN, min(INT8_MAX, value))


def wrap_to_int8(value: int) -> int:
    """Low 8 bits reinterpreted as signed two's complement."""
    return ((int(value) & 0xFF) ^ 0x80) - 0x80


def requantize_value(value: int, right_shift: int, mode: AccumMode) -> int:
    """Scalar core of :func:`requantize`; also accepts arbitrary-width ints."""
    if not 0 <= right_shift <= 31:
        raise StructuralError(f"right_shift {right_shift} outside [0, 31]")
    v = int(value)
    if right_shift > 0:
        v = (v + (1 << (right_shift - 1))) >> right_shift
    if mode is AccumMode.SATURATE:
        return saturate_to_int8(v)
    return wrap_to_int8(v)


def requantize(acc: Accumulator, right_shift: int) -> int:
    """Narrow an accumulator to int8 after a rounding right shift.

    The rounding adds 2**(right_shift-1) before the arithmetic shift
    (no rounding bias when right_shift is 0), then narrows per the
    accumulator's mode.
    """
    return requantize_value(acc.value, right_shift, acc.mode)


def requantize_array(acc: np.ndarray, right_shift: int, mode: AccumMode) -> np.ndarray:
    """Vectorized :func:`requantize` over an int64 accumulator array."""
    if not 0 <= right_shift <= 31:
        raise StructuralError(f"right_shift {right_shift} outside [0, 31]")
    v = np.asarray(acc, dtype=np.int64)
    if right_shift > 0:
        v = (v + (1 << (right_shift - 1))) >> right_shift
    if mode is AccumMode.SATURATE:
        return np.clip(v, INT8_MIN, INT8_MAX).astype(np.int8)
    return (((v & 0xFF) ^ 0x80) - 0x80).astype(np.int8)
