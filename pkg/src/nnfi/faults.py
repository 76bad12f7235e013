"""Single instruction-skip fault models and the two software countermeasures.

A fault is a data description of exactly one skipped instruction inside the
inference loop structure:

* ``ConvEarlyExit`` — the backward branch of the kernel loop is skipped, so
  kernels >= ``last_kernel`` never execute and their output channels keep
  whatever the buffer held before.
* ``ConvSkipKernel`` — the loop counter increments twice, so exactly one
  kernel iteration (bias init included) is skipped.
* ``BiasCorrupt`` — the store that loads a dense-layer bias is disturbed and
  an arbitrary 32-bit value lands in the register instead.
* ``ReluSkipReset`` / ``ReluForceReset`` — the zeroing branch of ReLU is
  skipped (activation becomes identity for one element) or taken
  unconditionally (one element forced to zero).

Plans are single shot: a physical pulse fires once, so after the first hook
match the plan disarms and every later decision is Continue/Normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import StructuralError

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1

#: Plausible SRAM base address on the target family; any corrupt value whose
#: shifted magnitude saturates the int8 output behaves the same way.
DEFAULT_CORRUPT_VALUE = 0x2000_0000


class KernelDecision(Enum):
    CONTINUE = "continue"
    EXIT = "exit"
    SKIP_ONE = "skip_one"


class ReluDecision(Enum):
    NORMAL = "normal"
    SKIP_RESET = "skip_reset"
    FORCE_RESET = "force_reset"


@dataclass(frozen=True)
class ConvEarlyExit:
    layer: str
    last_kernel: int

    type_name = "conv_early_exit"


@dataclass(frozen=True)
class ConvSkipKernel:
    layer: str
    kernel: int

    type_name = "conv_skip_kernel"


@dataclass(frozen=True)
class BiasCorrupt:
    layer: str
    neuron: int
    corrupt_value: int = DEFAULT_CORRUPT_VALUE

    type_name = "bias_corrupt"

    def __post_init__(self):
        if not INT32_MIN <= self.corrupt_value <= INT32_MAX:
            raise StructuralError(
                f"corrupt_value {self.corrupt_value} does not fit in int32"
            )


@dataclass(frozen=True)
class ReluSkipReset:
    layer: str
    element: int

    type_name = "relu_skip"


@dataclass(frozen=True)
class ReluForceReset:
    layer: str
    element: int

    type_name = "relu_force"


@dataclass(frozen=True)
class NoFault:
    type_name = "no_fault"


#: Union of all fault descriptions.
FAULT_TYPES = (ConvEarlyExit, ConvSkipKernel, BiasCorrupt, ReluSkipReset,
               ReluForceReset, NoFault)


def fault_to_json(spec) -> dict:
    """Serialize a fault spec to its wire dict, e.g.
    ``{"type": "conv_early_exit", "layer": "conv1", "last_kernel": 17}``."""
    if isinstance(spec, ConvEarlyExit):
        return {"type": spec.type_name, "layer": spec.layer,
                "last_kernel": spec.last_kernel}
    if isinstance(spec, ConvSkipKernel):
        return {"type": spec.type_name, "layer": spec.layer,
                "kernel": spec.kernel}
    if isinstance(spec, BiasCorrupt):
        return {"type": spec.type_name, "layer": spec.layer,
                "neuron": spec.neuron, "corrupt_value": spec.corrupt_value}
    if isinstance(spec, (ReluSkipReset, ReluForceReset)):
        return {"type": spec.type_name, "layer": spec.layer,
                "element": spec.element}
    if isinstance(spec, NoFault):
        return {"type": spec.type_name}
    raise StructuralError(f"not a fault spec: {spec!r}")


def fault_from_json(obj: dict):
    """Parse the wire dict produced by :func:`fault_to_json`."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise StructuralError(f"fault JSON must be an object with a 'type': {obj!r}")
    kind = obj["type"]
    try:
        if kind == "conv_early_exit":
            return ConvEarlyExit(obj["layer"], int(obj["last_kernel"]))
        if kind == "conv_skip_kernel":
            return ConvSkipKernel(obj["layer"], int(obj["kernel"]))
        if kind == "bias_corrupt":
            return BiasCorrupt(obj["layer"], int(obj["neuron"]),
                               int(obj.get("corrupt_value", DEFAULT_CORRUPT_VALUE)))
        if kind == "relu_skip":
            return ReluSkipReset(obj["layer"], int(obj["element"]))
        if kind == "relu_force":
            return ReluForceReset(obj["layer"], int(obj["element"]))
        if kind == "no_fault":
            return NoFault()
    except KeyError as missing:
        raise StructuralError(f"fault JSON {kind!r} missing field {missing}") from None
    raise StructuralError(f"unknown fault type {kind!r}")


@dataclass
class FaultPlan:
    """One fault spec plus the armed/fired state for a single inference."""

    spec: object = field(default_factory=NoFault)
    armed: bool = True

    def fire(self):
        self.armed = False


@dataclass(frozen=True)
class CountermeasureConfig:
    """Software countermeasures applied during inference.

    ``ram_reset`` zeroes every arena buffer between inferences, killing the
    memory effect. ``bias_guard`` checks each bias as it is loaded:
    ``restore`` substitutes the stored original whenever the loaded value
    exceeds ``bound``; ``clamp`` clips to [-bound, bound], either the bias
    itself (``clamp_on="bias"``) or the accumulated neuron value before
    requantization (``clamp_on="output"``).
    """

    ram_reset: bool = False
    bias_guard: str = "off"  # off | restore | clamp
    bound: int = 2048
    clamp_on: str = "bias"  # bias | output

    def __post_init__(self):
        if self.bias_guard not in ("off", "restore", "clamp"):
            raise StructuralError(f"unknown bias_guard {self.bias_guard!r}")
        if self.clamp_on not in ("bias", "output"):
            raise StructuralError(f"unknown clamp_on {self.clamp_on!r}")
        if self.bound <= 0:
            raise StructuralError("guard bound must be positive")


def on_kernel_loop(plan: FaultPlan, layer: str, k: int) -> KernelDecision:
    """Decision consulted at the top of the conv kernel loop, k in [0, K]."""
    if plan is None or not plan.armed:
        return KernelDecision.CONTINUE
    spec = plan.spec
    if isinstance(spec, ConvEarlyExit) and spec.layer == layer and spec.last_kernel == k:
        plan.fire()
        return KernelDecision.EXIT
    if isinstance(spec, ConvSkipKernel) and spec.layer == layer and spec.kernel == k:
        plan.fire()
        return KernelDecision.SKIP_ONE
    return KernelDecision.CONTINUE


def on_bias_load(plan: FaultPlan, guard: CountermeasureConfig | None,
                 layer: str, j: int, bias: int) -> int:
    """Bias value actually loaded for neuron ``j``, fault and guard applied.

    The fault substitutes a raw int32 for the bias; the guard then inspects
    the candidate (restore returns the stored original when the candidate is
    out of bounds, clamp-on-bias clips it).
    """
    candidate = int(bias)
    if plan is not None and plan.armed:
        spec = plan.spec
        if isinstance(spec, BiasCorrupt) and spec.layer == layer and spec.neuron == j:
            plan.fire()
            candidate = spec.corrupt_value
    if guard is not None and guard.bias_guard == "restore":
        if abs(candidate) > guard.bound:
            return int(bias)
    elif guard is not None and guard.bias_guard == "clamp" and guard.clamp_on == "bias":
        return min(max(candidate, -guard.bound), guard.bound)
    return candidate


def on_relu_element(plan: FaultPlan, layer: str, i: int, value: int) -> ReluDecision:
    """Decision for one ReLU element; ``value`` is the pre-activation."""
    if plan is None or not plan.armed:
        return ReluDecision.NORMAL
    spec = plan.spec
    if isinstance(spec, ReluSkipReset) and spec.layer == layer and spec.element == i:
        plan.fire()
        return ReluDecision.SKIP_RESET
    if isinstance(spec, ReluForceReset) and spec.layer == layer and spec.element == i:
        plan.fire()
        return ReluDecision.FORCE_RESET
    return ReluDecision.NORMAL


class FaultHooks:
    """Plan + countermeasures bundle handed to the inference engine.

    The engine consults the three hook families at the control-flow points a
    pulse can hit. ``relu_target`` lets the engine vectorize the element loop:
    a single-shot plan can disturb at most one element, every other index is
    plain ReLU, so applying the hook only at the armed target is
    observationally identical to consulting it per element.
    """

    __slots__ = ("plan", "guard")

    def __init__(self, plan: FaultPlan | None = None,
                 guard: CountermeasureConfig | None = None):
        self.plan = plan if plan is not None else FaultPlan(NoFault())
        self.guard = guard

    def on_kernel_loop(self, layer: str, k: int) -> KernelDecision:
        return on_kernel_loop(self.plan, layer, k)

    def on_bias_load(self, layer: str, j: int, bias: int) -> int:
        return on_bias_load(self.plan, self.guard, layer, j, bias)

    def on_relu_element(self, layer: str, i: int, value: int) -> ReluDecision:
        return on_relu_element(self.plan, layer, i, value)

    def relu_target(self, layer: str) -> int | None:
        """Element index an armed ReLU fault would hit in this layer, if any."""
        if not self.plan.armed:
            return None
        spec = self.plan.spec
        if isinstance(spec, (ReluSkipReset, ReluForceReset)) and spec.layer == layer:
            return spec.element
        return None

    def output_clamp_bound(self) -> int | None:
        """Bound for the clamp-on-output guard variant, if configured."""
        if (self.guard is not None and self.guard.bias_guard == "clamp"
                and self.guard.clamp_on == "output"):
            return self.guard.bound
        return None
