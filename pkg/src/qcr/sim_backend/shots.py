"""Single-shot execution of a Program, free or pinned to a recorded transcript."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..circuit_ir import (
    CheckpointMarker,
    Gate,
    Guarded,
    Instruction,
    Measure,
    Program,
    RegionStart,
    Reset,
)
from ..errors import TranscriptOrderMismatch
from . import statevector as sv
from .rng import RngStream


@dataclass(frozen=True)
class MeasurementEvent:
    shot_index: int
    op_index: int
    qubit: int
    outcome: int
    forced: bool = False

    def to_json(self) -> dict:
        return {"shot_index": self.shot_index, "op_index": self.op_index, "qubit": self.qubit,
                "outcome": self.outcome, "forced": self.forced}

    @classmethod
    def from_json(cls, d: dict) -> "MeasurementEvent":
        return cls(d["shot_index"], d["op_index"], d["qubit"], d["outcome"], d["forced"])

    def unforced(self) -> "MeasurementEvent":
        return MeasurementEvent(self.shot_index, self.op_index, self.qubit, self.outcome, False)


@dataclass
class ShotContext:
    shot_index: int
    rng: RngStream
    registers: dict[str, list[int]]
    state: sv.StateVector
    transcript: list[MeasurementEvent] = field(default_factory=list)
    control_flow: list[tuple[int, bool]] = field(default_factory=list)
    pc: int = 0
    pinned: deque = field(default_factory=deque, repr=False)

    def bits(self) -> str:
        """Registers flattened to a bitstring, cregs in declaration order."""
        return "".join("".join(map(str, v)) for v in self.registers.values())


# called before the instruction at op_index executes
Hook = Callable[[ShotContext, int], None]


def new_context(program: Program, shot_index: int, seed: int,
                pinned: Iterable[MeasurementEvent] | None = None) -> ShotContext:
    return ShotContext(
        shot_index=shot_index,
        rng=RngStream(seed),
        registers={name: [0] * width for name, width in program.cregs},
        state=sv.init_state(program.num_qubits),
        pinned=deque(pinned or ()),
    )


def _next_pinned(ctx: ShotContext, op_index: int, qubit: int) -> MeasurementEvent | None:
    if not ctx.pinned:
        return None
    ev = ctx.pinned[0]
    if ev.shot_index != ctx.shot_index or ev.op_index != op_index or ev.qubit != qubit:
        raise TranscriptOrderMismatch(
            f"pinned event (shot {ev.shot_index}, op {ev.op_index}, qubit {ev.qubit}) does not match "
            f"next measurement (shot {ctx.shot_index}, op {op_index}, qubit {qubit})")
    return ctx.pinned.popleft()


def _step(ctx: ShotContext, op: Instruction, op_index: int) -> None:
    if isinstance(op, Gate):
        ctx.state = sv.apply_gate(ctx.state, op.name, op.qubits, op.params)
    elif isinstance(op, (Measure, Reset)):
        ev = _next_pinned(ctx, op_index, op.qubit)
        is_reset = isinstance(op, Reset)
        if ev is None:
            fn = sv.reset if is_reset else sv.measure
            outcome, ctx.state = fn(ctx.state, op.qubit, ctx.rng)
        else:
            outcome = ev.outcome
            fn = sv.force_reset if is_reset else sv.force_measure
            ctx.state = fn(ctx.state, op.qubit, outcome, ctx.rng)
        if not is_reset:
            ctx.registers[op.creg][op.bit] = outcome
        ctx.transcript.append(MeasurementEvent(ctx.shot_index, op_index, op.qubit, outcome, ev is not None))
    elif isinstance(op, Guarded):
        taken = ctx.registers[op.creg][op.bit] == op.value
        ctx.control_flow.append((op_index, taken))
        if taken:
            _step(ctx, op.inner, op_index)
    elif isinstance(op, (RegionStart, CheckpointMarker)):
        pass
    else:  # pragma: no cover
        raise TypeError(f"not an instruction: {op!r}")


def execute(program: Program, ctx: ShotContext, *, stop_at: int | None = None,
            hook: Hook | None = None, skip_hook_at: int | None = None) -> ShotContext:
    """Run ``ctx`` forward from ``ctx.pc`` until the program ends or ``stop_at`` is reached.

    ``hook`` sees every op index before it executes, except ``skip_hook_at`` (the
    position a restored context resumes from, whose checkpoint already exists).
    """
    ops = program.instructions
    while ctx.pc < len(ops):
        i = ctx.pc
        if stop_at is not None and i == stop_at:
            return ctx
        if hook is not None and i != skip_hook_at:
            hook(ctx, i)
        _step(ctx, ops[i], i)
        ctx.pc = i + 1
    if stop_at is not None and stop_at != len(ops):
        raise ValueError(f"stop_at={stop_at} was never reached")
    return ctx


def run_shot(program: Program, shot_seed: int, pinned: Iterable[MeasurementEvent] | None = None,
             *, shot_index: int = 0, stop_at: int | None = None) -> ShotContext:
    """Execute one shot; measurements consume ``pinned`` outcomes first, then sample freely."""
    ctx = new_context(program, shot_index, shot_seed, pinned)
    execute(program, ctx, stop_at=stop_at)
    if ctx.pinned and stop_at is None:
        ev = ctx.pinned[0]
        raise TranscriptOrderMismatch(
            f"pinned event at op {ev.op_index} was never reached")
    return ctx
