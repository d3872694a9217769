"""Dynamic-circuit program representation and its line-oriented DSL.

A program file looks like::

    qubits 2
    creg m 1
    region prep
    h 0
    cx 0 1
    measure 0 -> m[0]
    ckpt classicalized
    region fix
    if m[0] == 1: x 1

Every line of the body becomes exactly one instruction; ``region`` and
``ckpt`` lines are instructions too (no-ops for the simulator) so that
checkpoint positions are plain op indices.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from .errors import EmptyProgram, ParseError, ProgramSyntaxError, SemanticError

# name -> (arity, number of real parameters)
GATES: dict[str, tuple[int, int]] = {
    "h": (1, 0), "x": (1, 0), "y": (1, 0), "z": (1, 0), "s": (1, 0), "t": (1, 0),
    "cx": (2, 0), "cz": (2, 0),
    "rx": (1, 1), "ry": (1, 1), "rz": (1, 1),
}

CHECKPOINT_CLASSES = ("classicalized", "algorithmic", "logical")

IMPLICIT_REGION = "main"


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()


@dataclass(frozen=True)
class Measure:
    qubit: int
    creg: str
    bit: int


@dataclass(frozen=True)
class Reset:
    qubit: int


@dataclass(frozen=True)
class Guarded:
    """Run ``inner`` iff ``creg[bit] == value``."""
    creg: str
    bit: int
    value: int
    inner: "Instruction"


@dataclass(frozen=True)
class RegionStart:
    name: str


@dataclass(frozen=True)
class CheckpointMarker:
    hint: str | None = None


Instruction = Union[Gate, Measure, Reset, Guarded, RegionStart, CheckpointMarker]


@dataclass(frozen=True)
class RegionDescriptor:
    name: str
    start_op: int
    end_op: int  # exclusive
    checkpointable: bool = True


@dataclass(frozen=True)
class Program:
    num_qubits: int
    cregs: tuple[tuple[str, int], ...]
    instructions: tuple[Instruction, ...]
    regions: tuple[RegionDescriptor, ...]
    source_digest: str = field(default="", compare=False)

    @property
    def body(self) -> list[Instruction]:
        """Instructions that act on qubits or registers (markers excluded)."""
        return [op for op in self.instructions
                if not isinstance(op, (RegionStart, CheckpointMarker))]

    def creg_width(self, name: str) -> int | None:
        for n, w in self.cregs:
            if n == name:
                return w
        return None

    def region_index_of(self, op_index: int) -> int:
        for i, r in enumerate(self.regions):
            if r.start_op <= op_index < r.end_op:
                return i
        if op_index == len(self.instructions) and self.regions:
            return len(self.regions) - 1
        if not self.instructions and op_index == 0:
            return 0
        raise IndexError(f"op {op_index} lies in no region")


class Diagnostic(NamedTuple):
    op_index: int | None
    severity: str  # "error" | "warning"
    message: str


class Boundary(NamedTuple):
    region: str
    op_index: int
    checkpointable: bool


def program_digest(text: str | bytes) -> str:
    """Lowercase hex SHA-256 of the exact source bytes (UTF-8 for str input)."""
    data = text.encode("utf-8") if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


def is_measurement(op: Instruction) -> bool:
    if isinstance(op, Guarded):
        op = op.inner
    return isinstance(op, (Measure, Reset))


# -- parsing -----------------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_INT = r"\d+"
_NUM = r"[-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
_ANGLE = rf"(?:{_NUM}|[-+]?(?:{_NUM}\*)?pi(?:/{_NUM})?)"

_RE_HEADER = re.compile(rf"qubits\s+({_INT})$")
_RE_CREG = re.compile(rf"creg\s+({_NAME})\s+({_INT})$")
_RE_REGION = re.compile(rf"region\s+({_NAME})$")
_RE_CKPT = re.compile(rf"ckpt(?:\s+({_NAME}))?$")
_RE_GUARD = re.compile(rf"if\s+({_NAME})\s*\[\s*({_INT})\s*\]\s*==\s*({_INT})\s*:\s*(.*)$")
_RE_MEASURE = re.compile(rf"measure\s+({_INT})\s*->\s*({_NAME})\s*\[\s*({_INT})\s*\]$")
_RE_RESET = re.compile(rf"reset\s+({_INT})$")
_RE_GATE = re.compile(rf"({_NAME})(?:\(\s*({_ANGLE})\s*\))?((?:\s+{_INT})+)$")


def _angle(token: str) -> float:
    if "pi" not in token:
        return float(token)
    sign = -1.0 if token.startswith("-") else 1.0
    body = token.lstrip("+-")
    num, _, den = body.partition("/")
    coef = 1.0
    if "*" in num:
        coef = float(num.split("*")[0])
    value = sign * coef * math.pi
    if den:
        value /= float(den)
    return value


def _parse_instruction(src: str, lineno: int, col: int) -> tuple[Instruction, list[tuple[int, int]]]:
    """Parse one body instruction; returns it plus (value, column) of each qubit token."""
    if m := _RE_GUARD.match(src):
        inner_src = m.group(4)
        inner_col = col + m.start(4)
        head = inner_src.split(None, 1)[0] if inner_src.strip() else ""
        if head == "if":
            raise SemanticError("nested guard: guarded instructions may not nest", lineno, inner_col)
        if head in ("region", "ckpt"):
            raise SemanticError(f"guard may not wrap '{head}'", lineno, inner_col)
        inner, qcols = _parse_instruction(inner_src, lineno, inner_col)
        return Guarded(m.group(1), int(m.group(2)), int(m.group(3)), inner), qcols
    if m := _RE_MEASURE.match(src):
        return (Measure(int(m.group(1)), m.group(2), int(m.group(3))),
                [(int(m.group(1)), col + m.start(1))])
    if m := _RE_RESET.match(src):
        return Reset(int(m.group(1))), [(int(m.group(1)), col + m.start(1))]
    if m := _RE_GATE.match(src):
        name = m.group(1)
        if name not in GATES:
            raise SemanticError(f"unknown gate '{name}'", lineno, col)
        params = () if m.group(2) is None else (_angle(m.group(2)),)
        qcols = [(int(q.group()), col + m.start(3) + q.start())
                 for q in re.finditer(r"\d+", m.group(3))]
        return Gate(name, tuple(q for q, _ in qcols), params), qcols
    raise ProgramSyntaxError(f"cannot parse instruction '{src}'", lineno, col)


def parse_program(text: str | bytes) -> Program:
    """Parse DSL source into a validated Program.

    Raises a ParseError subclass for every malformed input; never anything else.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProgramSyntaxError(f"source is not valid UTF-8: {exc.reason}") from None
    try:
        return _parse(text)
    except ParseError:
        raise
    except (ValueError, OverflowError, RecursionError) as exc:  # pragma: no cover - defensive
        raise ProgramSyntaxError(str(exc)) from None


def _parse(text: str) -> Program:
    digest = program_digest(text)
    num_qubits: int | None = None
    cregs: list[tuple[str, int]] = []
    ops: list[Instruction] = []
    op_lines: list[int] = []
    op_qcols: list[list[tuple[int, int]]] = []

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        line = line.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1

        if num_qubits is None:
            m = _RE_HEADER.match(stripped)
            if m is None:
                if stripped.split()[0] == "qubits":
                    raise ProgramSyntaxError("malformed 'qubits' header", lineno, col)
                raise EmptyProgram("program must start with a 'qubits <n>' header", lineno, col)
            num_qubits = int(m.group(1))
            if num_qubits < 1:
                raise SemanticError("qubit count must be positive", lineno, col + m.start(1))
            continue

        if stripped.startswith("qubits") and _RE_HEADER.match(stripped):
            raise ProgramSyntaxError("duplicate 'qubits' header", lineno, col)
        if m := _RE_CREG.match(stripped):
            if ops:
                raise ProgramSyntaxError("creg declarations must precede instructions", lineno, col)
            name, width = m.group(1), int(m.group(2))
            if any(n == name for n, _ in cregs):
                raise SemanticError(f"duplicate creg '{name}'", lineno, col + m.start(1))
            if width < 1:
                raise SemanticError(f"creg '{name}' must have positive width", lineno, col + m.start(2))
            cregs.append((name, width))
            continue
        if m := _RE_REGION.match(stripped):
            ops.append(RegionStart(m.group(1)))
            qcols: list[tuple[int, int]] = []
        elif m := _RE_CKPT.match(stripped):
            hint = m.group(1)
            if hint is not None and hint not in CHECKPOINT_CLASSES:
                raise SemanticError(f"unknown checkpoint class '{hint}'", lineno, col + m.start(1))
            ops.append(CheckpointMarker(hint))
            qcols = []
        else:
            op, qcols = _parse_instruction(stripped, lineno, col)
            ops.append(op)
        op_lines.append(lineno)
        op_qcols.append(qcols)

    if num_qubits is None:
        raise EmptyProgram("program has no 'qubits' header")

    # qubit range errors carry a precise column
    for i, op in enumerate(ops):
        for q, qcol in op_qcols[i]:
            if q >= num_qubits:
                raise SemanticError(f"qubit {q} out of range", op_lines[i], qcol)

    program = Program(num_qubits, tuple(cregs), tuple(ops), _build_regions(ops), digest)
    for diag in validate(program):
        if diag.severity == "error":
            line = op_lines[diag.op_index] if diag.op_index is not None else None
            raise SemanticError(diag.message, line)
    return program


def _build_regions(ops: list[Instruction]) -> tuple[RegionDescriptor, ...]:
    starts: list[tuple[str, int]] = []
    for i, op in enumerate(ops):
        if isinstance(op, RegionStart):
            starts.append((op.name, i))
    if ops and (not starts or starts[0][1] != 0):
        starts.insert(0, (IMPLICIT_REGION, 0))
    regions = []
    for k, (name, start) in enumerate(starts):
        end = starts[k + 1][1] if k + 1 < len(starts) else len(ops)
        regions.append(RegionDescriptor(name, start, end, True))
    return tuple(regions)


# -- validation --------------------------------------------------------------

def _check_op(program: Program, i: int, op: Instruction, out: list[Diagnostic]) -> None:
    n = program.num_qubits
    if isinstance(op, Gate):
        spec = GATES.get(op.name)
        if spec is None:
            out.append(Diagnostic(i, "error", f"unknown gate '{op.name}'"))
            return
        arity, nparams = spec
        if len(op.qubits) != arity:
            out.append(Diagnostic(i, "error", f"gate '{op.name}' takes {arity} qubit(s), got {len(op.qubits)}"))
        if len(op.params) != nparams:
            out.append(Diagnostic(i, "error", f"gate '{op.name}' takes {nparams} parameter(s), got {len(op.params)}"))
        if any(not math.isfinite(p) for p in op.params):
            out.append(Diagnostic(i, "error", f"gate '{op.name}' has a non-finite angle"))
        for q in op.qubits:
            if not 0 <= q < n:
                out.append(Diagnostic(i, "error", f"qubit {q} out of range"))
        if len(set(op.qubits)) != len(op.qubits):
            out.append(Diagnostic(i, "error", f"gate '{op.name}' repeats a qubit"))
    elif isinstance(op, Measure):
        if not 0 <= op.qubit < n:
            out.append(Diagnostic(i, "error", f"qubit {op.qubit} out of range"))
        _check_bit(program, i, op.creg, op.bit, out)
    elif isinstance(op, Reset):
        if not 0 <= op.qubit < n:
            out.append(Diagnostic(i, "error", f"qubit {op.qubit} out of range"))
    elif isinstance(op, Guarded):
        _check_bit(program, i, op.creg, op.bit, out)
        if op.value not in (0, 1):
            out.append(Diagnostic(i, "error", f"guard constant must be 0 or 1, got {op.value}"))
        if isinstance(op.inner, Guarded):
            out.append(Diagnostic(i, "error", "nested guard: guarded instructions may not nest"))
        elif isinstance(op.inner, (RegionStart, CheckpointMarker)):
            out.append(Diagnostic(i, "error", "guard may not wrap region or checkpoint markers"))
        else:
            _check_op(program, i, op.inner, out)
    elif isinstance(op, CheckpointMarker):
        if op.hint is not None and op.hint not in CHECKPOINT_CLASSES:
            out.append(Diagnostic(i, "error", f"unknown checkpoint class '{op.hint}'"))


def _check_bit(program: Program, i: int, creg: str, bit: int, out: list[Diagnostic]) -> None:
    width = program.creg_width(creg)
    if width is None:
        out.append(Diagnostic(i, "error", f"undeclared creg '{creg}'"))
    elif not 0 <= bit < width:
        out.append(Diagnostic(i, "error", f"bit {bit} out of range for creg '{creg}' of width {width}"))


def marker_allowed(ops: tuple[Instruction, ...] | list[Instruction], i: int) -> bool:
    """Checkpoint markers sit at a region boundary or right after a measurement."""
    if i == 0 or i == len(ops) - 1:
        return True
    prev, nxt = ops[i - 1], ops[i + 1]
    return isinstance(prev, RegionStart) or is_measurement(prev) or isinstance(nxt, RegionStart)


def validate(program: Program) -> list[Diagnostic]:
    """Check every Program invariant; an empty list means the program is valid."""
    out: list[Diagnostic] = []
    if program.num_qubits < 1:
        out.append(Diagnostic(None, "error", "qubit count must be positive"))
    seen: set[str] = set()
    for name, width in program.cregs:
        if name in seen:
            out.append(Diagnostic(None, "error", f"duplicate creg '{name}'"))
        seen.add(name)
        if width < 1:
            out.append(Diagnostic(None, "error", f"creg '{name}' must have positive width"))
    if program.source_digest and not re.fullmatch(r"[0-9a-f]{64}", program.source_digest):
        out.append(Diagnostic(None, "error", "source_digest is not a 64-hex SHA-256"))

    ops = program.instructions
    for i, op in enumerate(ops):
        _check_op(program, i, op, out)
        if isinstance(op, CheckpointMarker) and not marker_allowed(ops, i):
            out.append(Diagnostic(i, "error",
                                  "checkpoint marker must follow a measurement or sit at a region boundary"))

    _check_regions(program, out)
    return out


def _check_regions(program: Program, out: list[Diagnostic]) -> None:
    ops, regions = program.instructions, program.regions
    names = [r.name for r in regions]
    for name in set(names):
        if names.count(name) > 1:
            out.append(Diagnostic(None, "error", f"duplicate region name '{name}'"))
    if not ops:
        if regions:
            out.append(Diagnostic(None, "error", "empty program cannot have regions"))
        return
    if not regions:
        out.append(Diagnostic(None, "error", "regions do not cover the instructions"))
        return
    expected = 0
    for r in regions:
        if r.start_op >= r.end_op:
            out.append(Diagnostic(r.start_op, "error", f"region '{r.name}' is empty or inverted"))
        if r.start_op != expected:
            kind = "overlap" if r.start_op < expected else "leave a gap"
            out.append(Diagnostic(r.start_op, "error", f"region '{r.name}' descriptors {kind}"))
        expected = max(expected, r.end_op)
    if regions[-1].end_op != len(ops) or expected != len(ops):
        out.append(Diagnostic(None, "error", "regions do not cover the instructions"))
    starts = {r.start_op: r for r in regions}
    for i, op in enumerate(ops):
        if isinstance(op, RegionStart):
            r = starts.get(i)
            if r is None or r.name != op.name:
                out.append(Diagnostic(i, "error", f"region marker '{op.name}' does not open a region"))
    for r in regions:
        if 0 <= r.start_op < len(ops) and not isinstance(ops[r.start_op], RegionStart) and r.start_op != 0:
            out.append(Diagnostic(r.start_op, "error", f"region '{r.name}' does not start at a region marker"))


# -- boundaries & printing ---------------------------------------------------

def region_boundaries(program: Program) -> list[Boundary]:
    """Region starts and checkpoint markers, in op order."""
    out: list[Boundary] = []
    for r in program.regions:
        out.append(Boundary(r.name, r.start_op, r.checkpointable))
        for i in range(r.start_op, r.end_op):
            if isinstance(program.instructions[i], CheckpointMarker) and i != r.start_op:
                out.append(Boundary(r.name, i, True))
    return out


def checkpointable_ops(program: Program) -> set[int]:
    return {b.op_index for b in region_boundaries(program) if b.checkpointable}


def _fmt_angle(x: float) -> str:
    return repr(float(x))


def format_instruction(op: Instruction) -> str:
    if isinstance(op, Gate):
        head = op.name if not op.params else f"{op.name}({_fmt_angle(op.params[0])})"
        return " ".join([head, *map(str, op.qubits)])
    if isinstance(op, Measure):
        return f"measure {op.qubit} -> {op.creg}[{op.bit}]"
    if isinstance(op, Reset):
        return f"reset {op.qubit}"
    if isinstance(op, Guarded):
        return f"if {op.creg}[{op.bit}] == {op.value}: {format_instruction(op.inner)}"
    if isinstance(op, RegionStart):
        return f"region {op.name}"
    if isinstance(op, CheckpointMarker):
        return "ckpt" if op.hint is None else f"ckpt {op.hint}"
    raise TypeError(f"not an instruction: {op!r}")


def format_program(program: Program) -> str:
    lines = [f"qubits {program.num_qubits}"]
    lines += [f"creg {n} {w}" for n, w in program.cregs]
    lines += [format_instruction(op) for op in program.instructions]
    return "\n".join(lines) + "\n"
