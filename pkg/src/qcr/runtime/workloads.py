"""Shot-based workloads: plain programs, GHZ preparation, qubit reuse, repetition code.

Every workload is backed by a DSL program. Driver workloads put their
configuration on a ``#@ workload <kind> <json>`` pragma line, so the program
file alone (and therefore its digest) pins the whole workload.
"""
from __future__ import annotations

import json
from collections import Counter

import numpy as np

from ..checkpoint_store import DecoderState, ShotCursor
from ..circuit_ir import CheckpointMarker, Guarded, Measure, Program, checkpointable_ops, parse_program
from ..errors import ConfigError, SpecOutOfRange
from ..restoration import RuntimeState
from ..sim_backend.rng import shot_seed
from ..sim_backend.shots import MeasurementEvent, ShotContext, execute, new_context
from .manager import CheckpointManager
from .policy import BackendUnavailable, FailureSpec, KillAtIteration, KillAtOp, KillAtShot, Policy

PRAGMA = "#@ workload"


def pragma_line(kind: str, config: dict) -> str:
    return f"{PRAGMA} {kind} {json.dumps(config, sort_keys=True, separators=(',', ':'))}"


def read_pragma(text: str) -> tuple[str, dict] | None:
    for line in text.splitlines():
        if line.startswith(PRAGMA):
            parts = line[len(PRAGMA):].strip().split(None, 1)
            try:
                return parts[0], json.loads(parts[1]) if len(parts) > 1 else {}
            except (IndexError, ValueError):
                raise ConfigError(f"malformed workload pragma: {line!r}") from None
    return None


class Workload:
    kind = "program"

    def __init__(self, source: str):
        self.source = source
        self.program: Program = parse_program(source)

    def config(self) -> dict:
        return {}

    def check_failure(self, failure: FailureSpec) -> None:
        raise NotImplementedError

    def run(self, mgr: CheckpointManager, state: RuntimeState | None) -> dict:
        raise NotImplementedError


def registers_by_shot(program: Program, events: list[MeasurementEvent], shots: int) -> list[dict[str, list[int]]]:
    """Final registers of each shot, rebuilt from its transcript."""
    regs = [{name: [0] * width for name, width in program.cregs} for _ in range(shots)]
    for ev in events:
        op = program.instructions[ev.op_index]
        if isinstance(op, Guarded):
            op = op.inner
        if isinstance(op, Measure):
            regs[ev.shot_index][op.creg][op.bit] = ev.outcome
    return regs


def _bits(regs: dict[str, list[int]]) -> str:
    return "".join("".join(map(str, v)) for v in regs.values())


class ProgramWorkload(Workload):
    """Runs a program for a number of shots with per-shot seeds derived from the master seed."""

    has_decoder = False
    metric_names: tuple[str, ...] = ()

    def __init__(self, source: str, shots: int):
        super().__init__(source)
        if shots < 1:
            raise ConfigError(f"shots must be >= 1, got {shots}")
        self.shots = shots

    def check_failure(self, failure: FailureSpec) -> None:
        prog = self.program
        if isinstance(failure, KillAtOp):
            if not 0 <= failure.region < len(prog.regions):
                raise SpecOutOfRange(f"region {failure.region} does not exist")
            r = prog.regions[failure.region]
            if not r.start_op <= failure.op < r.end_op:
                raise SpecOutOfRange(f"op {failure.op} is outside region {failure.region}")
            if not 0 <= failure.shot < self.shots:
                raise SpecOutOfRange(f"shot {failure.shot} is outside 0..{self.shots - 1}")
        elif isinstance(failure, KillAtShot):
            if not 0 <= failure.shot < self.shots:
                raise SpecOutOfRange(f"shot {failure.shot} is outside 0..{self.shots - 1}")
        elif isinstance(failure, BackendUnavailable):
            if failure.first >= self.shots:
                raise SpecOutOfRange(f"outage starts after the last shot {self.shots - 1}")
        elif isinstance(failure, KillAtIteration):
            raise SpecOutOfRange("shot workloads have no iterations")
        else:
            raise SpecOutOfRange(f"unsupported failure {failure!r}")

    # classical per-shot state hooks; the base workload has none
    def begin_shot(self, shot: int) -> None:
        pass

    def observe(self, ctx: ShotContext, op: int) -> None:
        pass

    def decoder_state(self) -> DecoderState | None:
        return None

    def restore_decoder(self, ds: DecoderState) -> None:
        pass

    def shot_metrics(self, ctx: ShotContext) -> dict[str, float]:
        return {}

    def extra_outputs(self, regs: list[dict[str, list[int]]], metrics: dict[str, list[float]]) -> dict:
        return {}

    def _class_for(self, hint: str | None, in_flight: bool, policy: Policy) -> str:
        if self.has_decoder:
            return "logical"
        cls = hint or policy.checkpoint_class_default
        if cls == "logical" or (cls == "algorithmic" and in_flight):
            # in-flight state needs pinned replay; logical needs a decoder
            cls = "classicalized"
        return cls

    def _fields(self, cls: str, **kw) -> dict:
        if cls == "logical":
            kw["decoder_state"] = self.decoder_state()
        return {"checkpoint_class": cls, **kw}

    def run(self, mgr: CheckpointManager, state: RuntimeState | None) -> dict:
        prog = self.program
        policy = mgr.policy
        ckpt_ops = checkpointable_ops(prog)
        total = self.shots
        ctx: ShotContext | None = None
        resume_op: int | None = None
        skip_boundary = False
        if state is None:
            completed = 0
            events: list[MeasurementEvent] = []
            metrics: dict[str, list[float]] = {k: [] for k in self.metric_names}
        else:
            if state.shot_cursor.total != total:
                raise ConfigError(f"checkpoint is for {state.shot_cursor.total} shots, workload has {total}")
            completed = state.shot_cursor.completed
            events = list(state.completed_events)
            metrics = {k: list(state.history.get(k, []))[:completed] for k in self.metric_names}
            ctx = state.in_flight
            if ctx is not None:
                resume_op = state.position[1]
            else:
                skip_boundary = True
            if state.decoder_state is not None:
                self.restore_decoder(state.decoder_state)

        while completed < total:
            if ctx is None:
                if not skip_boundary:
                    self._shot_boundary(mgr, completed, events, metrics)
                skip_boundary = False
                self.begin_shot(completed)
                ctx = new_context(prog, completed, shot_seed(mgr.master_seed, completed))
                resume_op = None

            def hook(c: ShotContext, op: int, done: int = completed) -> None:
                self.observe(c, op)
                is_boundary = op in ckpt_ops
                region = prog.region_index_of(op)
                hint = prog.instructions[op].hint if isinstance(prog.instructions[op], CheckpointMarker) else None

                def build() -> dict:
                    return self._fields(
                        self._class_for(hint, True, policy),
                        position=(region, op),
                        shot_cursor=ShotCursor(done, total, done),
                        registers={k: list(v) for k, v in c.registers.items()},
                        transcript=events + c.transcript,
                        history={k: list(v) for k, v in metrics.items()},
                        control_flow=list(c.control_flow),
                    )
                mgr.reach(("op", region, op, c.shot_index), due=policy.region and is_boundary,
                          checkpointable=is_boundary, build=build)

            live_from = len(ctx.transcript)
            execute(prog, ctx, hook=hook, skip_hook_at=resume_op)
            mgr.count("measurements", len(ctx.transcript) - live_from)
            mgr.count("shots_executed")
            for k, v in self.shot_metrics(ctx).items():
                metrics[k].append(v)
            events.extend(ctx.transcript)
            completed += 1
            ctx = None

        return self._outputs(events, metrics)

    def _shot_boundary(self, mgr: CheckpointManager, completed: int, events: list[MeasurementEvent],
                       metrics: dict[str, list[float]]) -> None:
        k = mgr.policy.every_k_shots
        due = k is not None and completed > 0 and completed % k == 0

        def build() -> dict:
            return self._fields(
                self._class_for(None, False, mgr.policy),
                position=(0, 0),
                shot_cursor=ShotCursor(completed, self.shots, None),
                transcript=list(events),
                history={name: list(v) for name, v in metrics.items()},
            )
        mgr.reach(("shot", completed), due=due, checkpointable=True, build=build)

    def _outputs(self, events: list[MeasurementEvent], metrics: dict[str, list[float]]) -> dict:
        regs = registers_by_shot(self.program, events, self.shots)
        flat = [_bits(r) for r in regs]
        out = {
            "shots": self.shots,
            "registers": [{k: "".join(map(str, v)) for k, v in r.items()} for r in regs],
            "counts": dict(sorted(Counter(flat).items())),
            "transcript": [ev.to_json() for ev in events],
        }
        out.update({k: list(v) for k, v in metrics.items()})
        out.update(self.extra_outputs(regs, metrics))
        return out


# -- Bell ---------------------------------------------------------------------

BELL_SOURCE = """\
# Bell pair with a feedforward correction.
qubits 2
creg m 1
region prep
h 0
cx 0 1
measure 0 -> m[0]
ckpt classicalized
region fix
if m[0] == 1: x 1
if m[0] == 1: x 0
"""


def bell_workload(shots: int = 100) -> ProgramWorkload:
    return ProgramWorkload(BELL_SOURCE, shots)


# -- GHZ by measurement and feedforward ---------------------------------------

def ghz_layout(n: int) -> tuple[list[int], list[int], int | None]:
    """Data qubits on even indices, parity ancillas between them, optional tail."""
    data = list(range(0, n, 2))
    ancillas = list(range(1, n - 1, 2))
    tail = n - 1 if n % 2 == 0 else None
    return data, ancillas, tail


def ghz_source(n: int, shots: int) -> str:
    data, anc, tail = ghz_layout(n)
    lines = [pragma_line("ghz", {"n": n, "shots": shots}),
             f"qubits {n}", f"creg a {len(anc)}", "region entangle"]
    lines += [f"h {d}" for d in data]
    for i, a in enumerate(anc):
        lines += [f"cx {data[i]} {a}", f"cx {data[i + 1]} {a}"]
    if tail is not None:
        lines.append(f"cx {data[-1]} {tail}")
    lines.append("region measure")
    lines += [f"measure {a} -> a[{i}]" for i, a in enumerate(anc)]
    lines += ["ckpt classicalized", "region correct"]
    # data qubit j flips iff the parity of ancillas 0..j-1 is odd
    for j in range(1, len(data)):
        targets = [data[j]] + ([tail] if tail is not None and j == len(data) - 1 else [])
        for i in range(j):
            lines += [f"if a[{i}] == 1: x {t}" for t in targets]
    for i, a in enumerate(anc):
        lines += [f"if a[{i}] == 1: x {a}", f"cx {data[i]} {a}"]
    return "\n".join(lines) + "\n"


def ghz_fidelity(amplitudes: np.ndarray) -> float:
    overlap = (amplitudes[0] + amplitudes[-1]) / np.sqrt(2.0)
    return float(abs(overlap) ** 2)


class GhzWorkload(ProgramWorkload):
    kind = "ghz"
    metric_names = ("fidelity",)

    def __init__(self, n: int = 3, shots: int = 8, source: str | None = None):
        if not 3 <= n <= 5:
            raise ConfigError(f"GHZ preparation supports 3..5 qubits, got {n}")
        self.n = n
        super().__init__(source if source is not None else ghz_source(n, shots), shots)

    def config(self) -> dict:
        return {"n": self.n, "shots": self.shots}

    def shot_metrics(self, ctx: ShotContext) -> dict[str, float]:
        return {"fidelity": ghz_fidelity(ctx.state.amplitudes)}


# -- qubit reuse ---------------------------------------------------------------

def reuse_source(shots: int, physical_qubits: int = 2) -> str:
    """Three logical qubits in a chain on two physical qubits (extra ones stay idle)."""
    lines = [
        pragma_line("reuse", {"physical_qubits": physical_qubits, "shots": shots}),
        f"qubits {physical_qubits}",
        "creg c 3",
        "region logical0",
        "ry(1.1) 0",
        "cx 0 1",
        "measure 0 -> c[0]",
        "ckpt classicalized",
        "reset 0",
        "region reuse0",  # physical 0 now hosts logical 2
        "ry(0.7) 1",
        "cx 1 0",
        "ry(0.4) 0",
        "measure 1 -> c[1]",
        "ckpt classicalized",
        "reset 1",
        "region readout",
        "if c[1] == 1: x 1",
        "measure 0 -> c[2]",
    ]
    return "\n".join(lines) + "\n"


class ReuseWorkload(ProgramWorkload):
    kind = "reuse"

    def __init__(self, shots: int = 16, physical_qubits: int = 2, source: str | None = None):
        if physical_qubits < 2:
            raise ConfigError("qubit reuse needs at least 2 physical qubits")
        self.physical_qubits = physical_qubits
        super().__init__(source if source is not None else reuse_source(shots, physical_qubits), shots)

    def config(self) -> dict:
        return {"physical_qubits": self.physical_qubits, "shots": self.shots}

    def extra_outputs(self, regs, metrics) -> dict:
        return {"outcomes": ["".join(map(str, r["c"])) for r in regs]}


# -- repetition code -------------------------------------------------------------

DATA = (0, 1, 2)
ANCILLA = (3, 4)
# detection event (s01, s12) -> data qubit to flip in the frame
_LOOKUP = {(1, 0): 0, (1, 1): 1, (0, 1): 2}


def repcode_source(rounds: int, injected_error: tuple[int, int] | None) -> str:
    cfg = {"rounds": rounds, "injected_error": list(injected_error) if injected_error else None}
    lines = [pragma_line("repcode", cfg), "qubits 5", f"creg s {2 * rounds}", "creg d 3"]
    for r in range(1, rounds + 1):
        lines.append(f"region round{r}")
        if injected_error is not None and injected_error[0] == r:
            lines.append(f"x {injected_error[1]}")
        lines += ["cx 0 3", "cx 1 3", "cx 1 4", "cx 2 4",
                  f"measure 3 -> s[{2 * (r - 1)}]", f"measure 4 -> s[{2 * (r - 1) + 1}]",
                  "ckpt logical", "reset 3", "reset 4"]
    lines += ["region readout"] + [f"measure {q} -> d[{q}]" for q in DATA]
    return "\n".join(lines) + "\n"


class RepetitionWorkload(ProgramWorkload):
    """3-qubit bit-flip code; the decoder keeps a Pauli frame and never corrects physically."""

    kind = "repcode"
    has_decoder = True
    metric_names = ("logical",)

    def __init__(self, rounds: int = 5, injected_error: tuple[int, int] | None = None,
                 source: str | None = None):
        if rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {rounds}")
        if injected_error is not None:
            r, q = injected_error
            if not (1 <= r <= rounds and q in DATA):
                raise ConfigError(f"injected error {injected_error} outside rounds 1..{rounds}, qubits 0..2")
            injected_error = (int(r), int(q))
        self.rounds = rounds
        self.injected_error = injected_error
        super().__init__(source if source is not None else repcode_source(rounds, injected_error), 1)
        self._round_at = {}
        for i, op in enumerate(self.program.instructions):
            if isinstance(op, CheckpointMarker) and op.hint == "logical":
                self._round_at[i] = len(self._round_at)
        self.begin_shot(0)

    def config(self) -> dict:
        return {"rounds": self.rounds,
                "injected_error": list(self.injected_error) if self.injected_error else None}

    def begin_shot(self, shot: int) -> None:
        self.frame = ["I", "I", "I"]
        self.syndromes: list[tuple[int, int]] = []

    def observe(self, ctx: ShotContext, op: int) -> None:
        r = self._round_at.get(op)
        if r is None:
            return
        s = (ctx.registers["s"][2 * r], ctx.registers["s"][2 * r + 1])
        prev = self.syndromes[-1] if self.syndromes else (0, 0)
        detection = (s[0] ^ prev[0], s[1] ^ prev[1])
        q = _LOOKUP.get(detection)
        if q is not None:
            self.frame[q] = "X" if self.frame[q] == "I" else "I"
        self.syndromes.append(s)

    def decoder_state(self) -> DecoderState:
        return DecoderState("".join(self.frame), tuple(self.syndromes))

    def restore_decoder(self, ds: DecoderState) -> None:
        self.frame = list(ds.pauli_frame)
        self.syndromes = [tuple(s) for s in ds.syndrome_history]

    def _corrected(self, ctx_regs: dict[str, list[int]]) -> list[int]:
        return [b ^ (self.frame[q] == "X") for q, b in enumerate(ctx_regs["d"])]

    def shot_metrics(self, ctx: ShotContext) -> dict[str, float]:
        corrected = self._corrected(ctx.registers)
        return {"logical": float(sum(corrected) >= 2)}

    def extra_outputs(self, regs, metrics) -> dict:
        corrected = self._corrected(regs[0])
        return {
            "syndrome_history": [list(s) for s in self.syndromes],
            "pauli_frame": "".join(self.frame),
            "data_bits": "".join(map(str, regs[0]["d"])),
            "corrected_bits": "".join(map(str, corrected)),
            "logical_outcome": int(metrics["logical"][0]),
        }
