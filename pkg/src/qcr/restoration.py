"""Rebuild execution from a checkpoint record.

Two modes, keyed on the checkpoint class:

* classicalized / logical records are restored by *pinned replay*: the in-flight
  shot is re-run from its derived seed with every recorded measurement forced
  to its recorded outcome, stopping at the checkpoint boundary. Completed shots
  are taken from the transcript and never re-run.
* algorithmic records restart the next iteration from stored parameters with
  no quantum replay at all.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .checkpoint_store import CheckpointRecord, DecoderState, ShotCursor
from .circuit_ir import Program, checkpointable_ops
from .errors import BoundaryNotFound, ProgramMismatch, RegisterMismatch, TranscriptOrderMismatch
from .sim_backend.rng import shot_seed
from .sim_backend.shots import MeasurementEvent, ShotContext, execute, new_context


class Mode(str, enum.Enum):
    TRANSCRIPT_REPLAY = "TranscriptReplay"
    ALGORITHMIC_RESTART = "AlgorithmicRestart"


@dataclass(frozen=True)
class Rehydrated:
    iteration: int
    parameters: tuple[float, ...]
    registers: dict[str, list[int]]
    master_seed: int


@dataclass(frozen=True)
class RestorationPlan:
    mode: Mode
    checkpoint: CheckpointRecord
    resume_position: tuple[int, int]
    shots_to_replay: tuple[int, ...]
    rehydrated: Rehydrated


@dataclass
class RuntimeState:
    program: Program
    position: tuple[int, int]
    shot_cursor: ShotCursor
    iteration: int
    parameters: list[float]
    master_seed: int
    mode: Mode
    checkpoint_id: str
    history: dict[str, list[float]] = field(default_factory=dict)
    completed_events: list[MeasurementEvent] = field(default_factory=list)
    in_flight: ShotContext | None = None
    decoder_state: DecoderState | None = None
    shots_replayed: int = 0

    def fingerprint(self) -> str:
        """Digest of everything that determines how execution continues."""
        h = hashlib.sha256()
        h.update(repr((self.program.source_digest, self.position, self.shot_cursor, self.iteration,
                       self.parameters, self.master_seed, self.mode, self.checkpoint_id,
                       sorted(self.history.items()), self.completed_events, self.decoder_state,
                       self.shots_replayed)).encode())
        ctx = self.in_flight
        if ctx is not None:
            h.update(repr((ctx.shot_index, ctx.rng.state, ctx.registers, ctx.transcript,
                           ctx.control_flow, ctx.pc)).encode())
            h.update(ctx.state.amplitudes.tobytes())
        return h.hexdigest()


def _check_boundary(record: CheckpointRecord, program: Program) -> None:
    region, op = record.position
    if not program.instructions:
        if (region, op) != (0, 0):
            raise BoundaryNotFound(f"position {record.position} in an empty program")
        return
    if op not in checkpointable_ops(program) or program.region_index_of(op) != region:
        raise BoundaryNotFound(
            f"position (region {region}, op {op}) is not a checkpointable boundary of this program")


def plan_restoration(record: CheckpointRecord, program: Program) -> RestorationPlan:
    if record.program_digest != program.source_digest:
        raise ProgramMismatch(
            f"checkpoint was taken against program {record.program_digest[:12]}..., "
            f"not {program.source_digest[:12]}...")
    _check_boundary(record, program)
    rehydrated = Rehydrated(record.iteration, tuple(record.parameters),
                            {k: list(v) for k, v in record.registers.items()}, record.master_seed)
    if record.checkpoint_class == "algorithmic":
        return RestorationPlan(Mode.ALGORITHMIC_RESTART, record, record.position, (), rehydrated)
    in_flight = record.shot_cursor.in_flight
    shots = () if in_flight is None else (in_flight,)
    return RestorationPlan(Mode.TRANSCRIPT_REPLAY, record, record.position, shots, rehydrated)


def replay_to_boundary(program: Program, record: CheckpointRecord, shot: int) -> ShotContext:
    """Re-run ``shot`` with its recorded outcomes pinned.

    The in-flight shot halts at the record's position; completed shots run to
    the end. Returned events are marked ``forced``.
    """
    cursor = record.shot_cursor
    if shot == cursor.in_flight:
        stop = record.position[1]
    elif 0 <= shot < cursor.completed:
        stop = None
    else:
        raise ValueError(f"shot {shot} is neither completed nor in flight in this record")
    events = record.events_for_shot(shot)
    ctx = new_context(program, shot, shot_seed(record.master_seed, shot), events)
    execute(program, ctx, stop_at=stop)
    if ctx.pinned:
        ev = ctx.pinned[0]
        raise TranscriptOrderMismatch(f"recorded event at op {ev.op_index} lies beyond the boundary")
    if shot == cursor.in_flight:
        if ctx.registers != record.registers:
            raise RegisterMismatch(f"replayed registers {ctx.registers} != recorded {record.registers}")
        if ctx.control_flow != [tuple(c) for c in record.control_flow]:
            raise RegisterMismatch("replayed control flow differs from the recorded decisions")
    return ctx


def resume(record: CheckpointRecord, program: Program) -> RuntimeState:
    plan = plan_restoration(record, program)
    cursor = record.shot_cursor
    state = RuntimeState(
        program=program,
        position=plan.resume_position,
        shot_cursor=cursor,
        iteration=record.iteration,
        parameters=list(record.parameters),
        master_seed=record.master_seed,
        mode=plan.mode,
        checkpoint_id=record.checkpoint_id,
        history={k: list(v) for k, v in record.history.items()},
        completed_events=[ev for ev in record.transcript if ev.shot_index < cursor.completed],
        decoder_state=record.decoder_state,
    )
    for shot in plan.shots_to_replay:
        ctx = replay_to_boundary(program, record, shot)
        # downstream output carries the original (unforced) events
        ctx.transcript = record.events_for_shot(shot)
        state.in_flight = ctx
        state.shots_replayed += 1
    return state
