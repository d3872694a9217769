"""Classical checkpoint records, their canonical byte form, and a directory store.

A record never holds amplitudes: only measurement events, registers, counters,
parameters, seeds, control-flow decisions, decoder state and opaque metadata.
See ``docs/format.md`` for the exact byte layout.
"""
from __future__ import annotations

import fcntl
import hashlib
import json
import math
import os
import re
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .errors import (
    DigestMismatch,
    NotFound,
    ParentMissing,
    SchemaError,
    StorageIO,
    VersionUnsupported,
)
from .sim_backend.shots import MeasurementEvent

FORMAT_VERSION = 1
CLASSES = ("classicalized", "algorithmic", "logical")
RECORD_SUFFIX = ".ckpt.json"
LATEST_FILE = "LATEST"
LOCK_FILE = "LOCK"

# fields left out of the content address
_ID_EXCLUDED = ("checkpoint_id", "created_at", "file_digest")

_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class ShotCursor:
    completed: int = 0
    total: int = 0
    in_flight: int | None = None


@dataclass(frozen=True)
class DecoderState:
    pauli_frame: str
    syndrome_history: tuple[tuple[int, ...], ...] = ()


@dataclass
class CheckpointRecord:
    checkpoint_class: str
    program_digest: str
    position: tuple[int, int] = (0, 0)
    shot_cursor: ShotCursor = field(default_factory=ShotCursor)
    master_seed: int = 0
    registers: dict[str, list[int]] = field(default_factory=dict)
    transcript: list[MeasurementEvent] = field(default_factory=list)
    iteration: int = 0
    parameters: list[float] = field(default_factory=list)
    history: dict[str, list[float]] = field(default_factory=dict)
    control_flow: list[tuple[int, bool]] = field(default_factory=list)
    calibration_metadata: dict[str, str] = field(default_factory=dict)
    decoder_state: DecoderState | None = None
    parent_id: str | None = None
    version: int = FORMAT_VERSION
    checkpoint_id: str = ""
    created_at: str = ""

    def events_for_shot(self, shot: int) -> list[MeasurementEvent]:
        return [ev for ev in self.transcript if ev.shot_index == shot]


# -- canonical form ----------------------------------------------------------

def canonical_json(obj) -> bytes:
    """Sorted keys, no whitespace, shortest round-trip floats, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def record_to_json(record: CheckpointRecord) -> dict:
    ds = record.decoder_state
    return {
        "version": record.version,
        "checkpoint_id": record.checkpoint_id,
        "parent_id": record.parent_id,
        "class": record.checkpoint_class,
        "program_digest": record.program_digest,
        "position": [int(record.position[0]), int(record.position[1])],
        "shot_cursor": {"completed": record.shot_cursor.completed,
                        "total": record.shot_cursor.total,
                        "in_flight": record.shot_cursor.in_flight},
        "master_seed": str(record.master_seed),
        "registers": {k: [int(b) for b in v] for k, v in record.registers.items()},
        "transcript": [ev.to_json() for ev in record.transcript],
        "iteration": record.iteration,
        "parameters": [float(p) for p in record.parameters],
        "history": {k: [float(x) for x in v] for k, v in record.history.items()},
        "control_flow": [[int(op), bool(taken)] for op, taken in record.control_flow],
        "calibration_metadata": dict(record.calibration_metadata),
        "decoder_state": None if ds is None else {
            "pauli_frame": ds.pauli_frame,
            "syndrome_history": [list(s) for s in ds.syndrome_history],
        },
        "created_at": record.created_at,
    }


def id_preimage(record: CheckpointRecord) -> bytes:
    """The exact bytes whose SHA-256 is the checkpoint id."""
    d = record_to_json(record)
    for key in _ID_EXCLUDED:
        d.pop(key, None)
    return canonical_json(d)


def compute_id(record: CheckpointRecord) -> str:
    return _sha256(id_preimage(record))


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def finalize(record: CheckpointRecord) -> CheckpointRecord:
    """Return a copy with ``checkpoint_id`` computed and ``created_at`` stamped if empty."""
    check_record(record)
    stamped = replace(record, created_at=record.created_at or now_iso())
    return replace(stamped, checkpoint_id=compute_id(stamped))


def canonical_serialize(record: CheckpointRecord) -> bytes:
    d = record_to_json(record)
    d["checkpoint_id"] = compute_id(record)
    d["file_digest"] = _sha256(canonical_json(d))
    return canonical_json(d)


def deserialize(data: bytes) -> CheckpointRecord:
    """Parse canonical bytes, re-verifying every digest before trusting any field."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise DigestMismatch(f"record bytes are corrupted: {exc}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("file_digest"), str):
        raise DigestMismatch("record has no file digest")
    if canonical_json(obj) != data:
        raise DigestMismatch("record bytes are not in canonical form")
    claimed = obj.pop("file_digest")
    if _sha256(canonical_json(obj)) != claimed:
        raise DigestMismatch("file digest does not match record bytes")
    if obj.get("version") != FORMAT_VERSION:
        raise VersionUnsupported(f"record version {obj.get('version')!r} is not supported")
    record = record_from_json(obj)
    check_record(record)
    if compute_id(record) != record.checkpoint_id:
        raise DigestMismatch(f"checkpoint id {record.checkpoint_id} does not match content")
    return record


def record_from_json(obj: dict) -> CheckpointRecord:
    try:
        sc = obj["shot_cursor"]
        ds = obj["decoder_state"]
        pos = obj["position"]
        if not (isinstance(pos, list) and len(pos) == 2):
            raise SchemaError("position must be a pair")
        if not isinstance(obj["master_seed"], str) or not obj["master_seed"].isdigit():
            raise SchemaError("master_seed must be a decimal string")
        return CheckpointRecord(
            version=obj["version"],
            checkpoint_id=obj["checkpoint_id"],
            parent_id=obj["parent_id"],
            checkpoint_class=obj["class"],
            program_digest=obj["program_digest"],
            position=(pos[0], pos[1]),
            shot_cursor=ShotCursor(sc["completed"], sc["total"], sc["in_flight"]),
            master_seed=int(obj["master_seed"]),
            registers={k: list(v) for k, v in obj["registers"].items()},
            transcript=[MeasurementEvent.from_json(e) for e in obj["transcript"]],
            iteration=obj["iteration"],
            parameters=[float(p) for p in obj["parameters"]],
            history={k: [float(x) for x in v] for k, v in obj["history"].items()},
            control_flow=[(op, taken) for op, taken in obj["control_flow"]],
            calibration_metadata=dict(obj["calibration_metadata"]),
            decoder_state=None if ds is None else DecoderState(
                ds["pauli_frame"], tuple(tuple(s) for s in ds["syndrome_history"])),
            created_at=obj["created_at"],
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SchemaError(f"malformed record: {exc!r}") from None


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_bit(x) -> bool:
    return _is_int(x) and x in (0, 1)


def check_record(r: CheckpointRecord) -> None:
    """Raise SchemaError unless every record invariant that is checkable locally holds."""
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise SchemaError(msg)

    need(r.checkpoint_class in CLASSES, f"unknown checkpoint class {r.checkpoint_class!r}")
    need((r.checkpoint_class == "logical") == (r.decoder_state is not None),
         "class is logical iff decoder_state is present")
    need(isinstance(r.program_digest, str) and bool(_HEX64.fullmatch(r.program_digest)),
         "program_digest must be 64 lowercase hex chars")
    need(r.parent_id is None or (isinstance(r.parent_id, str) and bool(_HEX64.fullmatch(r.parent_id))),
         "parent_id must be null or 64 hex chars")
    need(all(_is_int(p) and p >= 0 for p in r.position), "position must be non-negative ints")
    sc = r.shot_cursor
    need(_is_int(sc.completed) and _is_int(sc.total) and 0 <= sc.completed <= sc.total,
         "shot_cursor must satisfy 0 <= completed <= total")
    need(sc.in_flight is None or (_is_int(sc.in_flight) and sc.in_flight == sc.completed < sc.total),
         "in-flight shot must be the next uncompleted shot")
    need(_is_int(r.master_seed) and 0 <= r.master_seed < 1 << 64, "master_seed must be 64-bit unsigned")
    need(_is_int(r.iteration) and r.iteration >= 0, "iteration must be a non-negative int")
    for name, bits in r.registers.items():
        need(isinstance(name, str) and all(_is_bit(b) for b in bits), f"register {name!r} must hold bits")
    for ev in r.transcript:
        need(all(_is_int(x) and x >= 0 for x in (ev.shot_index, ev.op_index, ev.qubit)),
             "transcript indices must be non-negative ints")
        need(_is_bit(ev.outcome) and isinstance(ev.forced, bool), "transcript outcome must be a bit")
    need(all(isinstance(p, float) and math.isfinite(p) for p in r.parameters), "parameters must be finite reals")
    for name, xs in r.history.items():
        need(isinstance(name, str) and all(isinstance(x, float) and math.isfinite(x) for x in xs),
             f"history {name!r} must hold finite reals")
    need(all(_is_int(op) and isinstance(t, bool) for op, t in r.control_flow), "control_flow must be (op, bool)")
    need(all(isinstance(k, str) and isinstance(v, str) for k, v in r.calibration_metadata.items()),
         "calibration_metadata must map strings to strings")
    if r.decoder_state is not None:
        ds = r.decoder_state
        need(isinstance(ds.pauli_frame, str) and all(c in "IXYZ" for c in ds.pauli_frame),
             "pauli_frame must be a Pauli string")
        need(all(all(_is_bit(b) for b in s) for s in ds.syndrome_history), "syndromes must be bits")
    need(isinstance(r.created_at, str), "created_at must be a string")


# -- directory store ---------------------------------------------------------

class Store:
    """One file per record under ``root``; publication is write-temp-then-rename."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageIO(f"cannot create store at {self.root}: {exc}") from None

    def path_for(self, checkpoint_id: str) -> Path:
        return self.root / f"{checkpoint_id}{RECORD_SUFFIX}"

    @property
    def index(self) -> dict[str, Path]:
        return {cid: self.path_for(cid) for cid in self.list_ids()}

    def list_ids(self) -> list[str]:
        return sorted(p.name[: -len(RECORD_SUFFIX)] for p in self.root.glob(f"*{RECORD_SUFFIX}")
                      if _HEX64.fullmatch(p.name[: -len(RECORD_SUFFIX)]))

    @contextmanager
    def _locked(self) -> Iterator[None]:
        try:
            fd = os.open(self.root / LOCK_FILE, os.O_RDWR | os.O_CREAT, 0o644)
        except OSError as exc:
            raise StorageIO(f"cannot open lock file: {exc}") from None
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def _atomic_write(self, target: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, target)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def put(self, record: CheckpointRecord) -> str:
        record = finalize(record)
        if record.parent_id is not None:
            parent = self.get(record.parent_id) if self.path_for(record.parent_id).exists() else None
            if parent is None:
                raise ParentMissing(f"parent {record.parent_id} is not in the store")
            if parent.program_digest != record.program_digest:
                raise ParentMissing(f"parent {record.parent_id} belongs to a different program")
        data = canonical_serialize(record)
        try:
            with self._locked():
                self._atomic_write(self.path_for(record.checkpoint_id), data)
                self._atomic_write(self.root / LATEST_FILE, record.checkpoint_id.encode("ascii"))
        except OSError as exc:
            raise StorageIO(f"cannot write checkpoint: {exc}") from None
        return record.checkpoint_id

    def get(self, checkpoint_id: str) -> CheckpointRecord:
        if not isinstance(checkpoint_id, str) or not _HEX64.fullmatch(checkpoint_id):
            raise NotFound(f"{checkpoint_id!r} is not a checkpoint id")
        path = self.path_for(checkpoint_id)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"checkpoint {checkpoint_id} not found in {self.root}") from None
        except OSError as exc:
            raise StorageIO(f"cannot read {path}: {exc}") from None
        record = deserialize(data)
        if record.checkpoint_id != checkpoint_id:
            raise DigestMismatch(f"file {path.name} holds checkpoint {record.checkpoint_id}")
        return record

    def latest(self) -> str | None:
        try:
            text = (self.root / LATEST_FILE).read_text("ascii").strip()
        except FileNotFoundError:
            return None
        except (OSError, UnicodeDecodeError) as exc:
            raise StorageIO(f"cannot read LATEST: {exc}") from None
        return text or None

    def lineage(self, checkpoint_id: str) -> list[str]:
        chain: list[str] = []
        seen: set[str] = set()
        cid: str | None = checkpoint_id
        while cid is not None:
            if cid in seen:
                raise SchemaError(f"parent cycle through {cid}")
            seen.add(cid)
            chain.append(cid)
            cid = self.get(cid).parent_id
        chain.reverse()
        return chain
