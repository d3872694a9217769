"""Checkpoint manager, failure injection, and the run/resume orchestration."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from ..checkpoint_store import CheckpointRecord, Store
from ..errors import InjectedFailure, NoCheckpointAvailable
from ..restoration import RuntimeState, resume
from .policy import FailureAction, FailureSpec, Policy, on_failure

if TYPE_CHECKING:
    from .workloads import Workload

log = logging.getLogger(__name__)

REPORT_VERSION = 1
DEFAULT_CALIBRATION = {"backend": "qcr-statevector", "backend_version": "1"}


@dataclass
class RunReport:
    workload: str
    program_digest: str
    master_seed: int
    policy: str
    status: str = "completed"
    resumed: bool = False
    resumed_from: str | None = None
    outputs: dict = field(default_factory=dict)
    checkpoints: list[str] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    timing: dict = field(default_factory=lambda: {"checkpoint_create_ms": [], "restore_ms": []})
    counts: dict = field(default_factory=lambda: {
        "shots_executed": 0, "shots_replayed": 0, "iterations_executed": 0,
        "layers_reinstantiated": 0, "measurements": 0, "checkpoints_created": 0})

    def to_json(self, timing: bool = True) -> dict:
        d = {
            "report_version": REPORT_VERSION,
            "workload": self.workload,
            "program_digest": self.program_digest,
            "master_seed": str(self.master_seed),
            "policy": self.policy,
            "status": self.status,
            "resumed": self.resumed,
            "resumed_from": self.resumed_from,
            "outputs": self.outputs,
            "checkpoints": list(self.checkpoints),
            "failures": list(self.failures),
            "counts": dict(self.counts),
        }
        if timing:
            d["timing"] = {k: list(v) for k, v in self.timing.items()}
        return d

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_json(timing), sort_keys=True, indent=2)


class CheckpointManager:
    """Cuts checkpoints when triggers fire and terminates the run at injected failure points.

    Workloads call :meth:`reach` at every potential checkpoint or failure point;
    the manager owns the store, the parent chain and the report.
    """

    def __init__(self, workload: "Workload", policy: Policy, store: Store,
                 failure: FailureSpec | None, master_seed: int, *,
                 parent_id: str | None = None, calibration: dict[str, str] | None = None,
                 report: RunReport | None = None):
        self.workload = workload
        self.policy = policy
        self.store = store
        self.failure = failure
        self.master_seed = master_seed
        self.parent_id = parent_id
        self.calibration = dict(DEFAULT_CALIBRATION if calibration is None else calibration)
        self.report = report or RunReport(workload.kind, workload.program.source_digest,
                                          master_seed, policy.spec)

    def count(self, key: str, n: int = 1) -> None:
        self.report.counts[key] = self.report.counts.get(key, 0) + n

    def cut(self, fields: dict) -> str:
        t0 = time.perf_counter()
        record = CheckpointRecord(program_digest=self.workload.program.source_digest,
                                  master_seed=self.master_seed, parent_id=self.parent_id,
                                  calibration_metadata=dict(self.calibration), **fields)
        cid = self.store.put(record)
        self.report.timing["checkpoint_create_ms"].append((time.perf_counter() - t0) * 1e3)
        self.report.checkpoints.append(cid)
        self.count("checkpoints_created")
        self.parent_id = cid
        log.debug("checkpoint %s at %s", cid[:12], fields.get("position"))
        return cid

    def reach(self, point: tuple, *, due: bool, checkpointable: bool,
              build: Callable[[], dict]) -> None:
        """Handle one potential checkpoint/failure point.

        A due checkpoint is committed before any failure at the same point fires,
        so a kill never leaves the point half-recorded.
        """
        cut = False
        if due:
            self.cut(build())
            cut = True
        if self.failure is not None and self.failure.matches(point):
            if self.policy.on_event and checkpointable and not cut:
                self.cut(build())
            raise InjectedFailure(type(self.failure).__name__, {"point": list(point)})


def run_workflow(workload: "Workload", policy: Policy, store: Store,
                 failure: FailureSpec | None = None, master_seed: int = 0) -> RunReport:
    """Run ``workload`` from scratch. An injected failure ends the run with status ``failed``."""
    if failure is not None:
        workload.check_failure(failure)
    mgr = CheckpointManager(workload, policy, store, failure, master_seed)
    return _drive(workload, mgr, None)


def _drive(workload: "Workload", mgr: CheckpointManager, state: RuntimeState | None) -> RunReport:
    report = mgr.report
    try:
        report.outputs = workload.run(mgr, state)
    except InjectedFailure as exc:
        report.status = "failed"
        report.failures.append({"kind": exc.kind, "where": exc.where, "action": "terminate",
                                "latest": mgr.parent_id})
    return report


def resume_workflow(workload: "Workload", policy: Policy, store: Store, *,
                    checkpoint_id: str | None = None, failure: FailureSpec | None = None,
                    master_seed: int = 0, event: dict | None = None) -> RunReport:
    """Continue after a failure according to ``policy.on_failure``.

    Rollback resumes from ``checkpoint_id`` (default: the store's latest);
    Restart re-runs from scratch with the same seed; Reschedule resumes like
    Rollback but tags the backend in the calibration metadata. Rollback or
    Reschedule on an empty store fall back to Restart.
    """
    if failure is not None:
        workload.check_failure(failure)
    target = checkpoint_id or store.latest()
    event = event or {"kind": "resume"}
    action: FailureAction = on_failure(event, policy, target)
    seed = master_seed
    if target is not None:
        seed = store.get(target).master_seed
    if action.kind == "restart":
        mgr = CheckpointManager(workload, policy, store, failure, seed)
        mgr.report.failures.append({**event, **action.to_json()})
        if action.fallback:
            log.warning("no checkpoint available; restarting from scratch")
        return _drive(workload, mgr, None)

    t0 = time.perf_counter()
    record = store.get(target)
    state = resume(record, workload.program)
    restore_ms = (time.perf_counter() - t0) * 1e3
    calibration = {**record.calibration_metadata, **action.calibration_update}
    mgr = CheckpointManager(workload, policy, store, failure, record.master_seed,
                            parent_id=record.checkpoint_id, calibration=calibration)
    report = mgr.report
    report.resumed = True
    report.resumed_from = record.checkpoint_id
    report.timing["restore_ms"].append(restore_ms)
    report.failures.append({**event, **action.to_json()})
    mgr.count("shots_replayed", state.shots_replayed)
    return _drive(workload, mgr, state)


def require_checkpoint(store: Store) -> str:
    latest = store.latest()
    if latest is None:
        raise NoCheckpointAvailable(f"store {store.root} holds no checkpoints")
    return latest
