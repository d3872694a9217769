"""Checkpoint manager, failure policies and the algorithm drivers."""
from __future__ import annotations

import tempfile
from contextlib import contextmanager
from typing import Iterator

from ..checkpoint_store import Store
from ..circuit_ir import checkpointable_ops
from ..errors import ConfigError
from ..paulis import Term
from .manager import DEFAULT_CALIBRATION, CheckpointManager, RunReport, require_checkpoint, resume_workflow, run_workflow
from .policy import (BackendUnavailable, FailureAction, FailureSpec, KillAtIteration, KillAtOp, KillAtShot,
                     Policy, on_failure, parse_failure)
from .variational import FalqonWorkload, IterativeWorkload, VqeWorkload, ansatz_gates
from .workloads import (BELL_SOURCE, GhzWorkload, ProgramWorkload, RepetitionWorkload, ReuseWorkload, Workload,
                        bell_workload, ghz_source, read_pragma, repcode_source, reuse_source)

__all__ = [
    "BELL_SOURCE", "DEFAULT_CALIBRATION", "BackendUnavailable", "CheckpointManager", "FailureAction",
    "FailureSpec", "FalqonWorkload", "GhzWorkload", "IterativeWorkload", "KillAtIteration", "KillAtOp",
    "KillAtShot", "Policy", "ProgramWorkload", "RepetitionWorkload", "ReuseWorkload", "RunReport",
    "VqeWorkload", "Workload", "ansatz_gates", "bell_workload", "ghz_source", "kill_points", "load_workload",
    "on_failure", "parse_failure", "repcode_source", "require_checkpoint", "resume_workflow", "reuse_source",
    "run_falqon", "run_ghz_prep", "run_qubit_reuse_demo", "run_repetition_code", "run_vqe", "run_workflow",
]


def load_workload(text: str, shots: int | None = None) -> Workload:
    """Build the workload a program file describes.

    Files carrying a workload pragma rebuild their driver from it (and must
    agree with ``shots`` when given); plain programs run ``shots`` shots.
    """
    pragma = read_pragma(text)
    if pragma is None:
        return ProgramWorkload(text, 1 if shots is None else shots)
    kind, cfg = pragma
    try:
        if kind == "vqe":
            wl: Workload = VqeWorkload([(c, p) for c, p in cfg["hamiltonian"]], cfg["depth"],
                                       cfg["learning_rate"], cfg["max_iterations"], cfg["tolerance"],
                                       cfg.get("initial_parameters"), source=text)
        elif kind == "falqon":
            wl = FalqonWorkload([(c, p) for c, p in cfg["hp"]], [(c, p) for c, p in cfg["hd"]],
                                cfg["dt"], cfg["steps"], source=text)
        elif kind == "ghz":
            wl = GhzWorkload(cfg["n"], cfg["shots"], source=text)
        elif kind == "reuse":
            wl = ReuseWorkload(cfg["shots"], cfg["physical_qubits"], source=text)
        elif kind == "repcode":
            err = cfg.get("injected_error")
            wl = RepetitionWorkload(cfg["rounds"], tuple(err) if err else None, source=text)
        else:
            raise ConfigError(f"unknown workload kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} workload pragma: {exc}") from None
    if shots is not None and isinstance(wl, ProgramWorkload) and shots != wl.shots:
        raise ConfigError(f"program fixes {wl.shots} shots; --shots {shots} disagrees")
    return wl


def kill_points(workload: Workload, iterations: int | None = None) -> list[FailureSpec]:
    """Every checkpointable failure point of ``workload``, in execution order."""
    if isinstance(workload, IterativeWorkload):
        top = workload.max_iterations if iterations is None else min(iterations, workload.max_iterations)
        return [KillAtIteration(i) for i in range(1, top + 1)]
    assert isinstance(workload, ProgramWorkload)
    prog = workload.program
    ops = sorted(checkpointable_ops(prog)) if prog.instructions else []
    out: list[FailureSpec] = []
    for shot in range(workload.shots):
        out.append(KillAtShot(shot))
        out += [KillAtOp(prog.region_index_of(op), op, shot) for op in ops]
    return out


@contextmanager
def _store_or_temp(store: Store | None) -> Iterator[Store]:
    if store is not None:
        yield store
        return
    with tempfile.TemporaryDirectory(prefix="qcr-") as d:
        yield Store(d)


def _run(workload: Workload, policy: Policy, store: Store | None, failure: FailureSpec | None,
         master_seed: int) -> RunReport:
    with _store_or_temp(store) as s:
        return run_workflow(workload, policy, s, failure, master_seed)


def run_vqe(hamiltonian: list[Term], depth: int = 1, learning_rate: float = 0.2, max_iterations: int = 200,
            tolerance: float = 1e-6, *, initial_parameters: list[float] | None = None,
            policy: Policy | None = None, store: Store | None = None, failure: FailureSpec | None = None,
            master_seed: int = 0) -> RunReport:
    wl = VqeWorkload(hamiltonian, depth, learning_rate, max_iterations, tolerance, initial_parameters)
    return _run(wl, policy or Policy(iteration=True), store, failure, master_seed)


def run_falqon(hp: list[Term], hd: list[Term], dt: float = 0.01, steps: int = 50, *,
               policy: Policy | None = None, store: Store | None = None, failure: FailureSpec | None = None,
               master_seed: int = 0) -> RunReport:
    return _run(FalqonWorkload(hp, hd, dt, steps), policy or Policy(iteration=True), store, failure, master_seed)


def run_ghz_prep(n: int, shots: int = 8, master_seed: int = 0, *, policy: Policy | None = None,
                 store: Store | None = None, failure: FailureSpec | None = None) -> RunReport:
    return _run(GhzWorkload(n, shots), policy or Policy(region=True), store, failure, master_seed)


def run_qubit_reuse_demo(shots: int = 16, master_seed: int = 0, *, physical_qubits: int = 2,
                         policy: Policy | None = None, store: Store | None = None,
                         failure: FailureSpec | None = None) -> RunReport:
    return _run(ReuseWorkload(shots, physical_qubits), policy or Policy(region=True), store, failure,
                master_seed)


def run_repetition_code(rounds: int = 5, injected_error: tuple[int, int] | None = None, master_seed: int = 0,
                        *, policy: Policy | None = None, store: Store | None = None,
                        failure: FailureSpec | None = None) -> RunReport:
    return _run(RepetitionWorkload(rounds, injected_error), policy or Policy(region=True), store, failure,
                master_seed)
