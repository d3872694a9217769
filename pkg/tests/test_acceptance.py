"""Acceptance criteria: one test per criterion, each at its stated tolerance."""
from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from conftest import FIXTURES
from harness import kill_and_resume, sweep
from oracles import dense_project, falqon_dense, ghz_vector, ground_energy, repcode_truth
from qcr.checkpoint_store import (CheckpointRecord, ShotCursor, canonical_serialize, deserialize, finalize,
                                  record_to_json)
from qcr.circuit_ir import Measure, parse_program
from qcr.errors import DigestMismatch
from qcr.paulis import parse_hamiltonian
from qcr.runtime import (FalqonWorkload, GhzWorkload, KillAtIteration, KillAtOp, Policy, ProgramWorkload,
                         RepetitionWorkload, ReuseWorkload, VqeWorkload, bell_workload, ghz_source, kill_points,
                         resume_workflow, run_falqon, run_repetition_code, run_vqe, run_workflow)
from qcr.sim_backend import statevector as sv
from qcr.sim_backend.rng import RngStream
from qcr.sim_backend.shots import MeasurementEvent, run_shot

ZZ = parse_hamiltonian("ZZ")
HD = parse_hamiltonian("XI + IX")
SHOT_POLICY = Policy(region=True, every_k_shots=1, on_event=True)

CORPUS = {
    "bell": (lambda: bell_workload(4), SHOT_POLICY),
    "ghz3": (lambda: GhzWorkload(3, 3), SHOT_POLICY),
    "ghz4": (lambda: GhzWorkload(4, 3), SHOT_POLICY),
    "ghz5": (lambda: GhzWorkload(5, 3), SHOT_POLICY),
    "reuse": (lambda: ReuseWorkload(4), SHOT_POLICY),
    "vqe_zz": (lambda: VqeWorkload(ZZ), Policy(iteration=True)),
    "falqon2": (lambda: FalqonWorkload(ZZ, HD, 0.01, 50), Policy(iteration=True)),
    "repcode5": (lambda: RepetitionWorkload(5, (2, 1)), SHOT_POLICY),
}


def test_criterion_1_transparency_sweep(new_store):
    t0 = time.perf_counter()
    failures, checked = [], 0
    for name, (make, policy) in CORPUS.items():
        for seed in (0, 1, 2):
            points = None
            if name in ("vqe_zz", "falqon2"):
                clean = run_workflow(make(), policy, new_store(), None, seed)
                points = kill_points(make(), clean.counts["iterations_executed"])
            points = points if points is not None else kill_points(make())
            checked += len(points)
            failures += [(name, seed, p, why) for p, why in sweep(make, policy, new_store, seed, points)]
    elapsed = time.perf_counter() - t0
    print(f"transparency: {checked} kill points, {len(failures)} mismatches, {elapsed:.1f}s")
    assert failures == []
    assert elapsed < 300


def test_criterion_2_projector_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(1, 5))
        v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
        state = sv.StateVector(n, v / np.linalg.norm(v))
        q = int(rng.integers(n))
        outcome, post = sv.measure(state, q, RngStream(k))
        _, ref = dense_project(state.amplitudes, q, outcome)
        worst = max(worst, float(np.max(np.abs(post.amplitudes - ref))))
        for bit in (0, 1):
            forced = sv.force_measure(state, q, bit, RngStream(k))
            _, ref = dense_project(state.amplitudes, q, bit)
            worst = max(worst, float(np.max(np.abs(forced.amplitudes - ref))))
    print(f"projector oracle: max amplitude deviation {worst:.2e}")
    assert worst < 1e-10


def test_criterion_3_ghz_branch_exhaustion():
    worst = 0.0
    for n in (3, 5):
        prog = parse_program(ghz_source(n, 1))
        meas = [(i, op.qubit) for i, op in enumerate(prog.instructions) if isinstance(op, Measure)]
        for bits in itertools.product((0, 1), repeat=len(meas)):
            pinned = [MeasurementEvent(0, i, q, b) for (i, q), b in zip(meas, bits)]
            ctx = run_shot(prog, 0, pinned)
            fid = abs(np.vdot(ghz_vector(n), ctx.state.amplitudes)) ** 2
            worst = max(worst, abs(fid - 1.0))
    print(f"GHZ branches: max |fidelity - 1| = {worst:.2e}")
    assert worst < 1e-10


def test_criterion_4_vqe_convergence_and_trajectory(new_store):
    clean = run_vqe(ZZ, max_iterations=200, store=new_store())
    out = clean.outputs
    exact = ground_energy(ZZ)
    print(f"VQE: {out['iterations']} iterations, E = {out['final_energy']:.9f}, exact {exact}")
    assert out["iterations"] <= 200
    assert abs(out["final_energy"] - exact) < 1e-3
    for k in range(1, out["iterations"] + 1):
        store = new_store()
        run_vqe(ZZ, store=store, failure=KillAtIteration(k))
        rep = resume_workflow(VqeWorkload(ZZ), Policy(iteration=True), store)
        assert rep.outputs["trajectory"] == out["trajectory"], f"trajectory differs after kill at {k}"


def test_criterion_5_falqon_monotonicity(store):
    rep = run_falqon(ZZ, HD, dt=0.01, steps=50, store=store)
    energies = rep.outputs["energies"]
    ref_energies, ref_betas = falqon_dense(ZZ, HD, 0.01, 50)
    assert np.allclose(energies, ref_energies, atol=1e-9)
    assert np.allclose(rep.outputs["betas"], ref_betas, atol=1e-9)
    steps = np.diff(energies)
    print(f"FALQON: largest per-layer change {steps.max():.3e}, final <Hp> = {energies[-1]:.6f}")
    assert steps.max() <= 1e-9
    assert energies[-1] < -0.9


def test_criterion_6_repetition_code_logical_restore(new_store):
    for r, q in itertools.product((1, 2, 3), (0, 1, 2)):
        clean = run_repetition_code(5, (r, q), store=new_store())
        syn, frame, _, logical = repcode_truth(5, (r, q))
        assert clean.outputs["pauli_frame"] == frame
        assert [tuple(s) for s in clean.outputs["syndrome_history"]] == syn
        assert clean.outputs["logical_outcome"] == logical
        wl = RepetitionWorkload(5, (r, q))
        # "after round k" = just before the next region starts
        for region in range(1, 6):
            start = wl.program.regions[region].start_op
            _, resumed = kill_and_resume(lambda: RepetitionWorkload(5, (r, q)), Policy(region=True), new_store(),
                                         KillAtOp(region, start, 0), 0)
            assert resumed.outputs["pauli_frame"] == frame
            assert resumed.outputs == clean.outputs


def _record_size(num_qubits: int, events: int, store) -> int:
    src = f"qubits {num_qubits}\ncreg c 1\nregion a\nh {num_qubits - 1}\nmeasure {num_qubits - 1} -> c[0]\n"
    wl = ProgramWorkload(src, events + 1)
    rep = run_workflow(wl, Policy(every_k_shots=events), store, None, 0)
    (cid,) = rep.checkpoints
    rec = store.get(cid)
    assert len(rec.transcript) == events
    return len(canonical_serialize(rec))


def test_criterion_7_no_snapshot_size_bound(new_store):
    sizes = {n: _record_size(n, 100, new_store()) for n in (2, 8, 16)}
    spread = (max(sizes.values()) - min(sizes.values())) / min(sizes.values())
    lengths = [10, 30, 100, 300, 1000]
    grow = [_record_size(2, length, new_store()) for length in lengths]
    slope, intercept = np.polyfit(lengths, grow, 1)
    resid = max(abs(s - (slope * x + intercept)) / s for x, s in zip(lengths, grow))
    print(f"record sizes by qubits {sizes} (spread {spread:.2%}); "
          f"sizes by events {dict(zip(lengths, grow))}, max deviation from linear {resid:.2%}")
    assert spread < 0.05
    assert resid < 0.10


def test_criterion_8_format_stability():
    data = (FIXTURES / "golden.ckpt.json").read_bytes()
    rec = deserialize(data)
    assert rec.checkpoint_id == "c1005c8aed9fb42690de5c01a3c08a23e476325eb5454fe06fee8ece9d193e90"
    assert canonical_serialize(rec) == data
    for i in range(len(data)):
        for delta in (1, 0x20, 0x80):
            bad = bytearray(data)
            bad[i] ^= delta
            with pytest.raises(DigestMismatch):
                deserialize(bytes(bad))


def test_criterion_9_overhead_report(new_store):
    store = new_store()
    rep = run_workflow(ReuseWorkload(16), Policy(region=True), store, None, 0)
    create = rep.timing["checkpoint_create_ms"]
    assert len(create) == len(rep.checkpoints) > 0
    killed, resumed = kill_and_resume(lambda: ReuseWorkload(16), Policy(region=True), new_store(),
                                      KillAtOp(1, 8, 7), 0)
    assert len(resumed.timing["restore_ms"]) == 1
    assert "shots_replayed" in resumed.counts
    sizes = [len(canonical_serialize(store.get(c))) for c in rep.checkpoints]
    print(f"create: median {np.median(create):.2f} ms, max {max(create):.2f} ms over {len(create)} records "
          f"({min(sizes)}-{max(sizes)} bytes); restore {resumed.timing['restore_ms'][0]:.2f} ms")
    assert max(create) < 50.0
    # every single failure replays at most the in-flight shot and never re-runs completed ones
    for point in kill_points(ReuseWorkload(6)):
        store = new_store()
        _, resumed = kill_and_resume(lambda: ReuseWorkload(6), Policy(region=True, on_event=True), store, point, 0)
        rec = store.get(resumed.resumed_from)
        assert resumed.counts["shots_replayed"] <= 1
        assert resumed.counts["shots_replayed"] == (rec.shot_cursor.in_flight is not None)
        assert resumed.counts["shots_executed"] == 6 - rec.shot_cursor.completed
