"""``qcr`` command line: run, resume and verify checkpointed workloads.

Reports go to stdout (or ``--output``), diagnostics to stderr, checkpoints to
``--ckpt-dir`` (default ``$QCR_CKPT_DIR``).

Exit codes: 0 ok, 1 parse/validation, 2 storage, 3 injected failure,
4 program mismatch or inconsistent replay, 5 no checkpoint, 6 verify failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .checkpoint_store import Store, record_to_json
from .circuit_ir import checkpointable_ops, parse_program, region_boundaries
from .errors import (ConfigError, InjectedFailure, NoCheckpointAvailable, NotFound, ParseError, QcrError,
                     ReplayError, RestorationError, StorageIO, StoreError)
from .paulis import parse_hamiltonian
from .restoration import plan_restoration, replay_to_boundary
from .runtime import (FalqonWorkload, GhzWorkload, Policy, RepetitionWorkload, ReuseWorkload, RunReport,
                      VqeWorkload, Workload, load_workload, parse_failure, require_checkpoint, resume_workflow,
                      run_workflow)
from .runtime.workloads import read_pragma

log = logging.getLogger("qcr")

EXIT_OK, EXIT_CONFIG, EXIT_STORAGE, EXIT_INJECTED, EXIT_MISMATCH, EXIT_EMPTY, EXIT_VERIFY = range(7)
ENV_CKPT_DIR = "QCR_CKPT_DIR"
PROGRAM_FILE = "workload.qdc"
MANIFEST_FILE = "RUN.json"


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1, not argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *, policy: str, ckpt_required: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--ckpt-dir", default=os.environ.get(ENV_CKPT_DIR),
                   help=f"checkpoint directory (default ${ENV_CKPT_DIR}"
                        + ("" if ckpt_required else "; a temporary directory when unset") + ")")
    p.add_argument("--policy", default=policy, help=f"trigger spec, e.g. iter,region,shots:K,conv:TOL,event "
                                                    f"(default {policy})")
    p.add_argument("--on-failure", choices=("rollback", "restart", "reschedule"), default="rollback")
    p.add_argument("--fail-at", metavar="SPEC", help="inject a failure: op:R:I[@S], shot:K, iter:I, backend:A-B")
    _outputs(p)


def _outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("--figures", metavar="DIR", help="render PNG figures of the report into DIR")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock timings from the report")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qcr", description="Checkpoint/restore runtime for dynamic quantum circuits.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a program file")
    p.add_argument("--program", required=True)
    p.add_argument("--shots", type=int)
    _common(p, policy="region", ckpt_required=True)

    p = sub.add_parser("resume", help="resume from the latest (or a named) checkpoint")
    p.add_argument("--program", help=f"program file (default <ckpt-dir>/{PROGRAM_FILE})")
    p.add_argument("--checkpoint", help="checkpoint id (default: latest)")
    p.add_argument("--ckpt-dir", default=os.environ.get(ENV_CKPT_DIR))
    p.add_argument("--policy", help="trigger spec (default: the one the run used)")
    p.add_argument("--on-failure", choices=("rollback", "restart", "reschedule"))
    p.add_argument("--fail-at", metavar="SPEC")
    _outputs(p)

    p = sub.add_parser("verify", help="re-verify every record and replay it to its boundary")
    p.add_argument("--program", help=f"program file (default <ckpt-dir>/{PROGRAM_FILE})")
    p.add_argument("--ckpt-dir", default=os.environ.get(ENV_CKPT_DIR))

    p = sub.add_parser("info", help="describe a program or a checkpoint store")
    p.add_argument("--program")
    p.add_argument("--ckpt-dir", default=os.environ.get(ENV_CKPT_DIR))
    p.add_argument("--checkpoint", help="print this record in full")

    p = sub.add_parser("vqe", help="variational eigensolver with algorithmic checkpoints")
    p.add_argument("--hamiltonian", default="ZZ", help='weighted Pauli sum, e.g. "1.0*ZZ + 0.5*XI"')
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--learning-rate", type=float, default=0.2)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--init-params", help="comma-separated initial parameters (default: seeded)")
    _common(p, policy="iter")

    p = sub.add_parser("falqon", help="feedback-based layer-wise optimization")
    p.add_argument("--hp", default="ZZ", help="problem Hamiltonian")
    p.add_argument("--hd", default="XI + IX", help="driver Hamiltonian")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=50)
    _common(p, policy="iter")

    p = sub.add_parser("ghz", help="constant-depth GHZ preparation by measurement and feedforward")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--shots", type=int, default=8)
    _common(p, policy="region")

    p = sub.add_parser("reuse", help="three logical qubits on two physical qubits via measure+reset")
    p.add_argument("--shots", type=int, default=16)
    p.add_argument("--physical-qubits", type=int, default=2)
    _common(p, policy="region")

    p = sub.add_parser("repcode", help="3-qubit repetition code with a Pauli-frame decoder")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--inject", metavar="ROUND:QUBIT", help="inject an X error at the start of a round")
    _common(p, policy="region")
    return ap


# -- helpers -------------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        return Path(path).read_bytes().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not valid UTF-8") from None


def _store_dir(args, required: bool) -> Path:
    if args.ckpt_dir:
        return Path(args.ckpt_dir)
    if required:
        raise ConfigError(f"--ckpt-dir is required (or set {ENV_CKPT_DIR})")
    root = Path(tempfile.mkdtemp(prefix="qcr-"))
    log.warning("no --ckpt-dir given; checkpoints go to %s", root)
    return root


def _open_store(root: Path, create: bool) -> Store:
    if not create and not root.is_dir():
        raise NoCheckpointAvailable(f"no checkpoint directory at {root}")
    return Store(root)


def _manifest(root: Path) -> dict:
    try:
        return json.loads((root / MANIFEST_FILE).read_text())
    except (OSError, ValueError):
        return {}


def _write_run_files(root: Path, workload: Workload, args, shots: int | None) -> None:
    """Keep the exact program bytes and the run settings next to the checkpoints."""
    (root / PROGRAM_FILE).write_bytes(workload.source.encode("utf-8"))
    manifest = {"workload": workload.kind, "program_digest": workload.program.source_digest,
                "policy": args.policy, "on_failure": args.on_failure, "seed": args.seed, "shots": shots}
    (root / MANIFEST_FILE).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _emit(report: RunReport, args) -> None:
    doc = report.to_json(timing=not args.no_timing)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figures:
        from .plotting import render_figures
        for path in render_figures(doc, args.figures):
            log.info("wrote %s", path)


def _finish(report: RunReport) -> int:
    if report.status == "failed":
        f = report.failures[-1]
        print(f"qcr: injected failure {f['kind']} at {f['where']['point']}; latest checkpoint {f['latest']}",
              file=sys.stderr)
        return EXIT_INJECTED
    return EXIT_OK


def _execute(workload: Workload, args, root: Path, shots: int | None) -> int:
    policy = Policy.parse(args.policy, on_failure=args.on_failure)
    failure = parse_failure(args.fail_at) if args.fail_at else None
    try:
        root.mkdir(parents=True, exist_ok=True)
        store = _open_store(root, create=True)
        _write_run_files(root, workload, args, shots)
    except OSError as exc:
        raise StorageIO(f"cannot prepare checkpoint directory {root}: {exc.strerror}") from None
    report = run_workflow(workload, policy, store, failure, args.seed)
    log.info("checkpoints in %s", root)
    _emit(report, args)
    return _finish(report)


# -- commands --------------------------------------------------------------------

def cmd_run(args) -> int:
    text = _read_text(args.program)
    workload = load_workload(text, args.shots)
    return _execute(workload, args, _store_dir(args, required=True), getattr(workload, "shots", None))


def cmd_resume(args) -> int:
    root = _store_dir(args, required=True)
    store = _open_store(root, create=False)
    latest = require_checkpoint(store)
    target = args.checkpoint or latest
    record = store.get(target)
    manifest = _manifest(root)
    program_path = args.program or str(root / PROGRAM_FILE)
    text = _read_text(program_path)
    shots = manifest.get("shots") or (record.shot_cursor.total or None)
    workload = load_workload(text, None if read_pragma(text) else shots)
    policy = Policy.parse(args.policy or manifest.get("policy", "region"),
                          on_failure=args.on_failure or manifest.get("on_failure", "rollback"))
    failure = parse_failure(args.fail_at) if args.fail_at else None
    report = resume_workflow(workload, policy, store, checkpoint_id=target, failure=failure,
                             master_seed=record.master_seed)
    _emit(report, args)
    return _finish(report)


def cmd_verify(args) -> int:
    root = _store_dir(args, required=True)
    store = _open_store(root, create=False)
    require_checkpoint(store)
    program = parse_program(_read_text(args.program or str(root / PROGRAM_FILE)))
    ids = store.list_ids()
    for cid in ids:
        try:
            record = store.get(cid)
            plan_restoration(record, program)
            if record.checkpoint_class != "algorithmic":
                for shot in range(record.shot_cursor.completed):
                    replay_to_boundary(program, record, shot)
                if record.shot_cursor.in_flight is not None:
                    replay_to_boundary(program, record, record.shot_cursor.in_flight)
        except (StoreError, RestorationError, ReplayError) as exc:
            print(f"qcr: verify failed for {cid}: {type(exc).__name__}: {exc}", file=sys.stderr)
            print(json.dumps({"verified": False, "checkpoint_id": cid, "error": type(exc).__name__}))
            return EXIT_VERIFY
        log.info("ok %s", cid)
    print(json.dumps({"verified": True, "records": len(ids)}))
    return EXIT_OK


def cmd_info(args) -> int:
    out: dict = {}
    if args.program:
        text = _read_text(args.program)
        prog = parse_program(text)
        out["program"] = {
            "digest": prog.source_digest, "qubits": prog.num_qubits, "cregs": dict(prog.cregs),
            "ops": len(prog.instructions), "regions": [r.name for r in prog.regions],
            "boundaries": [[b.region, b.op_index] for b in region_boundaries(prog)],
            "checkpointable_ops": sorted(checkpointable_ops(prog)),
        }
    if args.ckpt_dir:
        store = _open_store(Path(args.ckpt_dir), create=False)
        if args.checkpoint:
            out["record"] = record_to_json(store.get(args.checkpoint))
        else:
            latest = store.latest()
            out["store"] = {"root": str(store.root), "records": store.list_ids(), "latest": latest,
                            "lineage": store.lineage(latest) if latest else []}
    if not out:
        raise ConfigError("info needs --program and/or --ckpt-dir")
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_vqe(args) -> int:
    init = [float(x) for x in args.init_params.split(",")] if args.init_params else None
    wl = VqeWorkload(parse_hamiltonian(args.hamiltonian), args.depth, args.learning_rate,
                     args.max_iterations, args.tolerance, init)
    return _execute(wl, args, _store_dir(args, required=False), None)


def cmd_falqon(args) -> int:
    wl = FalqonWorkload(parse_hamiltonian(args.hp), parse_hamiltonian(args.hd), args.dt, args.steps)
    return _execute(wl, args, _store_dir(args, required=False), None)


def cmd_ghz(args) -> int:
    return _execute(GhzWorkload(args.n, args.shots), args, _store_dir(args, required=False), args.shots)


def cmd_reuse(args) -> int:
    wl = ReuseWorkload(args.shots, args.physical_qubits)
    return _execute(wl, args, _store_dir(args, required=False), args.shots)


def cmd_repcode(args) -> int:
    inject = None
    if args.inject:
        try:
            r, q = args.inject.split(":")
            inject = (int(r), int(q))
        except ValueError:
            raise ConfigError(f"--inject expects ROUND:QUBIT, got {args.inject!r}") from None
    return _execute(RepetitionWorkload(args.rounds, inject), args, _store_dir(args, required=False), 1)


COMMANDS = {"run": cmd_run, "resume": cmd_resume, "verify": cmd_verify, "info": cmd_info, "vqe": cmd_vqe,
            "falqon": cmd_falqon, "ghz": cmd_ghz, "reuse": cmd_reuse, "repcode": cmd_repcode}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (NoCheckpointAvailable, NotFound)):
        return EXIT_EMPTY
    if isinstance(exc, StoreError):
        return EXIT_STORAGE
    if isinstance(exc, (RestorationError, ReplayError)):
        return EXIT_MISMATCH
    if isinstance(exc, InjectedFailure):
        return EXIT_INJECTED
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except QcrError as exc:
        print(f"qcr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    raise SystemExit(main())
