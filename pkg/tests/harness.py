"""Kill-and-resume harness shared by the runtime and acceptance tests."""
from __future__ import annotations

from typing import Callable

from qcr.checkpoint_store import Store
from qcr.runtime import FailureSpec, Policy, RunReport, Workload, kill_points, resume_workflow, run_workflow


def kill_and_resume(make: Callable[[], Workload], policy: Policy, store: Store, failure: FailureSpec,
                    seed: int) -> tuple[RunReport, RunReport]:
    killed = run_workflow(make(), policy, store, failure, seed)
    resumed = resume_workflow(make(), policy, store, master_seed=seed)
    return killed, resumed


def sweep(make: Callable[[], Workload], policy: Policy, new_store: Callable[[], Store], seed: int,
          points: list[FailureSpec] | None = None) -> list[tuple[FailureSpec, str]]:
    """Return (kill point, problem) pairs where killed+resumed output differs from the clean run."""
    clean = run_workflow(make(), policy, new_store(), None, seed)
    problems = []
    for point in points if points is not None else kill_points(make()):
        killed, resumed = kill_and_resume(make, policy, new_store(), point, seed)
        if killed.status != "failed":
            problems.append((point, "failure never fired"))
        elif resumed.status != "completed":
            problems.append((point, f"resume ended {resumed.status}"))
        elif resumed.outputs != clean.outputs:
            problems.append((point, "outputs differ"))
        elif resumed.counts["shots_replayed"] > 1:
            problems.append((point, f"replayed {resumed.counts['shots_replayed']} shots"))
    return problems
