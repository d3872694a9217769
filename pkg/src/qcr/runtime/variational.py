"""Iterative drivers with algorithmic checkpoints: VQE and FALQON.

Neither driver measures mid-circuit; both read exact expectation values off the
statevector. Their checkpoints therefore carry no transcript, only the
iteration counter, parameters and histories needed to start the next
iteration.
"""
from __future__ import annotations

import math
import time

from ..circuit_ir import Gate
from ..errors import ConfigError, SpecOutOfRange
from ..paulis import Term, apply_gates, check_terms, evolution_gates, expectation_value, i_commutator
from ..restoration import RuntimeState
from ..sim_backend import statevector as sv
from ..sim_backend.rng import RngStream, mix64
from .manager import CheckpointManager
from .policy import BackendUnavailable, FailureSpec, KillAtIteration
from .workloads import Workload, pragma_line

SHIFT = math.pi / 2


class IterativeWorkload(Workload):
    max_iterations: int

    def check_failure(self, failure: FailureSpec) -> None:
        if isinstance(failure, KillAtIteration):
            if not 1 <= failure.iteration <= self.max_iterations:
                raise SpecOutOfRange(f"iteration {failure.iteration} outside 1..{self.max_iterations}")
        elif isinstance(failure, BackendUnavailable):
            if not 1 <= failure.first <= self.max_iterations:
                raise SpecOutOfRange(f"outage start {failure.first} outside 1..{self.max_iterations}")
        else:
            raise SpecOutOfRange(f"{type(failure).__name__} does not apply to iterative workloads")

    def _iteration_start(self, mgr: CheckpointManager, it: int) -> None:
        mgr.reach(("iter_start", it), due=False, checkpointable=False, build=dict)

    def _iteration_end(self, mgr: CheckpointManager, it: int, params: list[float],
                       history: dict[str, list[float]], delta: float | None) -> None:
        pol = mgr.policy
        due = pol.iteration or (pol.convergence is not None and delta is not None
                                and abs(delta) < pol.convergence)

        def build() -> dict:
            return {"checkpoint_class": "algorithmic", "iteration": it, "parameters": list(params),
                    "history": {k: list(v) for k, v in history.items()}}
        mgr.reach(("iter", it), due=due, checkpointable=True, build=build)


# -- VQE -------------------------------------------------------------------------

def ansatz_gates(n: int, depth: int, params: list[float]) -> list[Gate]:
    """``depth`` layers of (ry on every qubit, cx chain), then a final ry layer."""
    gates: list[Gate] = []
    it = iter(params)
    for _ in range(depth):
        gates += [Gate("ry", (q,), (next(it),)) for q in range(n)]
        gates += [Gate("cx", (q, q + 1)) for q in range(n - 1)]
    gates += [Gate("ry", (q,), (next(it),)) for q in range(n)]
    return gates


class VqeWorkload(IterativeWorkload):
    """Plain gradient descent on a hardware-efficient ansatz with parameter-shift gradients."""

    kind = "vqe"

    def __init__(self, hamiltonian: list[Term], depth: int = 1, learning_rate: float = 0.2,
                 max_iterations: int = 200, tolerance: float = 1e-6,
                 initial_parameters: list[float] | None = None, source: str | None = None):
        self.hamiltonian = [(float(c), p) for c, p in hamiltonian]
        self.n = check_terms(self.hamiltonian)
        if not 1 <= self.n <= 4:
            raise ConfigError(f"VQE supports Hamiltonians on 1..4 qubits, got {self.n}")
        if depth < 0 or max_iterations < 1 or not learning_rate > 0 or not tolerance > 0:
            raise ConfigError("VQE needs depth >= 0, max_iterations >= 1, learning_rate > 0, tolerance > 0")
        self.depth = depth
        self.learning_rate = float(learning_rate)
        self.max_iterations = max_iterations
        self.tolerance = float(tolerance)
        self.num_parameters = (depth + 1) * self.n
        if initial_parameters is not None and len(initial_parameters) != self.num_parameters:
            raise ConfigError(f"expected {self.num_parameters} initial parameters")
        self.initial_parameters = None if initial_parameters is None else [float(x) for x in initial_parameters]
        super().__init__(source if source is not None else self._source())

    def config(self) -> dict:
        return {"hamiltonian": [[c, p] for c, p in self.hamiltonian], "depth": self.depth,
                "learning_rate": self.learning_rate, "max_iterations": self.max_iterations,
                "tolerance": self.tolerance, "initial_parameters": self.initial_parameters}

    def _source(self) -> str:
        lines = [pragma_line(self.kind, self.config()), f"qubits {self.n}", "region ansatz"]
        for g in ansatz_gates(self.n, self.depth, [0.0] * self.num_parameters):
            lines.append(f"{g.name}(0.0) {g.qubits[0]}" if g.params else f"{g.name} {g.qubits[0]} {g.qubits[1]}")
        return "\n".join(lines) + "\n"

    def energy(self, params: list[float]) -> float:
        state = apply_gates(sv.init_state(self.n), ansatz_gates(self.n, self.depth, params))
        return expectation_value(state, self.hamiltonian)

    def gradient(self, params: list[float]) -> list[float]:
        grad = []
        for i in range(len(params)):
            plus, minus = list(params), list(params)
            plus[i] += SHIFT
            minus[i] -= SHIFT
            grad.append((self.energy(plus) - self.energy(minus)) / 2.0)
        return grad

    def seeded_parameters(self, master_seed: int) -> list[float]:
        rng = RngStream(mix64(master_seed))
        return [2.0 * math.pi * rng.next_unit() - math.pi for _ in range(self.num_parameters)]

    def run(self, mgr: CheckpointManager, state: RuntimeState | None) -> dict:
        if state is None:
            it = 0
            params = self.initial_parameters or self.seeded_parameters(mgr.master_seed)
            hist: dict[str, list[float]] = {"energy": [], "grad_norm": [], "trajectory": []}
        else:
            it = state.iteration
            params = list(state.parameters)
            hist = {k: list(state.history.get(k, [])) for k in ("energy", "grad_norm", "trajectory")}

        def finished() -> bool:
            return it >= self.max_iterations or bool(hist["grad_norm"] and hist["grad_norm"][-1] < self.tolerance)

        while not finished():
            it += 1
            self._iteration_start(mgr, it)
            energy = self.energy(params)
            grad = self.gradient(params)
            mgr.count("iterations_executed")
            norm = math.sqrt(sum(g * g for g in grad))
            hist["energy"].append(energy)
            hist["grad_norm"].append(norm)
            hist["trajectory"].extend(params)
            if norm >= self.tolerance:
                params = [p - self.learning_rate * g for p, g in zip(params, grad)]
            delta = energy - hist["energy"][-2] if len(hist["energy"]) > 1 else None
            self._iteration_end(mgr, it, params, hist, delta)

        k = self.num_parameters
        traj = hist["trajectory"]
        return {
            "iterations": it,
            "energies": hist["energy"],
            "grad_norms": hist["grad_norm"],
            "final_energy": hist["energy"][-1] if hist["energy"] else None,
            "parameters": params,
            "trajectory": [traj[i:i + k] for i in range(0, len(traj), k)],
            "converged": bool(hist["grad_norm"] and hist["grad_norm"][-1] < self.tolerance),
        }


# -- FALQON ------------------------------------------------------------------------

class FalqonWorkload(IterativeWorkload):
    """Layer k applies exp(-i Hp dt) then exp(-i beta_k Hd dt); beta_{k+1} = -<i[Hd, Hp]>.

    Starts from |+>^n with beta_1 = 0, so layer 1 is pure problem evolution.
    """

    kind = "falqon"

    def __init__(self, hp: list[Term], hd: list[Term], dt: float = 0.01, steps: int = 50,
                 source: str | None = None):
        self.hp = [(float(c), p) for c, p in hp]
        self.hd = [(float(c), p) for c, p in hd]
        n = check_terms(self.hp)
        if check_terms(self.hd) != n:
            raise ConfigError("Hp and Hd must act on the same number of qubits")
        if not 1 <= n <= 3:
            raise ConfigError(f"FALQON supports 1..3 qubits, got {n}")
        if not (dt > 0 and math.isfinite(dt)):
            raise ConfigError(f"dt must be positive, got {dt}")
        if steps < 1:
            raise ConfigError(f"steps must be >= 1, got {steps}")
        self.n = n
        self.dt = float(dt)
        self.steps = self.max_iterations = steps
        self.commutator = i_commutator(self.hd, self.hp)
        super().__init__(source if source is not None else self._source())

    def config(self) -> dict:
        return {"hp": [[c, p] for c, p in self.hp], "hd": [[c, p] for c, p in self.hd],
                "dt": self.dt, "steps": self.steps}

    def _source(self) -> str:
        lines = [pragma_line(self.kind, self.config()), f"qubits {self.n}", "region init"]
        lines += [f"h {q}" for q in range(self.n)]
        lines.append("region layers")
        return "\n".join(lines) + "\n"

    def initial_state(self) -> sv.StateVector:
        return apply_gates(sv.init_state(self.n), [Gate("h", (q,)) for q in range(self.n)])

    def layer(self, state: sv.StateVector, beta: float) -> sv.StateVector:
        gates: list[Gate] = []
        for w, p in self.hp:
            gates += evolution_gates(p, w * self.dt)
        for w, p in self.hd:
            gates += evolution_gates(p, beta * w * self.dt)
        return apply_gates(state, gates)

    def run(self, mgr: CheckpointManager, state: RuntimeState | None) -> dict:
        psi = self.initial_state()
        if state is None:
            k = 0
            betas = [0.0]
            hist: dict[str, list[float]] = {"feedback": [], "energy": []}
        else:
            k = state.iteration
            betas = list(state.parameters)
            hist = {key: list(state.history.get(key, [])) for key in ("feedback", "energy")}
            # re-instantiate the adaptive ansatz from stored betas; nothing is re-measured
            t0 = time.perf_counter()
            for beta in betas[:k]:
                psi = self.layer(psi, beta)
            mgr.report.timing["restore_ms"].append((time.perf_counter() - t0) * 1e3)
            mgr.count("layers_reinstantiated", k)

        while k < self.steps:
            k += 1
            self._iteration_start(mgr, k)
            psi = self.layer(psi, betas[k - 1])
            feedback = expectation_value(psi, self.commutator)
            energy = expectation_value(psi, self.hp)
            mgr.count("iterations_executed")
            betas.append(-feedback)
            hist["feedback"].append(feedback)
            hist["energy"].append(energy)
            delta = energy - hist["energy"][-2] if len(hist["energy"]) > 1 else None
            self._iteration_end(mgr, k, betas, hist, delta)

        return {"layers": k, "betas": betas, "feedback": hist["feedback"], "energies": hist["energy"],
                "final_energy": hist["energy"][-1] if hist["energy"] else None}
