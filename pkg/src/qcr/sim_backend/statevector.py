"""Dense statevector kernels.

Qubit 0 is the most significant bit of the basis index, so ``|q0 q1 ...>``
reads left to right. Every kernel returns a new StateVector; inputs are never
mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..errors import (
    BadPauliString,
    DuplicateQubit,
    QubitCountOutOfRange,
    QubitOutOfRange,
    UnknownGate,
    ZeroProbabilityOutcome,
)

MAX_QUBITS = 22
ZERO_PROBABILITY = 1e-12

_S2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    "h": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "t": np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
    "cx": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
}


def _rotation(name: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if name == "rx":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if name == "ry":
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[complex(c, -s), 0], [0, complex(c, s)]], dtype=complex)


def gate_matrix(name: str, params: Sequence[float] = ()) -> np.ndarray:
    if name in _FIXED:
        if params:
            raise UnknownGate(f"gate '{name}' takes no parameters")
        return _FIXED[name]
    if name in ("rx", "ry", "rz"):
        if len(params) != 1:
            raise UnknownGate(f"gate '{name}' takes exactly one angle")
        return _rotation(name, float(params[0]))
    raise UnknownGate(f"unknown gate '{name}'")


class UnitSource(Protocol):
    def next_unit(self) -> float: ...


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def norm_error(self) -> float:
        return abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0)

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits})"


def init_state(n: int) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise QubitCountOutOfRange(f"qubit count {n} outside 1..{MAX_QUBITS}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


def _check_qubits(state: StateVector, qubits: Sequence[int]) -> None:
    for q in qubits:
        if not 0 <= q < state.num_qubits:
            raise QubitOutOfRange(f"qubit {q} out of range for {state.num_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise DuplicateQubit(f"qubits {list(qubits)} repeat an index")


def apply_matrix(state: StateVector, matrix: np.ndarray, qubits: Sequence[int]) -> StateVector:
    k = len(qubits)
    n = state.num_qubits
    psi = state.amplitudes.reshape((2,) * n)
    u = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(u, psi, axes=(list(range(k, 2 * k)), list(qubits)))
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return StateVector(n, np.ascontiguousarray(out).reshape(-1))


def apply_gate(state: StateVector, name: str, qubits: Sequence[int],
               params: Sequence[float] = ()) -> StateVector:
    matrix = gate_matrix(name, params)
    arity = int(round(math.log2(matrix.shape[0])))
    if len(qubits) != arity:
        raise UnknownGate(f"gate '{name}' acts on {arity} qubit(s), got {len(qubits)}")
    _check_qubits(state, qubits)
    return apply_matrix(state, matrix, qubits)


def _split(state: StateVector, qubit: int) -> np.ndarray:
    n = state.num_qubits
    return state.amplitudes.reshape(1 << qubit, 2, 1 << (n - qubit - 1))


def prob_zero(state: StateVector, qubit: int) -> float:
    """Probability of reading 0, snapped to exactly 0 or 1 within 1e-12."""
    _check_qubits(state, [qubit])
    a = _split(state, qubit)[:, 0, :]
    p0 = float(np.vdot(a, a).real)
    if p0 < ZERO_PROBABILITY:
        return 0.0
    if p0 > 1.0 - ZERO_PROBABILITY:
        return 1.0
    return p0


def _project(state: StateVector, qubit: int, outcome: int, prob: float) -> StateVector:
    src = _split(state, qubit)
    out = np.zeros_like(src)
    out[:, outcome, :] = src[:, outcome, :] / math.sqrt(prob)
    return StateVector(state.num_qubits, out.reshape(-1))


def measure(state: StateVector, qubit: int, rng: UnitSource) -> tuple[int, StateVector]:
    p0 = prob_zero(state, qubit)
    u = rng.next_unit()
    outcome = 0 if u < p0 else 1
    # renormalize against the raw branch weight, not the snapped probability
    branch = _split(state, qubit)[:, outcome, :]
    return outcome, _project(state, qubit, outcome, float(np.vdot(branch, branch).real))


def force_measure(state: StateVector, qubit: int, outcome: int, rng: UnitSource) -> StateVector:
    """Project onto a recorded outcome; consumes one draw exactly like ``measure``."""
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome}")
    p0 = prob_zero(state, qubit)
    rng.next_unit()
    prob = p0 if outcome == 0 else 1.0 - p0
    if prob < ZERO_PROBABILITY:
        raise ZeroProbabilityOutcome(
            f"recorded outcome {outcome} on qubit {qubit} has probability {prob:.3g}")
    branch = _split(state, qubit)[:, outcome, :]
    return _project(state, qubit, outcome, float(np.vdot(branch, branch).real))


def reset(state: StateVector, qubit: int, rng: UnitSource) -> tuple[int, StateVector]:
    bit, post = measure(state, qubit, rng)
    if bit:
        post = apply_matrix(post, _FIXED["x"], [qubit])
    return bit, post


def force_reset(state: StateVector, qubit: int, bit: int, rng: UnitSource) -> StateVector:
    post = force_measure(state, qubit, bit, rng)
    if bit:
        post = apply_matrix(post, _FIXED["x"], [qubit])
    return post


def apply_pauli(state: StateVector, pauli: str) -> StateVector:
    if len(pauli) != state.num_qubits or any(c not in "IXYZ" for c in pauli):
        raise BadPauliString(f"'{pauli}' is not a Pauli string on {state.num_qubits} qubits")
    out = state
    for q, c in enumerate(pauli):
        if c != "I":
            out = apply_matrix(out, _FIXED[c.lower()], [q])
    return out


def expectation(state: StateVector, pauli: str) -> float:
    value = np.vdot(state.amplitudes, apply_pauli(state, pauli).amplitudes)
    return min(1.0, max(-1.0, float(value.real)))
