"""Weighted Pauli-string operators: parsing, commutators, expectation, evolution."""
from __future__ import annotations

import math
import re
from typing import Iterable, Sequence

from .circuit_ir import Gate
from .errors import BadPauliString, ConfigError
from .sim_backend import statevector as sv

Term = tuple[float, str]

# single-qubit products: (a, b) -> (phase, result)
_PRODUCT = {
    ("X", "Y"): (1j, "Z"), ("Y", "Z"): (1j, "X"), ("Z", "X"): (1j, "Y"),
    ("Y", "X"): (-1j, "Z"), ("Z", "Y"): (-1j, "X"), ("X", "Z"): (-1j, "Y"),
}

_TERM = re.compile(r"\s*([-+])?\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+)\s*\*?\s*)?([IXYZ]+)\s*")


def parse_hamiltonian(text: str) -> list[Term]:
    """Parse ``"1.0*ZZ + 0.5*XI - IX"`` into ``[(1.0, "ZZ"), (0.5, "XI"), (-1.0, "IX")]``."""
    terms: list[Term] = []
    pos = 0
    text = text.strip()
    if not text:
        raise ConfigError("empty Hamiltonian")
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos or (terms and m.group(1) is None):
            raise ConfigError(f"cannot parse Hamiltonian near {text[pos:]!r}")
        coef = float(m.group(2)) if m.group(2) else 1.0
        if m.group(1) == "-":
            coef = -coef
        terms.append((coef, m.group(3)))
        pos = m.end()
    check_terms(terms)
    return terms


def check_terms(terms: Sequence[Term]) -> int:
    """Validate a term list and return its qubit count."""
    if not terms:
        raise ConfigError("Hamiltonian has no terms")
    widths = {len(p) for _, p in terms}
    if len(widths) != 1:
        raise ConfigError("all Pauli strings must have the same length")
    for coef, p in terms:
        if not math.isfinite(coef):
            raise ConfigError(f"non-finite coefficient on {p}")
        if any(c not in "IXYZ" for c in p):
            raise BadPauliString(f"'{p}' is not a Pauli string")
    return widths.pop()


def format_hamiltonian(terms: Iterable[Term]) -> str:
    parts = []
    for coef, p in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef)!r}*{p}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def pauli_product(a: str, b: str) -> tuple[complex, str]:
    phase: complex = 1
    out = []
    for x, y in zip(a, b):
        if x == "I":
            out.append(y)
        elif y == "I":
            out.append(x)
        elif x == y:
            out.append("I")
        else:
            ph, r = _PRODUCT[(x, y)]
            phase *= ph
            out.append(r)
    return phase, "".join(out)


def i_commutator(a: Sequence[Term], b: Sequence[Term]) -> list[Term]:
    """Terms of the Hermitian operator ``i[A, B]``."""
    acc: dict[str, complex] = {}
    for ca, pa in a:
        for cb, pb in b:
            ph_ab, r = pauli_product(pa, pb)
            ph_ba, _ = pauli_product(pb, pa)
            coef = 1j * ca * cb * (ph_ab - ph_ba)
            if coef != 0:
                acc[r] = acc.get(r, 0) + coef
    out = []
    for p in sorted(acc):
        c = acc[p]
        if abs(c.imag) > 1e-12:  # pragma: no cover - i[A,B] is Hermitian for Hermitian A, B
            raise ArithmeticError("commutator produced an anti-Hermitian term")
        if c.real != 0:
            out.append((c.real, p))
    return out


def expectation_value(state: sv.StateVector, terms: Sequence[Term]) -> float:
    return sum(coef * sv.expectation(state, p) for coef, p in terms)


def evolution_gates(pauli: str, angle: float) -> list[Gate]:
    """Gates implementing ``exp(-i * angle * P)`` up to global phase."""
    support = [q for q, c in enumerate(pauli) if c != "I"]
    if not support:
        return []
    pre: list[Gate] = []
    post: list[Gate] = []
    for q in support:
        c = pauli[q]
        if c == "X":
            pre.append(Gate("h", (q,)))
            post.append(Gate("h", (q,)))
        elif c == "Y":
            pre.append(Gate("rx", (q,), (math.pi / 2,)))
            post.append(Gate("rx", (q,), (-math.pi / 2,)))
    ladder = [Gate("cx", (support[i], support[i + 1])) for i in range(len(support) - 1)]
    core = Gate("rz", (support[-1],), (2.0 * angle,))
    return pre + ladder + [core] + ladder[::-1] + post


def apply_gates(state: sv.StateVector, gates: Iterable[Gate]) -> sv.StateVector:
    for g in gates:
        state = sv.apply_gate(state, g.name, g.qubits, g.params)
    return state
