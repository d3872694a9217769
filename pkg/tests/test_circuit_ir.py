from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from qcr.circuit_ir import (CheckpointMarker, Gate, Guarded, Measure, RegionStart, Reset, checkpointable_ops,
                            format_program, parse_program, program_digest, region_boundaries, validate)
from qcr.errors import EmptyProgram, ParseError, ProgramSyntaxError, SemanticError

BELL = """qubits 2
creg m 1
region prep
h 0
cx 0 1
measure 0 -> m[0]
ckpt classicalized
region fix
if m[0] == 1: x 1
"""


def test_bell_structure():
    p = parse_program(BELL)
    assert p.num_qubits == 2
    assert p.cregs == (("m", 1),)
    assert p.instructions == (
        RegionStart("prep"), Gate("h", (0,)), Gate("cx", (0, 1)), Measure(0, "m", 0),
        CheckpointMarker("classicalized"), RegionStart("fix"), Guarded("m", 0, 1, Gate("x", (1,))),
    )
    assert [(r.name, r.start_op, r.end_op) for r in p.regions] == [("prep", 0, 5), ("fix", 5, 7)]
    assert checkpointable_ops(p) == {0, 4, 5}
    assert [b.op_index for b in region_boundaries(p)] == [0, 4, 5]
    assert validate(p) == []


def test_digest_is_sha256_of_bytes():
    import hashlib
    assert parse_program(BELL).source_digest == hashlib.sha256(BELL.encode()).hexdigest()
    assert program_digest(BELL.encode()) == program_digest(BELL)


def test_comment_changes_digest_not_structure():
    a = parse_program(BELL)
    b = parse_program(BELL.replace("h 0", "h 0  # superpose"))
    assert a == b
    assert a.source_digest != b.source_digest


def test_crlf_accepted():
    assert parse_program(BELL.replace("\n", "\r\n")) == parse_program(BELL)


def test_implicit_region():
    p = parse_program("qubits 1\nh 0\nregion b\nx 0\n")
    assert [(r.name, r.start_op) for r in p.regions] == [("main", 0), ("b", 1)]
    assert 0 in checkpointable_ops(p)


def test_angles():
    p = parse_program("qubits 1\nrx(pi/2) 0\nry(-2*pi/4) 0\nrz(1.5e-1) 0\n")
    assert [op.params[0] for op in p.instructions] == pytest.approx([math.pi / 2, -math.pi / 2, 0.15])


def test_reset_and_guarded_measure():
    p = parse_program("qubits 2\ncreg c 2\nmeasure 0 -> c[0]\nif c[0] == 1: measure 1 -> c[1]\nckpt\nreset 0\n")
    assert isinstance(p.instructions[1], Guarded) and isinstance(p.instructions[1].inner, Measure)
    assert isinstance(p.instructions[3], Reset)


@pytest.mark.parametrize("src, exc, line", [
    ("", EmptyProgram, None),
    ("# only a comment\n", EmptyProgram, None),
    ("h 0\n", EmptyProgram, 1),
    ("qubits x\n", ProgramSyntaxError, 1),
    ("qubits 0\n", SemanticError, 1),
    ("qubits 1\nfoo 0\n", SemanticError, 2),
    ("qubits 1\nh 1\n", SemanticError, 2),
    ("qubits 2\ncx 0 0\n", SemanticError, 2),
    ("qubits 1\nrx 0\n", SemanticError, 2),
    ("qubits 1\nh(0.3) 0\n", SemanticError, 2),
    ("qubits 1\nmeasure 0 -> c[0]\n", SemanticError, 2),
    ("qubits 1\ncreg c 1\nmeasure 0 -> c[1]\n", SemanticError, 3),
    ("qubits 1\ncreg c 1\nif c[0] == 1: if c[0] == 1: x 0\n", SemanticError, 3),
    ("qubits 1\ncreg c 1\nif c[0] == 2: x 0\n", SemanticError, 3),
    ("qubits 1\nh 0\nckpt\nx 0\n", SemanticError, 3),
    ("qubits 1\nckpt bogus\n", SemanticError, 2),
    ("qubits 1\ncreg c 1\ncreg c 2\n", SemanticError, 3),
    ("qubits 1\nh 0\ncreg c 1\n", ProgramSyntaxError, 3),
    ("qubits 1\nqubits 2\n", ProgramSyntaxError, 2),
    ("qubits 1\nmeasure 0 c[0]\n", ProgramSyntaxError, 2),
])
def test_malformed(src, exc, line):
    with pytest.raises(exc) as info:
        parse_program(src)
    assert info.value.line == line


def test_marker_placement_rules():
    ok = ["qubits 1\nckpt\nh 0\n", "qubits 1\nh 0\nckpt\n", "qubits 1\nregion a\nckpt\nh 0\n",
          "qubits 1\ncreg c 1\nh 0\nmeasure 0 -> c[0]\nckpt\nh 0\n", "qubits 1\nh 0\nckpt\nregion b\nh 0\n"]
    for src in ok:
        parse_program(src)


def test_format_roundtrip():
    p = parse_program(BELL)
    assert parse_program(format_program(p)) == p


ops_strategy = st.lists(st.sampled_from([
    "h 0", "x 1", "cx 0 1", "cz 1 0", "rx(0.25) 0", "ry(pi/3) 1", "measure 0 -> c[0]", "measure 1 -> c[1]",
    "reset 1", "if c[0] == 1: x 1", "if c[1] == 0: measure 0 -> c[0]", "region", "s 0", "t 1", "y 0", "z 1",
]), max_size=25)


@given(ops_strategy)
def test_format_parse_roundtrip_property(lines):
    # region names must be unique; number them
    lines = [f"region r{i}" if line == "region" else line for i, line in enumerate(lines)]
    src = "qubits 2\ncreg c 2\n" + "\n".join(lines) + "\n"
    p = parse_program(src)
    assert parse_program(format_program(p)) == p


@given(st.one_of(st.text(max_size=200), st.binary(max_size=200)))
def test_parse_is_total(data):
    # every input either parses or raises a ParseError, nothing else
    try:
        parse_program(data)
    except ParseError:
        pass


@given(st.lists(st.sampled_from(["qubits 2", "creg c 1", "h 0", "cx 0 1", "measure 1 -> c[0]", "ckpt",
                                  "region a", "if c[0] == 1: x 0", "reset 0", "h 5", "cx 1", "#c", ""]),
                max_size=15))
def test_parse_total_on_near_valid(lines):
    try:
        p = parse_program("\n".join(lines))
    except ParseError:
        return
    assert validate(p) == []
