from __future__ import annotations

import json
import os
import threading
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from conftest import FIXTURES
from oracles import sha256_oracle
from qcr.checkpoint_store import (CheckpointRecord, DecoderState, ShotCursor, Store, canonical_json,
                                  canonical_serialize, compute_id, deserialize, finalize, id_preimage)
from qcr.errors import (DigestMismatch, NotFound, ParentMissing, SchemaError, StorageIO,
                        VersionUnsupported)
from qcr.sim_backend.shots import MeasurementEvent

# frozen when the fixtures were generated; see docs/format.md
GOLDEN_ID = "c1005c8aed9fb42690de5c01a3c08a23e476325eb5454fe06fee8ece9d193e90"
MINIMAL_ID = "862fcef4a252f14b85592d1e277f1f53080ee0e66eebc26e37a40852a504d444"
DIGEST = "07c8b775f7734ec8d8f73cabfb1283ebc637d7e2a1ee571481aabdec38059e29"


def make(**kw) -> CheckpointRecord:
    base = dict(checkpoint_class="classicalized", program_digest=DIGEST, created_at="2026-01-01T00:00:00Z")
    base.update(kw)
    return CheckpointRecord(**base)


def test_minimal_id_matches_independent_sha256():
    pre = (FIXTURES / "minimal.preimage").read_bytes()
    assert sha256_oracle(pre) == MINIMAL_ID
    rec = make(program_digest="0" * 64)
    assert id_preimage(rec) == pre
    assert compute_id(rec) == MINIMAL_ID
    assert deserialize((FIXTURES / "minimal.ckpt.json").read_bytes()).checkpoint_id == MINIMAL_ID


def test_golden_roundtrip_is_byte_identical():
    data = (FIXTURES / "golden.ckpt.json").read_bytes()
    rec = deserialize(data)
    assert rec.checkpoint_id == GOLDEN_ID == sha256_oracle(id_preimage(rec))
    assert canonical_serialize(rec) == data
    assert rec.master_seed == 2 ** 64 - 1
    assert rec.decoder_state == DecoderState("IXI", ((1, 1), (0, 0)))


def test_canonical_json_rules():
    assert canonical_json({"b": 1, "a": [1.5, "é"]}) == '{"a":[1.5,"é"],"b":1}'.encode()
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_created_at_excluded_from_id():
    a = finalize(make(created_at="2026-01-01T00:00:00Z"))
    b = finalize(make(created_at="2027-06-01T12:00:00Z"))
    assert a.checkpoint_id == b.checkpoint_id
    assert canonical_serialize(a) != canonical_serialize(b)


def test_equal_records_equal_bytes():
    assert canonical_serialize(make(iteration=2)) == canonical_serialize(make(iteration=2))


def test_version_and_schema_errors():
    rec = finalize(make())
    d = json.loads(canonical_serialize(rec))
    d.pop("file_digest")
    d["version"] = 2

    def seal(obj):
        from qcr.checkpoint_store import _sha256
        obj = dict(obj)
        obj["file_digest"] = _sha256(canonical_json(obj))
        return canonical_json(obj)

    with pytest.raises(VersionUnsupported):
        deserialize(seal(d))
    d["version"] = 1
    d["class"] = "quantum"
    with pytest.raises(SchemaError):
        deserialize(seal(d))
    d["class"] = "classicalized"
    d["parameters"] = [1.0]  # schema-valid but id no longer matches
    with pytest.raises(DigestMismatch):
        deserialize(seal(d))


@pytest.mark.parametrize("kw", [
    dict(checkpoint_class="logical"),
    dict(decoder_state=DecoderState("III")),
    dict(program_digest="xyz"),
    dict(shot_cursor=ShotCursor(3, 2)),
    dict(shot_cursor=ShotCursor(1, 4, 3)),
    dict(master_seed=-1),
    dict(registers={"c": [2]}),
    dict(parameters=[float("inf")]),
    dict(calibration_metadata={"k": 1}),
])
def test_invalid_records_rejected(kw):
    with pytest.raises(SchemaError):
        finalize(make(**kw))


def test_every_single_byte_mutation_is_detected():
    data = (FIXTURES / "golden.ckpt.json").read_bytes()
    for i in range(len(data)):
        for delta in (1, 0x20, 0x80):
            bad = bytearray(data)
            bad[i] ^= delta
            with pytest.raises(DigestMismatch):
                deserialize(bytes(bad))


events = st.builds(MeasurementEvent, st.integers(0, 50), st.integers(0, 500), st.integers(0, 21),
                   st.integers(0, 1), st.booleans())
finite = st.floats(allow_nan=False, allow_infinity=False)
records = st.builds(
    make,
    checkpoint_class=st.sampled_from(["classicalized", "algorithmic"]),
    position=st.tuples(st.integers(0, 20), st.integers(0, 400)),
    master_seed=st.integers(0, 2 ** 64 - 1),
    registers=st.dictionaries(st.text("abc", min_size=1, max_size=3), st.lists(st.integers(0, 1), max_size=4)),
    transcript=st.lists(events, max_size=10),
    iteration=st.integers(0, 10 ** 6),
    parameters=st.lists(finite, max_size=6),
    history=st.dictionaries(st.sampled_from(["energy", "beta"]), st.lists(finite, max_size=5)),
    calibration_metadata=st.dictionaries(st.text(max_size=5), st.text(max_size=8), max_size=3),
)


@given(records)
def test_roundtrip_property(rec):
    rec = finalize(rec)
    back = deserialize(canonical_serialize(rec))
    assert back == rec
    assert back.checkpoint_id == compute_id(back)


@given(records, st.data())
def test_bit_flip_in_content_changes_id(rec, data):
    rec = finalize(rec)
    field = data.draw(st.sampled_from(["iteration", "master_seed", "position", "parameters"]))
    if field == "iteration":
        other = replace(rec, iteration=rec.iteration ^ 1)
    elif field == "master_seed":
        other = replace(rec, master_seed=rec.master_seed ^ (1 << data.draw(st.integers(0, 63))))
    elif field == "position":
        other = replace(rec, position=(rec.position[0], rec.position[1] ^ 1))
    else:
        other = replace(rec, parameters=rec.parameters + [0.0])
    assert compute_id(other) != rec.checkpoint_id


# -- store -----------------------------------------------------------------------------

def test_put_get_latest_lineage(store):
    assert store.latest() is None
    with pytest.raises(NotFound):
        store.get("0" * 64)
    a = store.put(make(iteration=1))
    b = store.put(make(iteration=2, parent_id=a))
    c = store.put(make(iteration=3, parent_id=b))
    assert store.latest() == c
    assert store.lineage(c) == [a, b, c]
    assert store.get(b).iteration == 2
    assert sorted(store.list_ids()) == sorted([a, b, c])
    assert (store.root / f"{a}.ckpt.json").exists()
    assert (store.root / "LATEST").read_text() == c


def test_parent_rules(store, new_store):
    with pytest.raises(ParentMissing):
        store.put(make(parent_id="a" * 64))
    a = store.put(make())
    with pytest.raises(ParentMissing):
        store.put(make(program_digest="f" * 64, parent_id=a))


def test_get_rejects_bad_ids(store):
    with pytest.raises(NotFound):
        store.get("../../etc/passwd")


def test_renamed_file_detected(store):
    a = store.put(make(iteration=1))
    b = store.put(make(iteration=2))
    os.replace(store.path_for(b), store.path_for(a))
    with pytest.raises(DigestMismatch):
        store.get(a)


def test_interrupted_put_leaves_store_unchanged(store, monkeypatch):
    a = store.put(make(iteration=1))
    before = sorted(p.name for p in store.root.iterdir())
    real_replace = os.replace

    def crash(src, dst):
        raise KeyboardInterrupt("killed before rename")

    monkeypatch.setattr(os, "replace", crash)
    with pytest.raises(KeyboardInterrupt):
        store.put(make(iteration=2, parent_id=a))
    monkeypatch.setattr(os, "replace", real_replace)
    assert sorted(p.name for p in store.root.iterdir()) == before
    assert store.latest() == a


def test_write_failure_is_storage_io(store, monkeypatch):
    def boom(*a, **k):
        raise OSError(28, "No space left on device")
    monkeypatch.setattr(os, "fsync", boom)
    with pytest.raises(StorageIO):
        store.put(make())


def test_store_root_must_be_a_directory(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(StorageIO):
        Store(f)


def test_concurrent_writers_serialize(store):
    ids, errors = [], []

    def work(k):
        try:
            ids.append(store.put(make(iteration=k)))
        except Exception as exc:  # pragma: no cover - would fail the test
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert store.latest() in ids
    assert not [p for p in store.root.iterdir() if p.name.startswith(".tmp-")]
