from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from qcr.errors import ConfigError
from qcr.runtime import (BackendUnavailable, KillAtIteration, KillAtOp, KillAtShot, Policy, on_failure,
                         parse_failure)


def test_parse_policy():
    p = Policy.parse("iter, region,shots:5,conv:1e-3,event")
    assert (p.iteration, p.region, p.every_k_shots, p.convergence, p.on_event) == (True, True, 5, 1e-3, True)
    assert Policy.parse(p.spec) == p


@pytest.mark.parametrize("spec", ["", "shots:0", "shots:x", "conv:-1", "conv:nan", "bogus", "iter:3"])
def test_bad_policies(spec):
    with pytest.raises(ConfigError):
        Policy.parse(spec)


def test_bad_policy_fields():
    with pytest.raises(ConfigError):
        Policy(iteration=True, on_failure="panic")
    with pytest.raises(ConfigError):
        Policy(iteration=True, checkpoint_class_default="quantum")


@pytest.mark.parametrize("spec, expected", [
    ("op:1:4", KillAtOp(1, 4, 0)), ("op:0:0@7", KillAtOp(0, 0, 7)), ("shot:37", KillAtShot(37)),
    ("iter:5", KillAtIteration(5)), ("backend:3-6", BackendUnavailable(3, 6)), ("backend:2", BackendUnavailable(2, 2)),
])
def test_parse_failure(spec, expected):
    assert parse_failure(spec) == expected
    assert parse_failure(expected.spec) == expected


@pytest.mark.parametrize("spec", ["op:1", "shot:", "iter:x", "backend:5-2", "meteor:1"])
def test_bad_failures(spec):
    with pytest.raises(ConfigError):
        parse_failure(spec)


def test_failure_matching():
    assert KillAtOp(1, 4, 2).matches(("op", 1, 4, 2))
    assert not KillAtOp(1, 4, 2).matches(("op", 1, 4, 0))
    assert KillAtShot(3).matches(("shot", 3))
    assert KillAtIteration(2).matches(("iter", 2)) and not KillAtIteration(2).matches(("iter_start", 2))
    assert BackendUnavailable(4, 6).matches(("iter_start", 4)) and BackendUnavailable(4, 6).matches(("shot", 4))


ID = "c" * 64


def test_on_failure_mapping():
    rb = Policy(iteration=True)
    assert on_failure({}, rb, ID).kind == "rollback" and on_failure({}, rb, ID).checkpoint_id == ID
    fb = on_failure({}, rb, None)
    assert fb.kind == "restart" and fb.fallback
    rs = on_failure({}, Policy(iteration=True, on_failure="restart"), ID)
    assert rs.kind == "restart" and not rs.fallback and rs.checkpoint_id is None
    sch = on_failure({"kind": "BackendUnavailable"}, Policy(iteration=True, on_failure="reschedule"), ID)
    assert sch.kind == "reschedule"
    assert sch.calibration_update == {"backend_tag": f"sim-reschedule-{ID[:12]}-BackendUnavailable"}


@given(st.sampled_from(["rollback", "restart", "reschedule"]), st.one_of(st.none(), st.just(ID)),
       st.dictionaries(st.sampled_from(["kind", "position"]), st.text(max_size=5)))
def test_on_failure_is_pure(kind, latest, event):
    pol = Policy(iteration=True, on_failure=kind)
    assert on_failure(event, pol, latest) == on_failure(dict(event), pol, latest)
