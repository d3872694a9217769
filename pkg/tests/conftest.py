from __future__ import annotations

import os
import shutil
import tempfile
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from qcr.checkpoint_store import Store

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


def _fast_base() -> str | None:
    # stores do an fsync'd rename per checkpoint; tmpfs keeps sweeps fast
    shm = "/dev/shm"
    return shm if os.path.isdir(shm) and os.access(shm, os.W_OK) else None


@pytest.fixture
def store_root(tmp_path):
    base = _fast_base()
    if base is None:
        yield tmp_path / "store"
        return
    root = Path(tempfile.mkdtemp(prefix="qcr-test-", dir=base))
    try:
        yield root
    finally:
        shutil.rmtree(root, ignore_errors=True)


@pytest.fixture
def new_store():
    """Factory for fresh stores on the fast filesystem."""
    base = _fast_base()
    made: list[str] = []

    def make() -> Store:
        d = tempfile.mkdtemp(prefix="qcr-test-", dir=base)
        made.append(d)
        return Store(d)

    yield make
    for d in made:
        shutil.rmtree(d, ignore_errors=True)


@pytest.fixture
def store(new_store):
    return new_store()
