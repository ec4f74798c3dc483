import sys
from pathlib import Path

import numpy as np
import pytest

from stmn import _backend, data

sys.path.insert(0, str(Path(__file__).parent))

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS, ids=[m.NAME for m in BACKENDS])
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_clips():
    """A 3-class clip set large enough for balanced batches of 12."""
    seqs = data.gen_synthetic_manifold(3, 4, 24, 3, 0.1, seed=7)
    return data.make_clips(seqs, clip_len=8, overlap=4)


# Acceptance-criterion verdicts collected by tests/test_acceptance.py and
# printed once at the end of the session.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
