from __future__ import annotations

import json
from pathlib import Path

import pytest

from fracflow.kernels import make_kernel

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


@pytest.fixture(scope="session")
def kernel_cache(pytestconfig):
    # persists fractional-heat tables across runs; each costs ~10 s to build
    return str(pytestconfig.cache.mkdir("fracflow-kernels"))


@pytest.fixture(scope="session")
def kernel(kernel_cache):
    def make(family: str, s: float, dim: int = 2):
        return make_kernel(family, s, dim, cache_dir=kernel_cache)

    return make


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary lists them in order."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE[name] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
