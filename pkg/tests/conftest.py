import numpy as np
import pytest

from symdetect.fingerprint import Dataset, DeviceFingerprint
from symdetect.simulator import SimConfig, simulate


def make_dataset(n_dev=2, P=4, R=5, C=6, seed=0):
    rng = np.random.default_rng(seed)
    devices = [
        DeviceFingerprint.from_stack(f"d{i}", 400 + rng.standard_normal((P, R, C)), "fresh")
        for i in range(n_dev)
    ]
    return Dataset(tuple(devices), R, C, P, "test")


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def small_sim():
    return simulate(SimConfig(rows=8, cols=10, paths=4, n_fresh=3, n_aged=2, seed=5))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    RESULTS = getattr(mod, "RESULTS", None)
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")
