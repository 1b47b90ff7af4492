import numpy as np
import pytest

from c2polab.channel import SystemConfig
from c2polab.numerics import RngStream


def crandn(gen, *shape):
    """Independent complex normal draws for oracles (plain numpy Generator)."""
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def gen():
    return np.random.default_rng(20201)


@pytest.fixture
def small_cfg():
    # xi large enough relative to H^H s that not every component clips
    return SystemConfig(users=2, antennas=4, power=8.0, modulation="QPSK", t_max=3)


@pytest.fixture
def full_cfg():
    return SystemConfig(users=8, antennas=128, power=1.0, modulation="16QAM", t_max=7)


@pytest.fixture
def rng():
    return RngStream(11, 0)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    results = test_acceptance.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=str):
        ok, detail = results[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
