from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msafnet.synth import SynthConfig, synth_generate  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    failed = rep.failed
    if rep.when == "call" or (rep.when == "setup" and failed):
        _criteria.setdefault(marker.args[0], []).append("FAIL" if failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _criteria.items():
        verdict = "FAIL" if "FAIL" in results else "PASS"
        terminalreporter.write_line(f"[{verdict}] {name} ({results.count('PASS')}/{len(results)} checks)")


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Default synthetic dataset (12 videos, 40 frames, 64x64, delay 3)."""
    out = tmp_path_factory.mktemp("synth")
    synth_generate(SynthConfig(), out)
    return out


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Four short videos for quick end-to-end runs."""
    out = tmp_path_factory.mktemp("synth_small")
    records = synth_generate(SynthConfig(num_videos=4, num_frames=16, aw_start=6, attention_delay=2), out)
    return out, records


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
