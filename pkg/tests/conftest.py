import logging
import time
from dataclasses import dataclass

import numpy as np
import pytest

from bandfaith.audio_io import DEFAULT_PROFILES, AnomalySpec, InjectionKind, synth_clip
from bandfaith.model import ModelConfig, TrainConfig, train

SUITE_BAND = 2
SUITE_SEED = 0

_acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_acceptance_key] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_acceptance_key, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line[1])


@pytest.fixture(scope="session")
def criterion(request):
    """``criterion(number, name, passed, detail)`` prints and records one line."""

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'} [{number:2d}] {name}" + (f"  ({detail})" if detail else "")
        print(line)
        request.config.stash[_acceptance_key].append((number, line))
        return passed

    return record


@pytest.fixture(scope="session")
def tiny_model():
    """Quickly trained two-machine scorer for unit tests that need real weights."""
    profiles = DEFAULT_PROFILES[:2]
    clips = [synth_clip(p, None, 500 + i, split="train") for p in profiles for i in range(12)]
    return train(clips, TrainConfig(epochs=2, seed=3), ModelConfig())


@pytest.fixture(scope="session")
def tiny_test_clips():
    profiles = DEFAULT_PROFILES[:2]
    return [synth_clip(p, AnomalySpec(SUITE_BAND) if i % 2 else None, 900 + i)
            for p in profiles for i in range(4)]


@dataclass
class Suite:
    train: list
    test: list
    extra_test: list
    band: int
    seed: int


@pytest.fixture(scope="session")
def suite() -> Suite:
    """Two machines, 200 normal training clips and 50 test clips each (half anomalous).

    ``extra_test`` holds 100 more labelled clips per machine for the null control.
    """
    profiles = DEFAULT_PROFILES[:2]
    anomaly = AnomalySpec(SUITE_BAND, InjectionKind.TONE_BURST, 0.0)
    train_clips = [synth_clip(p, None, i, split="train") for p in profiles for i in range(200)]
    test = [synth_clip(p, anomaly if i % 2 else None, 10_000 + i) for p in profiles for i in range(50)]
    extra = [synth_clip(p, anomaly if i % 2 else None, 20_000 + i) for p in profiles for i in range(100)]
    return Suite(train_clips, test, extra, SUITE_BAND, SUITE_SEED)


@dataclass
class TrainedSuite:
    model: object
    seconds: float


@pytest.fixture(scope="session")
def suite_model(suite) -> TrainedSuite:
    logging.getLogger("bandfaith").setLevel(logging.WARNING)
    t0 = time.perf_counter()
    model = train(suite.train, TrainConfig(seed=suite.seed))
    return TrainedSuite(model, time.perf_counter() - t0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
