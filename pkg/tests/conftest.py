import warnings

import numpy as np
import pytest
from hypothesis import settings

from xidiar.pipeline import build_models
from xidiar.synth import synthetic_dev_set

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_models():
    iv, xv, labels = synthetic_dev_set()
    return build_models(iv, xv, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one line per acceptance criterion; printed in the terminal summary."""

    def record(number, name, ok, detail, seconds):
        ACCEPTANCE.append(f"criterion {number} {'PASS' if ok else 'FAIL'}  {name}  ({detail}; {seconds:.1f} s)")
        print(ACCEPTANCE[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
