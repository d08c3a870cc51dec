import numpy as np
import pytest

from agd_evade import corpus, models
from agd_evade.nn import training


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running desk experiments")


@pytest.fixture(scope="session")
def small_corpus():
    specs = corpus.parse_roster("lcg:2,dict:2", seed=5)
    return corpus.assemble(corpus.bundled_benign(800, seed=5), [(s, 400) for s in specs], 5)


@pytest.fixture(scope="session")
def small_substitute(small_corpus):
    x, y = small_corpus.select("substitute_train")
    sub = models.build_substitute(small_corpus.classes, seed=1)
    sub, _ = training.train(sub, x, y, epochs=4, seed=1)
    return sub


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
