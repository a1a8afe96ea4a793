import os

import pytest

from sqa_bench.subword import load_lexicon, load_patterns

DATA = os.path.join(os.path.dirname(__file__), "data")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def data_path(name):
    return os.path.join(DATA, name)


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon()


@pytest.fixture(scope="session")
def small_lexicon():
    return load_lexicon(data_path("test_lexicon.dict"))


@pytest.fixture(scope="session")
def patterns():
    return load_patterns()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
