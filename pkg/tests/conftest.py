from importlib import resources
from pathlib import Path

import pytest

from radimpress import load_corpus

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(str(resources.files("radimpress") / "data"))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def synthetic_corpus():
    return load_corpus(DATA / "synthetic_corpus.jsonl")


@pytest.fixture(scope="session")
def synthetic_test():
    return load_corpus(DATA / "synthetic_test.jsonl")


# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
