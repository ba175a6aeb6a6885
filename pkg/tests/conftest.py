import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reqclarify import load_corpus  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def synthetic():
    return load_corpus("@synthetic")


@pytest.fixture(scope="session")
def fixture_corpus():
    return load_corpus("@fixture")


@pytest.fixture
def tiny_corpus():
    from helpers import make_corpus
    return make_corpus()


_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__ != "test_acceptance":
        return
    if rep.when == "call" or rep.outcome != "passed":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _acceptance[item.name] = (doc, rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    labels = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for name in sorted(_acceptance):
        doc, outcome = _acceptance[name]
        terminalreporter.write_line(f"{labels.get(outcome, outcome.upper()):4}  {doc}")
