import sys
from pathlib import Path

import pytest

CORPUS = Path(__file__).resolve().parents[1] / "src" / "gradverify" / "corpus"
BENCHMARKS = ("list", "bst", "composite", "avl")


def corpus_path(name):
    return CORPUS / f"{name}.gvl"


def corpus_text(name):
    return corpus_path(name).read_text(encoding="utf-8")


@pytest.fixture
def corpus():
    return corpus_path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    RESULTS = mod.RESULTS
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
