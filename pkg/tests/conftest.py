from __future__ import annotations

from pathlib import Path

import pytest

from qeloop.artefacts import Corpus, parse_requirements
from qeloop.embedding import EmbeddingContext, HashEmbedder
from qeloop.generation import MockChatProvider
from qeloop.orchestrator import RunContext
from qeloop.rubric import HeuristicBackend, Lexicons
from qeloop.textproc import load_default_lexicon

SAMPLE_PATH = Path(__file__).resolve().parents[1] / "src" / "qeloop" / "data" / "sample" / "requirements.txt"


@pytest.fixture(scope="session")
def stopwords() -> frozenset[str]:
    return load_default_lexicon("stopwords.txt")


@pytest.fixture(scope="session")
def lexicons() -> Lexicons:
    return Lexicons.default()


@pytest.fixture()
def emb(stopwords) -> EmbeddingContext:
    return EmbeddingContext(HashEmbedder(stopwords), stopwords=stopwords)


@pytest.fixture(scope="session")
def sample_corpus() -> Corpus:
    return parse_requirements(SAMPLE_PATH.read_text(encoding="utf-8"), project_id="sample")


@pytest.fixture()
def run_ctx(emb, lexicons) -> RunContext:
    return RunContext(emb=emb, chat=MockChatProvider(), backend=HeuristicBackend(lexicons))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    results: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in str(nodeid):
                continue
            if getattr(report, "when", "call") != "call" and outcome == "passed":
                continue
            results[str(nodeid)] = outcome
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(results):
        label = "PASS" if results[nodeid] == "passed" else "FAIL"
        short = nodeid.split("::", 1)[-1]
        terminalreporter.write_line(f"{label}: {short}")
