"""Wires sessions to a project workspace: ingested corpora, per-cycle report
files, figures, the energy ledger, session state, and the audit log.

Workspace layout:

    <workspace>/<project>/
        inputs/<kind>.txt          canonical ingested documents
        cycle-<n>/{semantic_results,impact_analysis,updated_requirements}.{csv,json}
        overall_summary.{csv,json}
        energy.json
        figures/*.png
        state.json                 resumable session state
        audit.log                  one JSON record per line
        cache.jsonl                embedding cache
"""
from __future__ import annotations

import json
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable

from qeloop.artefacts import ArtefactKind, Corpus, parse_corpus, serialize_corpus
from qeloop.config import ProjectConfig
from qeloop.embedding import (
    EmbeddingCache,
    EmbeddingContext,
    HashEmbedder,
    RemoteEmbeddingProvider,
)
from qeloop.figures import render_summary_figures
from qeloop.generation import (
    DegradationSpec,
    MockChatProvider,
    RemoteChatProvider,
)
from qeloop.orchestrator import (
    NegativeValidationReport,
    RecommendationAction,
    ReviewDecision,
    RunContext,
    Session,
    SessionStatus,
    negative_validation,
)
from qeloop.reporting import (
    EnergyLedger,
    ImpactRow,
    SemanticResultRow,
    SummaryRecord,
    UpdatedRequirementRow,
    emit_csv,
    emit_energy,
    emit_json,
)
from qeloop.rubric import HeuristicBackend, JudgeScoringBackend, LlmJudgeBackend
from qeloop.session_store import save_session

_INPUT_FILES = {
    ArtefactKind.REQUIREMENT: "requirements.txt",
    ArtefactKind.TEST_CASE: "testcases.txt",
    ArtefactKind.BDD_SCENARIO: "features.feature",
}

_CYCLE_SCHEMAS = (
    ("semantic_results", SemanticResultRow),
    ("impact_analysis", ImpactRow),
    ("updated_requirements", UpdatedRequirementRow),
)


def utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


class Workspace:
    def __init__(self, root: str | Path, project_id: str):
        self.project_id = project_id
        self.project_dir = Path(root) / project_id

    def input_path(self, kind: ArtefactKind) -> Path:
        return self.project_dir / "inputs" / _INPUT_FILES[kind]

    def store_corpus(self, corpus: Corpus) -> Path:
        path = self.input_path(corpus.kind)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_corpus(corpus), encoding="utf-8")
        return path

    def load_corpus(self, kind: ArtefactKind) -> Corpus:
        path = self.input_path(kind)
        if not path.exists():
            raise FileNotFoundError(f"no ingested {kind.value} corpus at {path}")
        return parse_corpus(path.read_text(encoding="utf-8"), kind, self.project_id)

    def cycle_dir(self, cycle: int) -> Path:
        return self.project_dir / f"cycle-{cycle}"

    def audit_writer(self, clock: Callable[[], str]) -> Callable[[dict], None]:
        path = self.project_dir / "audit.log"

        def write(record: dict) -> None:
            path.parent.mkdir(parents=True, exist_ok=True)
            record = {"at": clock(), **record}
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

        return write


def build_run_context(
    config: ProjectConfig,
    workspace: Workspace | None = None,
    provider_override: str | None = None,
    clock: Callable[[], str] | None = None,
) -> RunContext:
    """Assemble providers, cache, and lexicons per the project config."""
    lexicons = config.load_lexicons()
    cache_path = workspace.project_dir / "cache.jsonl" if workspace else None
    clock = clock or utc_clock
    cache = EmbeddingCache(cache_path, clock=clock)

    embedding_kind = provider_override or config.embedding.kind
    if embedding_kind == "remote":
        provider = RemoteEmbeddingProvider(
            endpoint=config.embedding.endpoint,
            model=config.embedding.model,
            provider_id=f"remote:{config.embedding.model}",
            dim=config.embedding_dim,
            token_env=config.embedding.token_env or None,
            timeout=config.embedding.timeout,
        )
    else:
        provider = HashEmbedder(lexicons.stopwords)

    chat_kind = provider_override or config.generation.kind
    if chat_kind == "remote":
        chat = RemoteChatProvider(
            endpoint=config.generation.endpoint,
            model=config.generation.model,
            token_env=config.generation.token_env or None,
            timeout=config.generation.timeout,
            retries=config.generation.retries,
        )
    else:
        chat = MockChatProvider()

    if config.rubric_backend == "llm-judge":
        template = config.prompt_template("judge") or (
            resources.files("qeloop").joinpath("data/judge_prompt.txt").read_text(encoding="utf-8")
        )
        backend: HeuristicBackend = JudgeScoringBackend(
            LlmJudgeBackend(chat, template), lexicons
        )
    else:
        backend = HeuristicBackend(lexicons)

    return RunContext(
        emb=EmbeddingContext(provider, cache, lexicons.stopwords),
        chat=chat,
        thresholds=config.thresholds_for(ArtefactKind.REQUIREMENT),
        backend=backend,
        target_kind=config.target_kind,
        batch_size=config.batch_size,
        max_cycles=config.max_cycles,
        rubric_delta=config.rubric_delta,
        cosine_delta=config.cosine_delta,
        clock=clock,
        forward_template=config.prompt_template("forward"),
        reverse_template=config.prompt_template("reverse"),
    )


def emit_cycle_reports(session: Session, cycle: int, workspace: Workspace) -> list[Path]:
    outputs = session.cycle_outputs.get(cycle)
    if outputs is None:
        return []
    out_dir = workspace.cycle_dir(cycle)
    written = []
    for name, row_type in _CYCLE_SCHEMAS:
        rows = outputs[name]
        written.append(emit_csv(rows, out_dir / f"{name}.csv", row_type))
        written.append(emit_json(rows, out_dir / f"{name}.json", row_type))
    return written


def emit_run_outputs(session: Session, workspace: Workspace, config: ProjectConfig) -> list[Path]:
    """Overall summary, energy ledger, figures, and session state."""
    history = list(session.state.history)
    written = [
        emit_csv(history, workspace.project_dir / "overall_summary.csv", SummaryRecord),
        emit_json(history, workspace.project_dir / "overall_summary.json", SummaryRecord),
    ]
    ledger = EnergyLedger(
        llm_ops=session.state.stats.llm_ops,
        energy_per_op_kwh=config.energy_per_op_kwh,
        grid_factor_tons_per_kwh=config.grid_factor_tons_per_kwh,
    )
    written.append(emit_energy(ledger, workspace.project_dir / "energy.json", config.batch_size))
    written.extend(render_summary_figures(history, workspace.project_dir / "figures"))
    written.append(save_session(session, workspace.project_dir / "state.json"))
    return written


def auto_decisions(session: Session, reviewer: str = "auto-policy") -> list[ReviewDecision]:
    """Accept every queued suggestion, filling Refine edits from the pre-fill."""
    decisions = []
    for item in session.state.queue:
        if item.pair_id in session.state.decisions:
            continue
        decisions.append(
            ReviewDecision(
                pair_id=item.pair_id,
                verdict=item.action,
                edited_text=item.suggested_text
                if item.action in (RecommendationAction.REFINE, RecommendationAction.ADD_COVERAGE)
                else None,
                reviewer=reviewer,
                decided_at=session.ctx.clock(),
            )
        )
    return decisions


def run_project(
    project_id: str,
    original: Corpus,
    config: ProjectConfig,
    workspace: Workspace,
    ctx: RunContext | None = None,
    working: Corpus | None = None,
    session_id: str | None = None,
) -> Session:
    """Full unattended refinement run with the auto-accept review policy."""
    ctx = ctx or build_run_context(config, workspace)
    session = Session.start(
        session_id or f"{project_id}-run",
        project_id,
        original,
        ctx,
        working=working,
        audit=workspace.audit_writer(ctx.clock),
    )
    emit_cycle_reports(session, len(session.state.history), workspace)
    while session.status is SessionStatus.AWAITING_REVIEW:
        decisions = auto_decisions(session)
        if decisions:
            session.submit_decisions(decisions)
        session.advance()
        emit_cycle_reports(session, len(session.state.history), workspace)
    emit_run_outputs(session, workspace, config)
    return session


def negative_validate_project(
    project_id: str,
    corpus: Corpus,
    level: float,
    config: ProjectConfig,
    workspace: Workspace,
    ctx: RunContext | None = None,
    ambiguity_injection: bool = True,
) -> NegativeValidationReport:
    ctx = ctx or build_run_context(config, workspace)
    spec = DegradationSpec(level=level, ambiguity_injection=ambiguity_injection)
    report = negative_validation(corpus, spec, ctx)
    payload = report.to_dict()
    if 0.0 < level < config.min_negative_level:
        payload["warning"] = (
            f"degradation level {level} is below the configured minimum "
            f"{config.min_negative_level}; the check may be too weak to be meaningful"
        )
    path = workspace.project_dir / "negative_validation.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return report
