"""Versioned JSON persistence for refinement sessions, plus the audit log."""
from __future__ import annotations

import json
from pathlib import Path

from qeloop.artefacts import Artefact, ArtefactKind, Corpus, Origin
from qeloop.generation import GenerationStats
from qeloop.orchestrator import (
    CycleState,
    Recommendation,
    RecommendationAction,
    ReviewDecision,
    RunContext,
    Session,
    SessionStatus,
)
from qeloop.reporting import (
    ImpactRow,
    SemanticResultRow,
    SummaryRecord,
    UpdatedRequirementRow,
)
from qeloop.similarity import AlignmentResult, MatchCategory, MatchPair
from qeloop.textproc import Segment

STATE_VERSION = 1


def _artefact_to_dict(a: Artefact) -> dict:
    return {
        "id": a.id,
        "kind": a.kind.value,
        "body": a.body,
        "title": a.title,
        "origin": a.origin.value,
        "source_cycle": a.source_cycle,
    }


def _artefact_from_dict(raw: dict) -> Artefact:
    return Artefact(
        id=raw["id"],
        kind=ArtefactKind(raw["kind"]),
        body=raw["body"],
        title=raw.get("title", ""),
        origin=Origin(raw.get("origin", "original")),
        source_cycle=int(raw.get("source_cycle", 0)),
    )


def _corpus_to_dict(c: Corpus | None) -> dict | None:
    if c is None:
        return None
    return {
        "project_id": c.project_id,
        "kind": c.kind.value,
        "artefacts": [_artefact_to_dict(a) for a in c],
    }


def _corpus_from_dict(raw: dict | None) -> Corpus | None:
    if raw is None:
        return None
    return Corpus(
        project_id=raw["project_id"],
        kind=ArtefactKind(raw["kind"]),
        artefacts=tuple(_artefact_from_dict(a) for a in raw["artefacts"]),
    )


def _segment_to_dict(s: Segment) -> dict:
    return {"artefact_id": s.artefact_id, "index": s.index, "text": s.text}


def _segment_from_dict(raw: dict) -> Segment:
    return Segment(artefact_id=raw["artefact_id"], index=raw["index"], text=raw["text"])


def _pair_to_dict(p: MatchPair) -> dict:
    return {
        "left": _segment_to_dict(p.left),
        "right": _segment_to_dict(p.right) if p.right else None,
        "cosine": p.cosine,
        "jaccard": p.jaccard,
        "category": p.category.name,
    }


def _pair_from_dict(raw: dict) -> MatchPair:
    return MatchPair(
        left=_segment_from_dict(raw["left"]),
        right=_segment_from_dict(raw["right"]) if raw.get("right") else None,
        cosine=raw["cosine"],
        jaccard=raw["jaccard"],
        category=MatchCategory[raw["category"]],
    )


def _recommendation_to_dict(r: Recommendation) -> dict:
    return {
        "pair_id": r.pair_id,
        "pair": _pair_to_dict(r.pair),
        "scope": r.scope,
        "action": r.action.value,
        "rationale": r.rationale,
        "testing_impact": r.testing_impact,
        "requires_human": r.requires_human,
        "suggested_text": r.suggested_text,
    }


def _recommendation_from_dict(raw: dict) -> Recommendation:
    return Recommendation(
        pair_id=raw["pair_id"],
        pair=_pair_from_dict(raw["pair"]),
        scope=raw["scope"],
        action=RecommendationAction(raw["action"]),
        rationale=raw["rationale"],
        testing_impact=raw["testing_impact"],
        requires_human=raw["requires_human"],
        suggested_text=raw.get("suggested_text"),
    )


def _decision_to_dict(d: ReviewDecision) -> dict:
    return {
        "pair_id": d.pair_id,
        "verdict": d.verdict.value,
        "edited_text": d.edited_text,
        "reviewer": d.reviewer,
        "decided_at": d.decided_at,
    }


def _decision_from_dict(raw: dict) -> ReviewDecision:
    return ReviewDecision(
        pair_id=raw["pair_id"],
        verdict=RecommendationAction(raw["verdict"]),
        edited_text=raw.get("edited_text"),
        reviewer=raw.get("reviewer", ""),
        decided_at=raw.get("decided_at", ""),
    )


def _row_to_dict(row) -> dict:
    from dataclasses import asdict

    return asdict(row)


def state_to_dict(state: CycleState) -> dict:
    return {
        "version": STATE_VERSION,
        "original": _corpus_to_dict(state.original),
        "working": _corpus_to_dict(state.working),
        "derived": _corpus_to_dict(state.derived),
        "reverse": _corpus_to_dict(state.reverse),
        "cycle": state.cycle,
        "max_cycles": state.max_cycles,
        "stats": {
            "forward_ops": state.stats.forward_ops,
            "reverse_ops": state.stats.reverse_ops,
            "judge_ops": state.stats.judge_ops,
        },
        "alignment": (
            {
                "pairs": [_pair_to_dict(p) for p in state.alignment.pairs],
                "mean_cosine": state.alignment.mean_cosine,
            }
            if state.alignment
            else None
        ),
        "dedup_pairs": [_pair_to_dict(p) for p in state.dedup_pairs],
        "scores": {
            aid: {
                "clarity": s.clarity,
                "completeness": s.completeness,
                "testability": s.testability,
                "consistency": s.consistency,
                "semantic_alignment": s.semantic_alignment,
                "backend_id": s.backend_id,
            }
            for aid, s in state.scores.items()
        },
        "history": [_row_to_dict(r) for r in state.history],
        "queue": [_recommendation_to_dict(r) for r in state.queue],
        "decisions": {k: _decision_to_dict(d) for k, d in state.decisions.items()},
        "suppressed": sorted(state.suppressed),
        "semantic_rows": [_row_to_dict(r) for r in state.semantic_rows],
        "impact_rows": [_row_to_dict(r) for r in state.impact_rows],
        "updated_rows": [_row_to_dict(r) for r in state.updated_rows],
    }


def state_from_dict(raw: dict) -> CycleState:
    from qeloop.rubric import RubricScores

    if raw.get("version") != STATE_VERSION:
        raise ValueError(f"unsupported state version {raw.get('version')!r}")
    stats = GenerationStats(
        forward_ops=raw["stats"]["forward_ops"],
        reverse_ops=raw["stats"]["reverse_ops"],
        judge_ops=raw["stats"]["judge_ops"],
    )
    alignment = None
    if raw.get("alignment"):
        alignment = AlignmentResult(
            pairs=tuple(_pair_from_dict(p) for p in raw["alignment"]["pairs"]),
            mean_cosine=raw["alignment"]["mean_cosine"],
        )
    return CycleState(
        original=_corpus_from_dict(raw["original"]),
        working=_corpus_from_dict(raw["working"]),
        derived=_corpus_from_dict(raw.get("derived")),
        reverse=_corpus_from_dict(raw.get("reverse")),
        cycle=raw["cycle"],
        max_cycles=raw["max_cycles"],
        stats=stats,
        alignment=alignment,
        dedup_pairs=tuple(_pair_from_dict(p) for p in raw.get("dedup_pairs", [])),
        scores={aid: RubricScores(**s) for aid, s in raw.get("scores", {}).items()},
        history=tuple(SummaryRecord(**r) for r in raw.get("history", [])),
        queue=tuple(_recommendation_from_dict(r) for r in raw.get("queue", [])),
        decisions={k: _decision_from_dict(d) for k, d in raw.get("decisions", {}).items()},
        suppressed=frozenset(raw.get("suppressed", [])),
        semantic_rows=tuple(SemanticResultRow(**r) for r in raw.get("semantic_rows", [])),
        impact_rows=tuple(ImpactRow(**r) for r in raw.get("impact_rows", [])),
        updated_rows=tuple(UpdatedRequirementRow(**r) for r in raw.get("updated_rows", [])),
    )


def save_session(session: Session, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": STATE_VERSION,
        "session_id": session.session_id,
        "project_id": session.project_id,
        "status": session.status.value,
        "transitions": session.transitions,
        "state": state_to_dict(session.state),
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def load_session(path: str | Path, ctx: RunContext, audit=None) -> Session:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    session = Session(
        session_id=payload["session_id"],
        project_id=payload["project_id"],
        state=state_from_dict(payload["state"]),
        ctx=ctx,
        audit=audit,
    )
    session.status = SessionStatus(payload["status"])
    session.transitions = list(payload.get("transitions", []))
    completed = len(session.state.history)
    session.cycle_outputs[completed] = {
        "semantic_results": list(session.state.semantic_rows),
        "impact_analysis": list(session.state.impact_rows),
        "updated_requirements": list(session.state.updated_rows),
    }
    return session
