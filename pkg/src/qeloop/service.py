"""HTTP backend for the review console.

Endpoints (JSON, snake_case, versioned path):

    GET  /api/v1/sessions
    GET  /api/v1/sessions/{id}/queue
    POST /api/v1/sessions/{id}/decisions
    POST /api/v1/sessions/{id}/advance
    GET  /api/v1/sessions/{id}/reports?cycle=n

Error mapping: unknown session 404, duplicate or conflicting decision 409,
unknown pair id 422, cycle out of range 416, advance in the wrong state 409.
Reads are idempotent; writes hold the per-session single-writer lock.
"""
from __future__ import annotations

import json
import os
from dataclasses import fields

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from qeloop.orchestrator import (
    AlreadyDecided,
    ConflictingDecisions,
    Recommendation,
    RecommendationAction,
    ReviewDecision,
    Session,
    UnknownPairId,
    WrongState,
)
from qeloop.reporting import SCHEMA_VERSION, SummaryRecord
from qeloop.runner import Workspace, emit_cycle_reports
from qeloop.session_store import save_session


class DecisionIn(BaseModel):
    pair_id: str
    verdict: str
    edited_text: str | None = None
    reviewer: str = ""
    decided_at: str = ""


class DecisionBatch(BaseModel):
    decisions: list[DecisionIn] = Field(default_factory=list)


class SessionRegistry:
    """In-memory session table; emits report files when a workspace is set."""

    def __init__(self, workspace: Workspace | None = None):
        self.sessions: dict[str, Session] = {}
        self.workspace = workspace

    def add(self, session: Session) -> None:
        self.sessions[session.session_id] = session
        self._persist(session)

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def _persist(self, session: Session) -> None:
        if self.workspace is None:
            return
        for cycle in session.cycle_outputs:
            emit_cycle_reports(session, cycle, self.workspace)
        save_session(session, self.workspace.project_dir / "state.json")


def _recommendation_json(item: Recommendation, decided: bool) -> dict:
    pair = item.pair
    return {
        "pair_id": item.pair_id,
        "scope": item.scope,
        "action": item.action.value,
        "category": pair.category.label,
        "cosine": pair.cosine,
        "jaccard": pair.jaccard,
        "left_id": f"{pair.left.artefact_id}#{pair.left.index}",
        "left_text": pair.left.text,
        "right_id": f"{pair.right.artefact_id}#{pair.right.index}" if pair.right else None,
        "right_text": pair.right.text if pair.right else None,
        "rationale": item.rationale,
        "testing_impact": item.testing_impact,
        "requires_human": item.requires_human,
        "suggested_text": item.suggested_text,
        "decided": decided,
    }


def _summary_json(record: SummaryRecord | None) -> dict | None:
    if record is None:
        return None
    return {f.name: getattr(record, f.name) for f in fields(record)}


def session_snapshot(session: Session) -> dict:
    state = session.state
    return {
        "session_id": session.session_id,
        "project_id": session.project_id,
        "cycle": len(state.history),
        "status": session.status.value,
        "queue": [
            _recommendation_json(item, item.pair_id in state.decisions)
            for item in state.queue
        ],
        "summary": _summary_json(state.history[-1] if state.history else None),
    }


def _rows_payload(schema: str, rows: list) -> dict:
    return {
        "schema": schema,
        "version": SCHEMA_VERSION,
        "rows": [{f.name: getattr(r, f.name) for f in fields(r)} for r in rows],
    }


def create_app(
    registry: SessionRegistry,
    token_env: str = "",
    cors_origin: str = "*",
) -> FastAPI:
    app = FastAPI(title="qeloop review service", version="1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin] if cors_origin != "*" else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def check_auth(request: Request) -> None:
        expected = os.environ.get(token_env, "") if token_env else ""
        if not expected:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.get("/api/v1/sessions")
    def list_sessions(_: None = Depends(check_auth)) -> JSONResponse:
        rows = [
            {
                "session_id": s.session_id,
                "project_id": s.project_id,
                "cycle": len(s.state.history),
                "status": s.status.value,
            }
            for s in registry.sessions.values()
        ]
        return JSONResponse({"sessions": rows})

    @app.get("/api/v1/sessions/{session_id}/queue")
    def get_queue(session_id: str, _: None = Depends(check_auth)) -> JSONResponse:
        session = registry.get(session_id)
        return JSONResponse(session_snapshot(session))

    @app.post("/api/v1/sessions/{session_id}/decisions")
    def post_decisions(
        session_id: str, batch: DecisionBatch, _: None = Depends(check_auth)
    ) -> JSONResponse:
        session = registry.get(session_id)
        try:
            decisions = [
                ReviewDecision(
                    pair_id=d.pair_id,
                    verdict=RecommendationAction(d.verdict),
                    edited_text=d.edited_text,
                    reviewer=d.reviewer,
                    decided_at=d.decided_at,
                )
                for d in batch.decisions
            ]
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            accepted = session.submit_decisions(decisions)
        except UnknownPairId as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except (AlreadyDecided, ConflictingDecisions) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except WrongState as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        registry._persist(session)
        return JSONResponse({"accepted": accepted})

    @app.post("/api/v1/sessions/{session_id}/advance")
    def advance(session_id: str, _: None = Depends(check_auth)) -> JSONResponse:
        session = registry.get(session_id)
        try:
            session.advance()
        except WrongState as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        registry._persist(session)
        return JSONResponse(session_snapshot(session))

    @app.get("/api/v1/sessions/{session_id}/reports")
    def get_reports(
        session_id: str, cycle: int, _: None = Depends(check_auth)
    ) -> JSONResponse:
        session = registry.get(session_id)
        completed = len(session.state.history)
        if cycle < 1 or cycle > completed:
            raise HTTPException(
                status_code=416,
                detail=f"cycle {cycle} out of range; session has {completed} completed cycles",
            )
        bundle: dict = {"cycle": cycle}
        if registry.workspace is not None:
            cycle_dir = registry.workspace.cycle_dir(cycle)
            for name in ("semantic_results", "impact_analysis", "updated_requirements"):
                path = cycle_dir / f"{name}.json"
                bundle[name] = json.loads(path.read_text(encoding="utf-8"))
        else:
            outputs = session.cycle_outputs.get(cycle, {})
            for name in ("semantic_results", "impact_analysis", "updated_requirements"):
                bundle[name] = _rows_payload(name, outputs.get(name, []))
        bundle["overall_summary"] = _rows_payload(
            "overall_summary", list(session.state.history[:cycle])
        )
        return JSONResponse(bundle)

    return app


def serve(
    registry: SessionRegistry,
    host: str,
    port: int,
    token_env: str = "",
    cors_origin: str = "*",
) -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    uvicorn.run(
        create_app(registry, token_env, cors_origin), host=host, port=port, log_level="warning"
    )
