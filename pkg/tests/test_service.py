from __future__ import annotations

import threading

import pytest
from fastapi.testclient import TestClient

from qeloop.generation import DegradationSpec, degrade
from qeloop.orchestrator import Session
from qeloop.runner import Workspace
from qeloop.service import SessionRegistry, create_app


@pytest.fixture()
def degraded_session(sample_corpus, run_ctx):
    working = degrade(sample_corpus, DegradationSpec(level=0.6))
    return Session.start("sess-1", "sample", sample_corpus, run_ctx, working=working)


@pytest.fixture()
def client(degraded_session):
    registry = SessionRegistry()
    registry.add(degraded_session)
    return TestClient(create_app(registry))


def submit_all(client, session_id="sess-1", reviewer="tester"):
    queue = client.get(f"/api/v1/sessions/{session_id}/queue").json()["queue"]
    decisions = [
        {
            "pair_id": item["pair_id"],
            "verdict": item["action"],
            "edited_text": item["suggested_text"] if item["action"] in ("Refine", "AddCoverage") else None,
            "reviewer": reviewer,
        }
        for item in queue
    ]
    return client.post(f"/api/v1/sessions/{session_id}/decisions", json={"decisions": decisions})


class TestQueueEndpoint:
    def test_snapshot_shape(self, client):
        response = client.get("/api/v1/sessions/sess-1/queue")
        assert response.status_code == 200
        snapshot = response.json()
        assert snapshot["session_id"] == "sess-1"
        assert snapshot["status"] == "AwaitingReview"
        assert snapshot["cycle"] == 1
        assert snapshot["queue"]
        item = snapshot["queue"][0]
        for field in (
            "pair_id", "action", "category", "cosine", "jaccard", "left_id", "left_text",
            "rationale", "testing_impact", "requires_human", "suggested_text", "decided",
        ):
            assert field in item
        assert snapshot["summary"]["mean_cosine"] < 1.0

    def test_unknown_session_404(self, client):
        assert client.get("/api/v1/sessions/nope/queue").status_code == 404

    def test_idempotent_reads(self, client):
        first = client.get("/api/v1/sessions/sess-1/queue").content
        second = client.get("/api/v1/sessions/sess-1/queue").content
        assert first == second

    def test_sessions_listing(self, client):
        body = client.get("/api/v1/sessions").json()
        assert body["sessions"][0]["session_id"] == "sess-1"


class TestDecisionEndpoint:
    def test_accepts_valid_batch(self, client):
        response = submit_all(client)
        assert response.status_code == 200
        assert response.json()["accepted"] > 0
        queue = client.get("/api/v1/sessions/sess-1/queue").json()["queue"]
        assert all(item["decided"] for item in queue)

    def test_duplicate_decision_conflicts(self, client):
        first = submit_all(client)
        assert first.status_code == 200
        again = submit_all(client)
        assert again.status_code == 409

    def test_unknown_pair_id_422(self, client):
        response = client.post(
            "/api/v1/sessions/sess-1/decisions",
            json={"decisions": [{"pair_id": "cross:bogus#0->-", "verdict": "Refine"}]},
        )
        assert response.status_code == 422

    def test_unknown_session_404(self, client):
        response = client.post(
            "/api/v1/sessions/ghost/decisions", json={"decisions": []}
        )
        assert response.status_code == 404


class TestAdvanceEndpoint:
    def test_advance_runs_next_cycle(self, client):
        submit_all(client)
        response = client.post("/api/v1/sessions/sess-1/advance")
        assert response.status_code == 200
        snapshot = response.json()
        assert snapshot["cycle"] == 2
        assert snapshot["status"] in ("Converged", "AwaitingReview", "CycleLimit")
        assert snapshot["summary"]["mean_cosine"] > 0.9

    def test_advance_after_terminal_conflicts(self, client):
        submit_all(client)
        assert client.post("/api/v1/sessions/sess-1/advance").status_code == 200
        # session converged; advancing again is a wrong-state conflict
        second = client.post("/api/v1/sessions/sess-1/advance")
        assert second.status_code == 409

    def test_concurrent_advance_single_success(self, client):
        submit_all(client)
        barrier = threading.Barrier(2)
        results = []

        def hit():
            barrier.wait()
            results.append(client.post("/api/v1/sessions/sess-1/advance").status_code)

        threads = [threading.Thread(target=hit) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409]


class TestReportsEndpoint:
    def test_cycle_bundle(self, client):
        response = client.get("/api/v1/sessions/sess-1/reports", params={"cycle": 1})
        assert response.status_code == 200
        bundle = response.json()
        assert bundle["cycle"] == 1
        assert bundle["semantic_results"]["schema"] == "semantic_results"
        assert bundle["semantic_results"]["rows"]
        assert bundle["impact_analysis"]["rows"]
        assert bundle["overall_summary"]["rows"][0]["cycle"] == 1

    def test_out_of_range_cycle_416(self, client):
        assert client.get(
            "/api/v1/sessions/sess-1/reports", params={"cycle": 5}
        ).status_code == 416
        assert client.get(
            "/api/v1/sessions/sess-1/reports", params={"cycle": 0}
        ).status_code == 416

    def test_reports_match_files_on_disk(self, tmp_path, degraded_session):
        workspace = Workspace(tmp_path, "sample")
        registry = SessionRegistry(workspace)
        registry.add(degraded_session)
        client = TestClient(create_app(registry))
        bundle = client.get("/api/v1/sessions/sess-1/reports", params={"cycle": 1}).json()
        import json as json_mod

        on_disk = json_mod.loads(
            (workspace.cycle_dir(1) / "semantic_results.json").read_text(encoding="utf-8")
        )
        assert bundle["semantic_results"] == on_disk


class TestAuth:
    def test_token_required_when_configured(self, degraded_session, monkeypatch):
        monkeypatch.setenv("QELOOP_TEST_TOKEN", "sekrit")
        registry = SessionRegistry()
        registry.add(degraded_session)
        client = TestClient(create_app(registry, token_env="QELOOP_TEST_TOKEN"))
        assert client.get("/api/v1/sessions").status_code == 401
        ok = client.get("/api/v1/sessions", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200
