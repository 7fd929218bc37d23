from __future__ import annotations

import dataclasses

import pytest

from qeloop.artefacts import ArtefactKind
from qeloop.config import ConfigError, ProjectConfig, load_config
from qeloop.orchestrator import RecommendationAction, Session, SessionStatus
from qeloop.runner import Workspace, build_run_context
from qeloop.rubric import JudgeScoringBackend


class TestLoadConfig:
    def test_missing_file_gives_defaults(self, tmp_path):
        config = load_config(tmp_path / "nope.yaml")
        assert config.batch_size == 10
        assert config.max_cycles == 3
        assert config.thresholds_for(ArtefactKind.REQUIREMENT).high == 0.8
        assert config.rubric_backend == "heuristic"

    def test_full_file_parses(self, tmp_path):
        path = tmp_path / "qeloop.yaml"
        path.write_text(
            """
workspace: ws
target_kind: bdd
batch_size: 5
max_cycles: 2
thresholds:
  requirement: {high: 0.9, medium: 0.5, low: 0.2}
convergence: {rubric_delta: 0.2, cosine_delta: 0.05}
energy: {per_op_kwh: 0.2, grid_factor: 0.001}
generation: {kind: remote, endpoint: "http://g", model: m, token_env: G_TOKEN}
embedding: {kind: remote, endpoint: "http://e", model: enc, token_env: E_TOKEN}
service: {host: 0.0.0.0, port: 9000, token_env: SVC_TOKEN, cors_origin: "http://ui"}
rubric_backend: llm-judge
""",
            encoding="utf-8",
        )
        config = load_config(path)
        assert config.target_kind is ArtefactKind.BDD_SCENARIO
        assert config.batch_size == 5
        assert config.thresholds_for(ArtefactKind.REQUIREMENT).high == 0.9
        assert config.thresholds_for(ArtefactKind.TEST_CASE).high == 0.8  # untouched kind
        assert config.generation.kind == "remote"
        assert config.generation.token_env == "G_TOKEN"
        assert config.energy_per_op_kwh == 0.2
        assert config.service_token_env == "SVC_TOKEN"
        assert config.rubric_backend == "llm-judge"

    def test_invalid_values_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("thresholds:\n  widget: {high: 0.9}\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError):
            ProjectConfig(rubric_backend="oracle")

    def test_prompt_override(self, tmp_path):
        custom = tmp_path / "fwd.txt"
        custom.write_text("TASK: forward\nTARGET-KIND: {target_kind}\n{format_instructions}\n"
                          "<<<ARTEFACTS\n{artefacts}\nARTEFACTS>>>\n", encoding="utf-8")
        config = dataclasses.replace(ProjectConfig(), prompt_paths={"forward": str(custom)})
        assert config.prompt_template("forward") == custom.read_text(encoding="utf-8")
        assert config.prompt_template("reverse") is None


class TestJudgeBackendWiring:
    def test_config_selects_judge_backend(self, tmp_path, sample_corpus):
        config = dataclasses.replace(ProjectConfig(), rubric_backend="llm-judge",
                                     workspace=tmp_path)
        workspace = Workspace(tmp_path, "judged")
        ctx = build_run_context(config, workspace)
        assert isinstance(ctx.backend, JudgeScoringBackend)

        # the mock chat provider cannot answer judge prompts, so swap in a
        # scripted judge double while keeping the rest of the pipeline live
        class ScriptedChat:
            def complete(self, prompt):
                assert "1 (worst) to 5" in prompt
                return "clarity: 4\ncompleteness: 3\ntestability: 5\nconsistency: 4"

        from qeloop.rubric import LlmJudgeBackend

        ctx = dataclasses.replace(
            ctx, backend=JudgeScoringBackend(LlmJudgeBackend(ScriptedChat(), _judge_template()))
        )
        session = Session.start("j", "judged", sample_corpus, ctx)
        assert session.status is SessionStatus.CONVERGED
        scores = list(session.state.scores.values())
        assert all(s.backend_id == "llm-judge-v1" for s in scores)
        assert all(s.clarity == 4 and s.testability == 5 for s in scores)


def _judge_template() -> str:
    from importlib import resources

    return resources.files("qeloop").joinpath("data/judge_prompt.txt").read_text(encoding="utf-8")


class TestServeResume:
    def test_registry_persists_state_for_resume(self, tmp_path, sample_corpus, run_ctx):
        from fastapi.testclient import TestClient

        from qeloop.generation import DegradationSpec, degrade
        from qeloop.service import SessionRegistry, create_app
        from qeloop.session_store import load_session

        workspace = Workspace(tmp_path, "resume")
        working = degrade(sample_corpus, DegradationSpec(level=0.6))
        session = Session.start("resume", "resume", sample_corpus, run_ctx, working=working)
        registry = SessionRegistry(workspace)
        registry.add(session)
        client = TestClient(create_app(registry))

        queue = client.get("/api/v1/sessions/resume/queue").json()["queue"]
        refine = next(q for q in queue if q["action"] == "Refine")
        assert client.post(
            "/api/v1/sessions/resume/decisions",
            json={"decisions": [{"pair_id": refine["pair_id"], "verdict": "Refine",
                                 "edited_text": refine["suggested_text"], "reviewer": "r"}]},
        ).status_code == 200

        # a fresh process resumes with the submitted decision intact
        restored = load_session(workspace.project_dir / "state.json", run_ctx)
        assert restored.status is SessionStatus.AWAITING_REVIEW
        assert refine["pair_id"] in restored.state.decisions
        remaining = [
            ReviewStub(i["pair_id"], i["action"], i["suggested_text"])
            for i in queue
            if i["pair_id"] != refine["pair_id"]
        ]
        from qeloop.orchestrator import ReviewDecision

        restored.submit_decisions([
            ReviewDecision(pair_id=s.pair_id, verdict=RecommendationAction(s.action),
                           edited_text=s.suggested) for s in remaining
        ])
        restored.advance()
        assert restored.status is SessionStatus.CONVERGED


class ReviewStub:
    def __init__(self, pair_id, action, suggested):
        self.pair_id = pair_id
        self.action = action
        self.suggested = suggested
