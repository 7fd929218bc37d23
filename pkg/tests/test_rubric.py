from __future__ import annotations

import random

import pytest

from qeloop.artefacts import Artefact, ArtefactKind, Corpus
from qeloop.rubric import (
    EmptyCorpus,
    HeuristicBackend,
    LlmJudgeBackend,
    MalformedJudgeOutput,
    RubricScores,
    WrongKind,
    alignment_score,
    ambiguity_hits,
    round_half_up,
    score_clarity,
    score_completeness,
    score_consistency,
    score_semantic_alignment,
    score_testability,
)
from qeloop.similarity import Thresholds


def req(body: str, rid: str = "r") -> Artefact:
    return Artefact(id=rid, kind=ArtefactKind.REQUIREMENT, body=body)


def corpus(*artefacts: Artefact) -> Corpus:
    return Corpus(project_id="p", kind=ArtefactKind.REQUIREMENT, artefacts=tuple(artefacts))


GOOD = "The system shall lock the account after 3 failed attempts."


class TestClarity:
    def test_clean_requirement_scores_five(self, lexicons):
        assert score_clarity(req(GOOD), lexicons.ambiguity) == 5

    def test_two_hits_score_three(self, lexicons):
        body = "The response shall be appropriate and fast for all users."
        assert score_clarity(req(body), lexicons.ambiguity) == 3

    def test_clamped_at_one(self, lexicons):
        body = "Behavior shall be appropriate, fast, robust, seamless and reasonable."
        assert score_clarity(req(body), lexicons.ambiguity) == 1

    def test_overlong_segment_penalty(self, lexicons):
        body = " ".join(f"word{i}" for i in range(45)) + "."
        assert score_clarity(req(body), lexicons.ambiguity) == 4

    def test_word_boundary_matching(self, lexicons):
        # "fasten" must not trip the "fast" phrase
        assert ambiguity_hits("Fasten the bracket", lexicons.ambiguity) == set()

    def test_appending_phrase_never_raises_clarity(self, lexicons):
        bodies = [GOOD, "Validate the form.", "A robust flow."]
        for body in bodies:
            base = score_clarity(req(body), lexicons.ambiguity)
            for phrase in ["appropriate", "as needed", "seamless"]:
                extended = score_clarity(req(body + " It is " + phrase + "."), lexicons.ambiguity)
                assert extended <= base


class TestCompleteness:
    def test_full_feature_requirement(self, lexicons):
        assert score_completeness(req(GOOD), lexicons) == 5

    def test_bare_statement_scores_floor(self, lexicons):
        assert score_completeness(req("Works well."), lexicons) == 1

    def test_wrong_kind(self, lexicons):
        tc = Artefact(id="t", kind=ArtefactKind.TEST_CASE, body="Step: a\nExpect: b")
        with pytest.raises(WrongKind):
            score_completeness(tc, lexicons)

    def test_each_feature_adds_a_point(self, lexicons):
        assert score_completeness(req("The frobnicator hums."), lexicons) == 1
        assert score_completeness(req("The system hums."), lexicons) == 2
        assert score_completeness(req("The system shall log events."), lexicons) == 3
        assert score_completeness(req("The system shall log 3 events."), lexicons) == 4


class TestTestability:
    def test_quantified_single_outcome_scores_five(self, lexicons):
        assert score_testability(req(GOOD), lexicons) == 5

    def test_vague_requirement_scores_low(self, lexicons):
        value = score_testability(req("The system should be user-friendly."), lexicons)
        assert value in (1, 2)

    def test_contentless_body_floors(self, lexicons):
        assert score_testability(req("Do it."), lexicons) == 1

    def test_chained_clauses_lose_focus_point(self, lexicons):
        chained = ("The system shall lock the account and notify the admin "
                   "and log the event or escalate within 3 seconds.")
        assert score_testability(req(chained), lexicons) < 5


class TestConsistency:
    def test_clean_corpus_scores_five(self, emb, lexicons):
        c = corpus(
            req("The system shall lock the account after 3 failed attempts.", "a"),
            req("Users reset their passwords through the portal.", "b"),
        )
        assert score_consistency(c, emb, Thresholds(), lexicons) == 5

    def test_duplicate_pair_penalty(self, emb, lexicons):
        c = corpus(req(GOOD, "a"), req(GOOD, "b"))
        assert score_consistency(c, emb, Thresholds(), lexicons) == 4

    def test_polarity_conflict_penalty(self, emb, lexicons):
        c = corpus(
            req("The account is locked.", "a"),
            req("The account is not locked.", "b"),
        )
        assert score_consistency(c, emb, Thresholds(), lexicons) <= 4

    def test_empty_corpus(self, emb, lexicons):
        with pytest.raises(EmptyCorpus):
            score_consistency(
                Corpus(project_id="p", kind=ArtefactKind.REQUIREMENT), emb, Thresholds(), lexicons
            )


class TestSemanticAlignment:
    def test_identical_corpora_score_five(self, emb, sample_corpus):
        assert score_semantic_alignment(sample_corpus, sample_corpus, emb, Thresholds()) == 5

    def test_mapping_formula(self):
        assert alignment_score(0.0) == 1
        assert alignment_score(1.0) == 5
        # 1 + 4*0.78 = 4.12 rounds half-up to 4
        assert alignment_score(0.78) == 4
        # round-half-up at the .5 boundary: 1 + 4*0.625 = 3.5 -> 4
        assert alignment_score(0.625) == 4

    def test_round_half_up(self):
        assert round_half_up(3.5) == 4
        assert round_half_up(2.4999) == 2
        assert round_half_up(4.5) == 5

    def test_monotone_in_mean_cosine(self):
        values = [alignment_score(m / 100) for m in range(0, 101)]
        assert values == sorted(values)

    def test_empty_corpus_rejected(self, emb, sample_corpus):
        empty = Corpus(project_id="p", kind=ArtefactKind.REQUIREMENT)
        with pytest.raises(EmptyCorpus):
            score_semantic_alignment(empty, sample_corpus, emb, Thresholds())


WORDS = [
    "system", "user", "account", "lock", "display", "log", "banner", "archive",
    "appropriate", "fast", "robust", "retry", "timeout", "3", "15", "percent",
    "validate", "reject", "when", "after", "and", "or", "the", "shall",
]


class TestDeterminismAndBounds:
    def test_scores_stay_in_range_for_random_artefacts(self, emb, lexicons):
        rng = random.Random(20260811)
        backend = HeuristicBackend(lexicons)
        for i in range(500):
            length = rng.randint(1, 20)
            body = " ".join(rng.choice(WORDS) for _ in range(length)) + "."
            artefact = req(body, rid=f"r{i}")
            clarity = score_clarity(artefact, lexicons.ambiguity)
            completeness = score_completeness(artefact, lexicons)
            testability = score_testability(artefact, lexicons)
            for value in (clarity, completeness, testability):
                assert 1 <= value <= 5
            scores = RubricScores(
                clarity=clarity, completeness=completeness, testability=testability,
                consistency=5, semantic_alignment=1, backend_id=backend.backend_id,
            )
            assert 1.0 <= scores.mean() <= 5.0

    def test_identical_inputs_identical_scores(self, emb, lexicons, sample_corpus):
        backend = HeuristicBackend(lexicons)
        first = backend.score_corpus(sample_corpus, emb, Thresholds(), semantic_alignment=5)
        second = backend.score_corpus(sample_corpus, emb, Thresholds(), semantic_alignment=5)
        assert first == second

    def test_score_validation(self):
        with pytest.raises(ValueError):
            RubricScores(clarity=0, completeness=3, testability=3, consistency=3,
                         semantic_alignment=3)


class TestJudgeBackend:
    class ScriptedChat:
        def __init__(self, text):
            self.text = text

        def complete(self, prompt):
            self.last_prompt = prompt
            return self.text

    def test_parses_metric_lines(self):
        chat = self.ScriptedChat("clarity: 4\ncompleteness: 3\ntestability: 5\nconsistency: 4")
        backend = LlmJudgeBackend(chat, "{metric_definitions}\n{artefact_body}")
        scores = backend.score_artefact_text(req(GOOD))
        assert scores == {"clarity": 4, "completeness": 3, "testability": 5, "consistency": 4}
        assert GOOD in chat.last_prompt

    def test_malformed_output_raises(self):
        chat = self.ScriptedChat("all good, ship it")
        backend = LlmJudgeBackend(chat, "{metric_definitions}\n{artefact_body}")
        with pytest.raises(MalformedJudgeOutput):
            backend.score_artefact_text(req(GOOD))
