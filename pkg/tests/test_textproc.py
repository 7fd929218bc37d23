from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qeloop.artefacts import Artefact, ArtefactKind
from qeloop.textproc import (
    EmptyAfterSegmentation,
    Segment,
    extract_entity_verbs,
    load_default_lexicon,
    load_lexicon,
    segment_artefact,
    tokenize_normalize,
)


def req(body: str) -> Artefact:
    return Artefact(id="r", kind=ArtefactKind.REQUIREMENT, body=body)


class TestSegmentation:
    def test_newline_steps_split(self):
        artefact = Artefact(
            id="s", kind=ArtefactKind.BDD_SCENARIO,
            body="Given 3 failed attempts\nThen the account is locked",
        )
        segments = segment_artefact(artefact)
        assert [s.text for s in segments] == [
            "Given 3 failed attempts",
            "Then the account is locked",
        ]

    def test_sentence_terminator_split(self):
        segments = segment_artefact(req("The system shall lock the account. It shall notify the admin."))
        assert [s.text for s in segments] == [
            "The system shall lock the account.",
            "It shall notify the admin.",
        ]

    def test_no_tokens_raises(self):
        with pytest.raises(EmptyAfterSegmentation):
            segment_artefact(req("!!! ---"))

    def test_tokenless_segments_dropped_and_reindexed(self):
        segments = segment_artefact(req("First point. ?! Second point."))
        assert [s.index for s in segments] == [0, 1]
        assert [s.text for s in segments] == ["First point.", "Second point."]

    def test_abbreviations_do_not_split(self):
        segments = segment_artefact(req("Input formats, e.g. JSON and YAML, are accepted."))
        assert len(segments) == 1

    def test_bullets_stand_alone(self):
        segments = segment_artefact(req("- first item\n- second item"))
        assert [s.text for s in segments] == ["- first item", "- second item"]

    def test_idempotent_on_single_segment(self):
        for body in [
            "The system shall lock the account after 3 failed attempts.",
            "Given 3 attempts",
            "- a bullet line",
        ]:
            first = segment_artefact(req(body))
            assert len(first) == 1
            again = segment_artefact(req(first[0].text))
            assert len(again) == 1
            assert again[0].text == first[0].text


class TestTokenize:
    def test_stopwords_removed(self):
        assert tokenize_normalize("The system shall lock the account", {"the", "shall"}) == {
            "system", "lock", "account",
        }

    def test_empty_text(self):
        assert tokenize_normalize("", frozenset()) == frozenset()

    def test_case_folding_and_set_semantics(self):
        assert tokenize_normalize("Lock lock LOCK", frozenset()) == {"lock"}

    @given(
        text=st.text(max_size=80),
        base=st.sets(st.sampled_from("abcdefgh"), max_size=4),
        extra=st.sets(st.sampled_from("ijklmnop"), max_size=4),
    )
    @settings(max_examples=100, deadline=None)
    def test_enlarging_stopwords_never_enlarges_tokens(self, text, base, extra):
        small = tokenize_normalize(text, frozenset(base))
        large = tokenize_normalize(text, frozenset(base | extra))
        assert large <= small


class TestEntityVerbs:
    def test_lexicon_rule(self, stopwords):
        segment = Segment("r", 0, "The system shall lock the account")
        profile = extract_entity_verbs(segment, frozenset({"lock"}), stopwords)
        assert profile.verbs == {"lock"}
        assert profile.entities == {"system", "account"}

    def test_no_lexicon_hits_all_entities(self):
        segment = Segment("r", 0, "parser handles documents")
        profile = extract_entity_verbs(segment, frozenset(), frozenset())
        assert profile.verbs == frozenset()
        assert profile.entities == {"parser", "handles", "documents"}

    def test_suffix_heuristic_with_shipped_lexicons(self, stopwords):
        segment = Segment("r", 0, "Validate the input")
        profile = extract_entity_verbs(
            segment, load_default_lexicon("verb_lexicon.txt"), stopwords
        )
        assert profile.verbs == {"validate"}
        assert profile.entities == {"input"}

    def test_disjoint_and_jointly_cover(self, stopwords):
        lexicon = load_default_lexicon("verb_lexicon.txt")
        for text in [
            "The system shall lock the account after 3 failed attempts.",
            "Validate and verify the uploaded certificate",
            "plain words only",
        ]:
            segment = Segment("r", 0, text)
            profile = extract_entity_verbs(segment, lexicon, stopwords)
            tokens = tokenize_normalize(text, stopwords)
            assert profile.entities & profile.verbs == frozenset()
            assert profile.entities | profile.verbs == tokens


class TestLexiconFiles:
    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("# a comment\nalpha\n\nbeta  # trailing\n", encoding="utf-8")
        assert load_lexicon(path) == {"alpha", "beta"}

    def test_shipped_stopwords_load(self, stopwords):
        assert "the" in stopwords
        assert "shall" in stopwords
        assert len(stopwords) >= 100
        # negations must stay visible for polarity checks
        assert "not" not in stopwords
