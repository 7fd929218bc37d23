"""Five-dimension quality scoring: clarity, completeness, testability,
consistency, and semantic alignment, each on a 1-5 integer scale.

The heuristic backend is fully deterministic and is what tests and the mock
pipeline rely on; an LLM-judge backend can be configured instead for the four
text metrics, going through the generation provider.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from qeloop.artefacts import Artefact, ArtefactKind, Corpus
from qeloop.embedding import EmbeddingContext
from qeloop.similarity import MatchCategory, Thresholds, align_cross, dedup_intra
from qeloop.textproc import (
    Segment,
    extract_entity_verbs,
    load_default_lexicon,
    segment_artefact,
    segment_corpus,
    tokenize,
)

HEURISTIC_BACKEND_ID = "heuristic-v1"

_LONG_SEGMENT_TOKENS = 40
_CONDITIONAL_TOKENS = frozenset({"if", "when", "whenever", "after", "before", "upon", "once", "while"})
_NEGATION_TOKENS = frozenset({"not", "no", "never", "cannot", "nor", "without"})
_TIME_UNIT_TOKENS = frozenset(
    {"second", "seconds", "minute", "minutes", "hour", "hours", "day", "days",
     "ms", "millisecond", "milliseconds", "week", "weeks"}
)


class RubricError(Exception):
    pass


class WrongKind(RubricError):
    def __init__(self, expected: ArtefactKind, got: ArtefactKind):
        super().__init__(f"expected a {expected.value} artefact, got {got.value}")


class EmptyCorpus(RubricError):
    def __init__(self, which: str):
        super().__init__(f"{which} corpus has no artefacts")


@dataclass(frozen=True)
class RubricScores:
    clarity: int
    completeness: int
    testability: int
    consistency: int
    semantic_alignment: int
    backend_id: str = HEURISTIC_BACKEND_ID

    def __post_init__(self):
        for name in ("clarity", "completeness", "testability", "consistency", "semantic_alignment"):
            value = getattr(self, name)
            if value not in (1, 2, 3, 4, 5):
                raise ValueError(f"{name} score {value!r} outside 1-5")

    def mean(self) -> float:
        return (
            self.clarity + self.completeness + self.testability
            + self.consistency + self.semantic_alignment
        ) / 5.0


@dataclass(frozen=True)
class Lexicons:
    """All lexicons the heuristic scorers consult."""

    ambiguity: frozenset[str]
    verbs: frozenset[str]
    actors: frozenset[str]
    outcomes: frozenset[str]
    stopwords: frozenset[str] = frozenset()

    @classmethod
    def default(cls) -> "Lexicons":
        return cls(
            ambiguity=load_default_lexicon("ambiguity_lexicon.txt"),
            verbs=load_default_lexicon("verb_lexicon.txt"),
            actors=load_default_lexicon("actors.txt"),
            outcomes=load_default_lexicon("outcomes.txt"),
            stopwords=load_default_lexicon("stopwords.txt"),
        )


def _clamp(score: int) -> int:
    return max(1, min(5, score))


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def ambiguity_hits(text: str, lexicon: frozenset[str]) -> set[str]:
    """Distinct lexicon phrases present in ``text`` (word-boundary matched)."""
    lowered = text.lower()
    hits = set()
    for phrase in lexicon:
        if re.search(rf"(?<![a-z0-9]){re.escape(phrase)}(?![a-z0-9])", lowered):
            hits.add(phrase)
    return hits


def score_clarity(artefact: Artefact, ambiguity_lexicon: frozenset[str]) -> int:
    """5 minus one per distinct ambiguity hit, minus one for any overlong segment."""
    penalty = len(ambiguity_hits(artefact.body, ambiguity_lexicon))
    segments = _segments_or_empty(artefact)
    if any(len(tokenize(s.text)) > _LONG_SEGMENT_TOKENS for s in segments):
        penalty += 1
    return _clamp(5 - penalty)


def _segments_or_empty(artefact: Artefact) -> list[Segment]:
    from qeloop.textproc import EmptyAfterSegmentation

    try:
        return segment_artefact(artefact)
    except EmptyAfterSegmentation:
        return []


def _has_quantifier(tokens: list[str], body: str) -> bool:
    return (
        any(t.isdigit() for t in tokens)
        or "%" in body
        or "percent" in tokens
        or any(t in _TIME_UNIT_TOKENS for t in tokens)
    )


def _has_conditional_clause(tokens: list[str]) -> bool:
    # a conditional token with content on both sides separates two clauses
    for pos, t in enumerate(tokens):
        if t in _CONDITIONAL_TOKENS and 0 < pos < len(tokens) - 1:
            return True
    return False


def score_completeness(artefact: Artefact, lexicons: Lexicons) -> int:
    """1 + a point each for actor, action verb, quantifier, and outcome clause."""
    if artefact.kind is not ArtefactKind.REQUIREMENT:
        raise WrongKind(ArtefactKind.REQUIREMENT, artefact.kind)
    tokens = tokenize(artefact.body)
    score = 1
    if any(t in lexicons.actors for t in tokens):
        score += 1
    if any(t in lexicons.verbs for t in tokens):
        score += 1
    if _has_quantifier(tokens, artefact.body):
        score += 1
    if any(t in lexicons.outcomes for t in tokens) or _has_conditional_clause(tokens):
        score += 1
    return _clamp(score)


def score_testability(artefact: Artefact, lexicons: Lexicons) -> int:
    """Quantifier and observable verb each score a point; hygiene points for
    zero ambiguity hits and a single-clause focus are only awarded once the
    artefact shows some substance, so contentless bodies stay at the floor.
    """
    if artefact.kind is not ArtefactKind.REQUIREMENT:
        raise WrongKind(ArtefactKind.REQUIREMENT, artefact.kind)
    tokens = tokenize(artefact.body)
    has_quantifier = _has_quantifier(tokens, artefact.body)
    has_verb = any(t in lexicons.verbs for t in tokens)
    score = 1 + int(has_quantifier) + int(has_verb)
    if has_quantifier or has_verb:
        if not ambiguity_hits(artefact.body, lexicons.ambiguity):
            score += 1
        if tokens.count("and") + tokens.count("or") <= 1:
            score += 1
    return _clamp(score)


def polarity_conflicts(
    segments: list[Segment], lexicons: Lexicons
) -> list[tuple[Segment, Segment]]:
    """Cross-artefact segment pairs with identical entity sets but opposite polarity."""
    profiles = []
    for s in segments:
        profile = extract_entity_verbs(s, lexicons.verbs, lexicons.stopwords | _NEGATION_TOKENS)
        negated = any(t in _NEGATION_TOKENS for t in tokenize(s.text))
        profiles.append((s, profile.entities, negated))
    conflicts = []
    for i in range(len(profiles)):
        for j in range(i + 1, len(profiles)):
            si, ei, ni = profiles[i]
            sj, ej, nj = profiles[j]
            if si.artefact_id == sj.artefact_id:
                continue
            if ei and ei == ej and ni != nj:
                conflicts.append((si, sj))
    return conflicts


def score_consistency(
    corpus: Corpus,
    emb: EmbeddingContext,
    thresholds: Thresholds,
    lexicons: Lexicons,
) -> int:
    """Corpus-level score: 5 minus one per duplicate pair and polarity conflict."""
    if len(corpus) == 0:
        raise EmptyCorpus("consistency")
    segments = segment_corpus(corpus)
    penalty = 0
    if len(segments) >= 2:
        duplicates = [p for p in dedup_intra(segments, emb, thresholds) if p.category is MatchCategory.HIGH]
        penalty += len(duplicates)
        penalty += len(polarity_conflicts(segments, lexicons))
    return _clamp(5 - penalty)


def score_semantic_alignment(
    original: Corpus,
    reverse: Corpus,
    emb: EmbeddingContext,
    thresholds: Thresholds,
) -> int:
    """Map the alignment's mean cosine m onto 1-5 via round-half-up(1 + 4m)."""
    if len(original) == 0:
        raise EmptyCorpus("original")
    if len(reverse) == 0:
        raise EmptyCorpus("reverse")
    if original.kind is not ArtefactKind.REQUIREMENT:
        raise WrongKind(ArtefactKind.REQUIREMENT, original.kind)
    if reverse.kind is not ArtefactKind.REQUIREMENT:
        raise WrongKind(ArtefactKind.REQUIREMENT, reverse.kind)
    result = align_cross(segment_corpus(original), segment_corpus(reverse), emb, thresholds)
    return alignment_score(result.mean_cosine)


def alignment_score(mean_cosine: float) -> int:
    return _clamp(round_half_up(1.0 + 4.0 * mean_cosine))


class HeuristicBackend:
    """Deterministic rubric backend; the normative one for tests and reports."""

    backend_id = HEURISTIC_BACKEND_ID

    def __init__(self, lexicons: Lexicons | None = None):
        self.lexicons = lexicons or Lexicons.default()

    def score_corpus(
        self,
        corpus: Corpus,
        emb: EmbeddingContext,
        thresholds: Thresholds,
        semantic_alignment: int,
    ) -> dict[str, RubricScores]:
        """Score every artefact; consistency is corpus-level and broadcast."""
        consistency = score_consistency(corpus, emb, thresholds, self.lexicons)
        scores: dict[str, RubricScores] = {}
        for a in corpus:
            scores[a.id] = RubricScores(
                clarity=score_clarity(a, self.lexicons.ambiguity),
                completeness=score_completeness(a, self.lexicons),
                testability=score_testability(a, self.lexicons),
                consistency=consistency,
                semantic_alignment=semantic_alignment,
                backend_id=self.backend_id,
            )
        return scores

    def segment_robustness(self, text: str) -> int:
        """Clarity+completeness+testability sum for one segment, used when
        choosing between original and reverse wordings."""
        probe = Artefact(id="seg", kind=ArtefactKind.REQUIREMENT, body=text)
        return (
            score_clarity(probe, self.lexicons.ambiguity)
            + score_completeness(probe, self.lexicons)
            + score_testability(probe, self.lexicons)
        )


_JUDGE_SCORE_RE = re.compile(
    r"(clarity|completeness|testability|consistency)\s*[:=]\s*([1-5])", re.IGNORECASE
)

METRIC_DEFINITIONS = (
    "clarity: absence of ambiguity and ease of understanding\n"
    "completeness: coverage of all relevant functional and non-functional aspects\n"
    "testability: ease with which the artefact can be validated through test cases\n"
    "consistency: logical coherence across artefacts, no duplicates or contradictions\n"
)


class MalformedJudgeOutput(RubricError):
    def __init__(self, raw: str):
        self.raw = raw
        super().__init__("judge response did not contain four metric scores")


class LlmJudgeBackend:
    """Optional judge backend: renders the rubric prompt and parses integer scores.

    Consistency and semantic alignment stay computed (they are corpus-level
    properties); the judge covers the per-artefact text metrics.
    """

    backend_id = "llm-judge-v1"

    def __init__(self, chat, prompt_template: str, stats=None):
        self._chat = chat
        self._template = prompt_template
        self._stats = stats

    def score_artefact_text(self, artefact: Artefact) -> dict[str, int]:
        prompt = self._template.format(
            artefact_body=artefact.body, metric_definitions=METRIC_DEFINITIONS
        )
        response = self._chat.complete(prompt)
        if self._stats is not None:
            self._stats.add_judge_ops(1)
        found = {m.group(1).lower(): int(m.group(2)) for m in _JUDGE_SCORE_RE.finditer(response)}
        if not {"clarity", "completeness", "testability"} <= set(found):
            raise MalformedJudgeOutput(response)
        return found


class JudgeScoringBackend(HeuristicBackend):
    """Config-selected variant: the judge scores the per-artefact text metrics,
    while consistency (pairwise, corpus-level), semantic alignment, and the
    synthesis robustness comparator stay heuristic/computed."""

    backend_id = "llm-judge-v1"

    def __init__(self, judge: LlmJudgeBackend, lexicons: Lexicons | None = None):
        super().__init__(lexicons)
        self._judge = judge

    def score_corpus(
        self,
        corpus: Corpus,
        emb: EmbeddingContext,
        thresholds: Thresholds,
        semantic_alignment: int,
    ) -> dict[str, RubricScores]:
        consistency = score_consistency(corpus, emb, thresholds, self.lexicons)
        scores: dict[str, RubricScores] = {}
        for a in corpus:
            judged = self._judge.score_artefact_text(a)
            scores[a.id] = RubricScores(
                clarity=judged["clarity"],
                completeness=judged["completeness"],
                testability=judged["testability"],
                consistency=consistency,
                semantic_alignment=semantic_alignment,
                backend_id=self.backend_id,
            )
        return scores
