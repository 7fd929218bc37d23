"""Semantic/lexical similarity kernels, match classification, and alignment.

Scores are classified into four bands (defaults 0.8 / 0.6 / 0.3):
High is strictly above the high threshold, Medium is the closed band
[medium, high], Low is [low, medium), and everything below low is NoMatch.
Cross-set alignment uses deterministic greedy best-first matching, which is
explainable to reviewers and within a factor of two of the optimal total.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from qeloop.embedding import EmbeddingContext, EmbeddingVector
from qeloop.textproc import Segment


class SimilarityError(Exception):
    pass


class DimensionMismatch(SimilarityError):
    def __init__(self, left: int, right: int):
        super().__init__(f"vector dims differ: {left} vs {right}")


class ProviderMismatch(SimilarityError):
    def __init__(self, left: str, right: str):
        super().__init__(f"vectors from different providers: {left!r} vs {right!r}")


class TooFewSegments(SimilarityError):
    def __init__(self, count: int):
        super().__init__(f"need at least 2 segments, got {count}")


@dataclass(frozen=True)
class Thresholds:
    high: float = 0.8
    medium: float = 0.6
    low: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.low < self.medium < self.high < 1.0):
            raise ValueError(
                f"thresholds must satisfy 0 < low < medium < high < 1, "
                f"got {self.low}/{self.medium}/{self.high}"
            )


class MatchCategory(IntEnum):
    NO_MATCH = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return {"NO_MATCH": "NoMatch", "LOW": "Low", "MEDIUM": "Medium", "HIGH": "High"}[self.name]


@dataclass(frozen=True)
class MatchPair:
    left: Segment
    right: Segment | None
    cosine: float
    jaccard: float
    category: MatchCategory

    def __post_init__(self):
        if self.right is None and (self.category is not MatchCategory.NO_MATCH or self.cosine != 0.0):
            raise ValueError("unmatched pairs must be NoMatch with cosine 0")


@dataclass(frozen=True)
class AlignmentResult:
    pairs: tuple[MatchPair, ...]
    mean_cosine: float

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Dot product of unit vectors, clamped to [0, 1]; zero vectors score 0."""
    if u.dim != v.dim:
        raise DimensionMismatch(u.dim, v.dim)
    if u.provider_id != v.provider_id:
        raise ProviderMismatch(u.provider_id, v.provider_id)
    if u.is_zero() or v.is_zero():
        return 0.0
    dot = sum(a * b for a, b in zip(u.values, v.values))
    return min(1.0, max(0.0, dot))


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """Lexical overlap |a∩b| / |a∪b|; two empty sets count as identical (1.0)."""
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union


def classify(score: float, thresholds: Thresholds = Thresholds()) -> MatchCategory:
    if score > thresholds.high:
        return MatchCategory.HIGH
    if score >= thresholds.medium:
        return MatchCategory.MEDIUM
    if score >= thresholds.low:
        return MatchCategory.LOW
    return MatchCategory.NO_MATCH


def greedy_match(
    scores: Sequence[Sequence[float]], floor: float
) -> list[tuple[int, int]]:
    """Greedy best-first matching over a left x right score matrix.

    Repeatedly takes the highest-scoring unmatched (left, right) cell at or
    above ``floor``; ties break toward the lower left index, then the lower
    right index. The result is independent of evaluation order.
    """
    cells = [
        (scores[i][j], i, j)
        for i in range(len(scores))
        for j in range(len(scores[i]))
        if scores[i][j] >= floor
    ]
    cells.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_left: set[int] = set()
    used_right: set[int] = set()
    matches: list[tuple[int, int]] = []
    for _, i, j in cells:
        if i in used_left or j in used_right:
            continue
        matches.append((i, j))
        used_left.add(i)
        used_right.add(j)
    return matches


def align_cross(
    left: Sequence[Segment],
    right: Sequence[Segment],
    emb: EmbeddingContext,
    thresholds: Thresholds = Thresholds(),
) -> AlignmentResult:
    """Greedy global alignment of two segment sets under one provider.

    Every left segment appears in exactly one pair (unmatched ones as NoMatch
    with cosine 0); no right segment is used twice. ``mean_cosine`` averages
    over left segments, counting unmatched as 0.
    """
    left = list(left)
    right = list(right)
    left_vectors = emb.vectors_for([s.text for s in left]) if left else []
    right_vectors = emb.vectors_for([s.text for s in right]) if right else []
    matrix = [
        [cosine(lv, rv) for rv in right_vectors]
        for lv in left_vectors
    ]
    matched = dict(greedy_match(matrix, thresholds.low))

    pairs: list[MatchPair] = []
    total = 0.0
    for i, seg in enumerate(left):
        j = matched.get(i)
        if j is None:
            pairs.append(
                MatchPair(left=seg, right=None, cosine=0.0, jaccard=0.0,
                          category=MatchCategory.NO_MATCH)
            )
            continue
        score = matrix[i][j]
        total += score
        pairs.append(
            MatchPair(
                left=seg,
                right=right[j],
                cosine=score,
                jaccard=jaccard(emb.token_set(seg.text), emb.token_set(right[j].text)),
                category=classify(score, thresholds),
            )
        )
    mean = total / len(left) if left else 0.0
    return AlignmentResult(pairs=tuple(pairs), mean_cosine=mean)


def dedup_intra(
    segments: Sequence[Segment],
    emb: EmbeddingContext,
    thresholds: Thresholds = Thresholds(),
) -> list[MatchPair]:
    """All cross-artefact segment pairs scoring Medium or better, best first.

    Pairs within one artefact are skipped; sentences restating themselves
    inside a single artefact are not duplicates.
    """
    segments = list(segments)
    if len(segments) < 2:
        raise TooFewSegments(len(segments))
    vectors = emb.vectors_for([s.text for s in segments])
    found: list[MatchPair] = []
    for i in range(len(segments)):
        for j in range(i + 1, len(segments)):
            if segments[i].artefact_id == segments[j].artefact_id:
                continue
            score = cosine(vectors[i], vectors[j])
            category = classify(score, thresholds)
            if category >= MatchCategory.MEDIUM:
                found.append(
                    MatchPair(
                        left=segments[i],
                        right=segments[j],
                        cosine=score,
                        jaccard=jaccard(
                            emb.token_set(segments[i].text), emb.token_set(segments[j].text)
                        ),
                        category=category,
                    )
                )
    found.sort(
        key=lambda p: (
            -p.cosine,
            p.left.artefact_id,
            p.left.index,
            p.right.artefact_id,
            p.right.index,
        )
    )
    return found
