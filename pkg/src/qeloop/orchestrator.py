"""Closed-loop refinement: reverse generation, alignment, recommendations,
rubric scoring, human decisions, unified synthesis, and convergence.

One cycle reverse-generates requirements from the derived artefacts, aligns
them against the originals, classifies every pair, queues recommendations,
and rescores the rubric. Between cycles the reviewer's decisions are applied
and a unified working corpus is synthesized: matched pairs adopt the
higher-scoring wording (ties keep the original), while explicit decisions
always win. The loop stops when the convergence deltas flatten, when the
queue empties (a fixpoint: with nothing pending, re-running cannot change
state), or at the cycle cap.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

from qeloop.artefacts import Artefact, ArtefactKind, Corpus, Origin
from qeloop.embedding import EmbeddingContext
from qeloop.generation import (
    ChatProvider,
    DegradationSpec,
    GenerationStats,
    degrade,
    forward_generate,
    reverse_generate,
    trace_id_of,
)
from qeloop.reporting import (
    ImpactRow,
    SemanticResultRow,
    SummaryRecord,
    UpdatedRequirementRow,
)
from qeloop.rubric import HeuristicBackend, RubricScores, alignment_score
from qeloop.similarity import (
    AlignmentResult,
    MatchCategory,
    MatchPair,
    Thresholds,
    align_cross,
    classify,
    dedup_intra,
)
from qeloop.textproc import Segment, extract_entity_verbs, segment_artefact, segment_corpus

DEFAULT_MAX_CYCLES = 3
DEFAULT_RUBRIC_DELTA = 0.1
DEFAULT_COSINE_DELTA = 0.02


class OrchestrationError(Exception):
    pass


class CycleLimitExceeded(OrchestrationError):
    def __init__(self, max_cycles: int):
        self.max_cycles = max_cycles
        super().__init__(f"cycle limit of {max_cycles} reached")


class UnknownPairId(OrchestrationError):
    def __init__(self, pair_id: str):
        self.pair_id = pair_id
        super().__init__(f"no queued recommendation with pair id {pair_id!r}")


class ConflictingDecisions(OrchestrationError):
    def __init__(self, pair_id: str):
        self.pair_id = pair_id
        super().__init__(f"conflicting decisions for pair id {pair_id!r}")


class AlreadyDecided(OrchestrationError):
    def __init__(self, pair_id: str):
        self.pair_id = pair_id
        super().__init__(f"pair id {pair_id!r} already has a decision")


class RecommendationAction(str, Enum):
    MERGE = "Merge"
    REFINE = "Refine"
    KEEP_DISTINCT = "KeepDistinct"
    ADD_COVERAGE = "AddCoverage"


@dataclass(frozen=True)
class Recommendation:
    pair_id: str
    pair: MatchPair
    scope: str  # "cross" or "intra"
    action: RecommendationAction
    rationale: str
    testing_impact: str
    requires_human: bool
    suggested_text: str | None = None


@dataclass(frozen=True)
class ReviewDecision:
    pair_id: str
    verdict: RecommendationAction
    edited_text: str | None = None
    reviewer: str = ""
    decided_at: str = ""

    def __post_init__(self):
        if self.verdict is RecommendationAction.REFINE and self.edited_text is not None:
            if not self.edited_text.strip():
                raise ValueError("Refine decision with edited_text must carry non-empty text")


def pair_key(pair: MatchPair, scope: str) -> str:
    right = f"{pair.right.artefact_id}#{pair.right.index}" if pair.right else "-"
    return f"{scope}:{pair.left.artefact_id}#{pair.left.index}->{right}"


@dataclass
class CycleState:
    """Everything one refinement run carries between cycles."""

    original: Corpus
    working: Corpus
    derived: Corpus | None
    cycle: int  # number of the next cycle to run; history holds completed ones
    max_cycles: int
    stats: GenerationStats
    reverse: Corpus | None = None
    alignment: AlignmentResult | None = None
    dedup_pairs: tuple[MatchPair, ...] = ()
    scores: dict[str, RubricScores] = field(default_factory=dict)
    history: tuple[SummaryRecord, ...] = ()
    queue: tuple[Recommendation, ...] = ()
    decisions: dict[str, ReviewDecision] = field(default_factory=dict)
    suppressed: frozenset[str] = frozenset()
    semantic_rows: tuple[SemanticResultRow, ...] = ()
    impact_rows: tuple[ImpactRow, ...] = ()
    updated_rows: tuple[UpdatedRequirementRow, ...] = ()


@dataclass
class RunContext:
    """Providers and tunables shared by every operation in a run."""

    emb: EmbeddingContext
    chat: ChatProvider
    thresholds: Thresholds = Thresholds()
    backend: HeuristicBackend = field(default_factory=HeuristicBackend)
    target_kind: ArtefactKind = ArtefactKind.TEST_CASE
    batch_size: int = 10
    max_cycles: int = DEFAULT_MAX_CYCLES
    rubric_delta: float = DEFAULT_RUBRIC_DELTA
    cosine_delta: float = DEFAULT_COSINE_DELTA
    clock: Callable[[], str] = lambda: "1970-01-01T00:00:00+00:00"
    forward_template: str | None = None  # None = shipped default
    reverse_template: str | None = None


def _overlap_phrase(left: Segment, right: Segment | None, ctx: RunContext) -> str:
    if right is None:
        return "no counterpart"
    lex = ctx.backend.lexicons
    lp = extract_entity_verbs(left, lex.verbs, lex.stopwords)
    rp = extract_entity_verbs(right, lex.verbs, lex.stopwords)
    entities = sorted(lp.entities & rp.entities)
    verbs = sorted(lp.verbs & rp.verbs)
    return f"shared entities [{', '.join(entities) or '-'}], shared verbs [{', '.join(verbs) or '-'}]"


_TESTING_IMPACT = {
    RecommendationAction.MERGE: "Duplicate coverage: merging removes a redundant artefact from the test surface.",
    RecommendationAction.REFINE: "Derived tests must be regenerated after the wording is refined.",
    RecommendationAction.KEEP_DISTINCT: "No test change: the artefacts are related but verify distinct behavior.",
    RecommendationAction.ADD_COVERAGE: "Uncovered requirement: derived artefacts verify none of this content.",
}


def _recommendation(
    pair: MatchPair, scope: str, action: RecommendationAction,
    requires_human: bool, ctx: RunContext, suggested: str | None,
) -> Recommendation:
    left_id = f"{pair.left.artefact_id}#{pair.left.index}"
    right_id = f"{pair.right.artefact_id}#{pair.right.index}" if pair.right else "(unmatched)"
    rationale = (
        f"Segments {left_id} and {right_id} score cosine {pair.cosine:.4f} "
        f"(jaccard {pair.jaccard:.4f}, {pair.category.label}); "
        f"{_overlap_phrase(pair.left, pair.right, ctx)}; suggested action: {action.value}."
    )
    return Recommendation(
        pair_id=pair_key(pair, scope),
        pair=pair,
        scope=scope,
        action=action,
        rationale=rationale,
        testing_impact=_TESTING_IMPACT[action],
        requires_human=requires_human,
        suggested_text=suggested,
    )


def build_review_queue(
    alignment: AlignmentResult,
    dedup: Sequence[MatchPair],
    ctx: RunContext,
    suppressed: frozenset[str] = frozenset(),
) -> list[Recommendation]:
    """Map match categories onto recommended actions.

    Cross-set: Medium -> Refine (human), Low -> Refine (auto-suggested),
    NoMatch -> AddCoverage, High -> aligned, no item. Intra-corpus: High ->
    Merge, Medium -> KeepDistinct (human confirms). Suppressed pairs
    (previous KeepDistinct verdicts) are skipped. Ordering is stable:
    descending cosine, then pair id.
    """
    items: list[Recommendation] = []
    for pair in alignment.pairs:
        key = pair_key(pair, "cross")
        if key in suppressed:
            continue
        if pair.category is MatchCategory.HIGH:
            continue
        if pair.category is MatchCategory.NO_MATCH:
            items.append(
                _recommendation(pair, "cross", RecommendationAction.ADD_COVERAGE, True, ctx,
                                suggested=pair.left.text)
            )
            continue
        better = _better_text(pair, ctx)
        items.append(
            _recommendation(
                pair, "cross", RecommendationAction.REFINE,
                requires_human=pair.category is MatchCategory.MEDIUM,
                ctx=ctx, suggested=better,
            )
        )
    for pair in dedup:
        key = pair_key(pair, "intra")
        if key in suppressed:
            continue
        if pair.category is MatchCategory.HIGH:
            items.append(_recommendation(pair, "intra", RecommendationAction.MERGE, True, ctx, None))
        else:
            items.append(
                _recommendation(pair, "intra", RecommendationAction.KEEP_DISTINCT, True, ctx, None)
            )
    items.sort(key=lambda r: (-r.pair.cosine, r.pair_id))
    return items


def _better_text(pair: MatchPair, ctx: RunContext) -> str:
    """The higher-robustness wording of a matched pair; ties keep the original."""
    if pair.right is None:
        return pair.left.text
    left_score = ctx.backend.segment_robustness(pair.left.text)
    right_score = ctx.backend.segment_robustness(pair.right.text)
    return pair.right.text if right_score > left_score else pair.left.text


def _histogram(alignment: AlignmentResult) -> dict[MatchCategory, int]:
    counts = {c: 0 for c in MatchCategory}
    for pair in alignment.pairs:
        counts[pair.category] += 1
    return counts


def _semantic_rows(
    alignment: AlignmentResult, queue: Sequence[Recommendation]
) -> list[SemanticResultRow]:
    by_key = {item.pair_id: item for item in queue}
    rows = []
    for pair in alignment.pairs:
        item = by_key.get(pair_key(pair, "cross"))
        rows.append(
            SemanticResultRow(
                left_id=f"{pair.left.artefact_id}#{pair.left.index}",
                right_id=f"{pair.right.artefact_id}#{pair.right.index}" if pair.right else None,
                left_text=pair.left.text,
                right_text=pair.right.text if pair.right else "",
                cosine=pair.cosine,
                jaccard=pair.jaccard,
                category=pair.category.label,
                action=item.action.value if item else "None",
                rationale=item.rationale if item else "Aligned; no action required.",
                testing_impact=item.testing_impact if item else "None.",
            )
        )
    return rows


def _impact_rows(working: Corpus, derived: Corpus, ctx: RunContext) -> list[ImpactRow]:
    rows = []
    for artefact in derived:
        req_id = trace_id_of(artefact)
        req = working.get(req_id)
        if req is None:
            continue
        from qeloop.similarity import cosine as cosine_fn

        score = cosine_fn(ctx.emb.vector_for(req.body), ctx.emb.vector_for(artefact.body))
        category = classify(score, ctx.thresholds)
        note = (
            "Strong trace: derived artefact preserves requirement intent."
            if category >= MatchCategory.MEDIUM
            else "Weak trace: derived artefact drifts from requirement intent."
        )
        rows.append(
            ImpactRow(
                requirement_id=req_id,
                linked_artefact_id=artefact.id,
                traceability_cosine=score,
                impact_note=note,
            )
        )
    return rows


def run_cycle(state: CycleState, ctx: RunContext) -> CycleState:
    """Execute one refinement cycle and append its summary to history."""
    if len(state.working) == 0:
        raise OrchestrationError("working corpus is empty")
    if state.cycle > state.max_cycles:
        raise CycleLimitExceeded(state.max_cycles)

    derived = state.derived
    if derived is None:
        derived = forward_generate(
            state.working, ctx.target_kind, ctx.chat, state.stats, ctx.batch_size,
            template=ctx.forward_template,
        )
    reverse = reverse_generate(
        derived, ctx.chat, state.stats, ctx.batch_size,
        template=ctx.reverse_template, source_cycle=state.cycle,
    )
    alignment = align_cross(
        segment_corpus(state.original), segment_corpus(reverse), ctx.emb, ctx.thresholds
    )
    working_segments = segment_corpus(state.working)
    dedup = (
        dedup_intra(working_segments, ctx.emb, ctx.thresholds)
        if len(working_segments) >= 2
        else []
    )
    semantic = alignment_score(alignment.mean_cosine)
    scores = ctx.backend.score_corpus(reverse, ctx.emb, ctx.thresholds, semantic)
    queue = build_review_queue(alignment, dedup, ctx, state.suppressed)

    histogram = _histogram(alignment)
    values = list(scores.values())
    summary = SummaryRecord(
        cycle=state.cycle,
        mean_cosine=alignment.mean_cosine,
        count_high=histogram[MatchCategory.HIGH],
        count_medium=histogram[MatchCategory.MEDIUM],
        count_low=histogram[MatchCategory.LOW],
        count_no_match=histogram[MatchCategory.NO_MATCH],
        mean_clarity=sum(s.clarity for s in values) / len(values),
        mean_completeness=sum(s.completeness for s in values) / len(values),
        mean_testability=sum(s.testability for s in values) / len(values),
        mean_consistency=sum(s.consistency for s in values) / len(values),
        mean_semantic_alignment=sum(s.semantic_alignment for s in values) / len(values),
        forward_ops=state.stats.forward_ops,
        reverse_ops=state.stats.reverse_ops,
        judge_ops=state.stats.judge_ops,
    )
    return replace(
        state,
        derived=derived,
        reverse=reverse,
        alignment=alignment,
        dedup_pairs=tuple(dedup),
        scores=scores,
        queue=tuple(queue),
        decisions={},
        history=state.history + (summary,),
        cycle=state.cycle + 1,
        semantic_rows=tuple(_semantic_rows(alignment, queue)),
        impact_rows=tuple(_impact_rows(state.working, derived, ctx)),
        updated_rows=(),
    )


def validate_decisions(
    queue: Sequence[Recommendation],
    existing: dict[str, ReviewDecision],
    decisions: Iterable[ReviewDecision],
) -> dict[str, ReviewDecision]:
    """Check a decision batch atomically; nothing is accepted if any item fails."""
    known = {item.pair_id for item in queue}
    accepted: dict[str, ReviewDecision] = {}
    for decision in decisions:
        if decision.pair_id not in known:
            raise UnknownPairId(decision.pair_id)
        if decision.pair_id in existing:
            raise AlreadyDecided(decision.pair_id)
        if decision.pair_id in accepted:
            if accepted[decision.pair_id].verdict is not decision.verdict:
                raise ConflictingDecisions(decision.pair_id)
            continue
        accepted[decision.pair_id] = decision
    return accepted


def _segment_texts(artefact: Artefact) -> list[str]:
    from qeloop.textproc import EmptyAfterSegmentation

    try:
        return [s.text for s in segment_artefact(artefact)]
    except EmptyAfterSegmentation:
        return [artefact.body]


def _rebuild(artefact: Artefact, texts: list[str], cycle: int) -> Artefact | None:
    kept = [t for t in texts if t is not None and t.strip()]
    if not kept:
        return None
    joiner = " " if artefact.kind is ArtefactKind.REQUIREMENT else "\n"
    return Artefact(
        id=artefact.id,
        kind=artefact.kind,
        body=joiner.join(kept),
        title=artefact.title,
        origin=Origin.UNIFIED,
        source_cycle=cycle,
    )


def _locate_slot(
    slots: dict[str, list[str]], reference: Segment, emb: EmbeddingContext
) -> tuple[str, int] | None:
    """Find the working segment a reverse-side segment refers to.

    The trace id names the artefact; the segment index matches when the
    segmentations line up, otherwise the closest segment by cosine wins.
    """
    texts = slots.get(reference.artefact_id)
    if texts is None:
        return None
    if reference.index < len(texts):
        return reference.artefact_id, reference.index
    from qeloop.similarity import cosine as cosine_fn

    best, best_score = None, -1.0
    target = emb.vector_for(reference.text)
    for i, text in enumerate(texts):
        if text is None or not text.strip():
            continue
        score = cosine_fn(emb.vector_for(text), target)
        if score > best_score:
            best, best_score = i, score
    return (reference.artefact_id, best) if best is not None else None


def apply_decisions(
    state: CycleState, decisions: Sequence[ReviewDecision], ctx: RunContext
) -> CycleState:
    """Apply reviewer verdicts to the working corpus, atomically.

    Merge removes the duplicated segment; Refine with text replaces the
    traced segment; KeepDistinct suppresses the pair from future queues;
    AddCoverage appends a new requirement built from the unmatched segment
    (or the reviewer's edit). On any validation error the state is returned
    untouched by the raised exception.
    """
    accepted = validate_decisions(state.queue, state.decisions, decisions)
    queue_by_id = {item.pair_id: item for item in state.queue}

    slots: dict[str, list[str]] = {a.id: _segment_texts(a) for a in state.working}
    changed: set[str] = set()
    appended: list[Artefact] = []
    suppressed = set(state.suppressed)
    updated: list[UpdatedRequirementRow] = []
    cycle = len(state.history)  # decisions belong to the just-completed cycle

    def record(req_id: str, prior: str, new: str, action: RecommendationAction, reviewer: str):
        updated.append(
            UpdatedRequirementRow(
                requirement_id=req_id,
                cycle=max(cycle, 1),
                prior_text=prior,
                updated_text=new,
                action_applied=action.value,
                reviewer=reviewer,
            )
        )

    add_counter = 0
    for pair_id, decision in accepted.items():
        item = queue_by_id[pair_id]
        pair = item.pair
        if decision.verdict is RecommendationAction.KEEP_DISTINCT:
            suppressed.add(pair_id)
            left_text = pair.left.text
            record(pair.left.artefact_id, left_text, left_text,
                   RecommendationAction.KEEP_DISTINCT, decision.reviewer)
            continue
        if decision.verdict is RecommendationAction.MERGE:
            if pair.right is None:
                raise UnknownPairId(pair_id)
            slot = _locate_slot(slots, pair.right, ctx.emb)
            if slot is not None:
                artefact_id, index = slot
                prior = slots[artefact_id][index]
                slots[artefact_id][index] = None
                changed.add(artefact_id)
                record(artefact_id, prior, "", RecommendationAction.MERGE, decision.reviewer)
            continue
        if decision.verdict is RecommendationAction.REFINE:
            new_text = decision.edited_text or item.suggested_text or pair.left.text
            reference = pair.right if pair.right is not None else pair.left
            slot = _locate_slot(slots, reference, ctx.emb)
            if slot is not None:
                artefact_id, index = slot
                prior = slots[artefact_id][index]
                if prior != new_text:
                    slots[artefact_id][index] = new_text
                    changed.add(artefact_id)
                    record(artefact_id, prior or "", new_text,
                           RecommendationAction.REFINE, decision.reviewer)
            continue
        # AddCoverage
        add_counter += 1
        text = decision.edited_text or item.suggested_text or pair.left.text
        new_id = f"{pair.left.artefact_id}-cov{add_counter}"
        existing_ids = set(slots) | {a.id for a in appended}
        while new_id in existing_ids:
            add_counter += 1
            new_id = f"{pair.left.artefact_id}-cov{add_counter}"
        appended.append(
            Artefact(
                id=new_id,
                kind=state.working.kind,
                body=text,
                title="",
                origin=Origin.UNIFIED,
                source_cycle=max(cycle, 1),
            )
        )
        record(new_id, "", text, RecommendationAction.ADD_COVERAGE, decision.reviewer)

    artefacts: list[Artefact] = []
    for artefact in state.working:
        if artefact.id not in changed:
            artefacts.append(artefact)
            continue
        rebuilt = _rebuild(artefact, slots[artefact.id], max(cycle, 1))
        if rebuilt is not None:
            artefacts.append(rebuilt)
    artefacts.extend(appended)

    merged_decisions = dict(state.decisions)
    merged_decisions.update(accepted)
    working = state.working.with_artefacts(artefacts) if (changed or appended) else state.working
    return replace(
        state,
        working=working,
        decisions=merged_decisions,
        suppressed=frozenset(suppressed),
        updated_rows=state.updated_rows + tuple(updated),
    )


def synthesize_unified(
    original: Corpus,
    reverse: Corpus,
    alignment: AlignmentResult,
    decisions: dict[str, ReviewDecision],
    ctx: RunContext,
    base: Corpus | None = None,
    cycle: int = 1,
) -> tuple[Corpus, list[UpdatedRequirementRow]]:
    """Merge the stronger wording of each matched pair into the working corpus.

    Pairs with an explicit decision are left alone (apply_decisions already
    honored the reviewer); the remaining matched pairs auto-adopt whichever
    side scores higher on clarity+completeness+testability, original on ties.
    """
    base = base if base is not None else original
    slots: dict[str, list[str]] = {a.id: _segment_texts(a) for a in base}
    changed: set[str] = set()
    updated: list[UpdatedRequirementRow] = []

    for pair in alignment.pairs:
        if pair.right is None:
            continue
        if pair_key(pair, "cross") in decisions:
            continue
        chosen = _better_text(pair, ctx)
        slot = _locate_slot(slots, pair.right, ctx.emb)
        if slot is None:
            continue
        artefact_id, index = slot
        prior = slots[artefact_id][index]
        if prior is None or prior == chosen:
            continue
        if ctx.backend.segment_robustness(chosen) > ctx.backend.segment_robustness(prior):
            slots[artefact_id][index] = chosen
            changed.add(artefact_id)
            updated.append(
                UpdatedRequirementRow(
                    requirement_id=artefact_id,
                    cycle=cycle,
                    prior_text=prior,
                    updated_text=chosen,
                    action_applied=RecommendationAction.REFINE.value,
                    reviewer="auto",
                )
            )

    if not changed:
        return base, updated
    artefacts = []
    for artefact in base:
        if artefact.id not in changed:
            artefacts.append(artefact)
            continue
        rebuilt = _rebuild(artefact, slots[artefact.id], cycle)
        if rebuilt is not None:
            artefacts.append(rebuilt)
    return base.with_artefacts(artefacts), updated


def check_convergence(
    history: Sequence[SummaryRecord],
    max_cycles: int = DEFAULT_MAX_CYCLES,
    rubric_delta: float = DEFAULT_RUBRIC_DELTA,
    cosine_delta: float = DEFAULT_COSINE_DELTA,
) -> bool:
    """True when quality deltas flatten or the cycle budget is spent."""
    if not history:
        raise OrchestrationError("convergence check requires at least one cycle")
    latest = history[-1]
    if latest.cycle >= max_cycles:
        return True
    if len(history) < 2:
        return False
    previous = history[-2]
    return (
        abs(latest.mean_rubric() - previous.mean_rubric()) < rubric_delta
        and abs(latest.mean_cosine - previous.mean_cosine) < cosine_delta
    )


@dataclass(frozen=True)
class NegativeValidationReport:
    level: float
    ambiguity_injection: bool
    baseline_mean_cosine: float
    degraded_mean_cosine: float
    baseline_histogram: dict[str, int]
    degraded_histogram: dict[str, int]
    baseline_mean_rubric: float
    degraded_mean_rubric: float
    degraded_mean_category: str
    passed: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "ambiguity_injection": self.ambiguity_injection,
            "baseline_mean_cosine": self.baseline_mean_cosine,
            "degraded_mean_cosine": self.degraded_mean_cosine,
            "baseline_histogram": self.baseline_histogram,
            "degraded_histogram": self.degraded_histogram,
            "baseline_mean_rubric": self.baseline_mean_rubric,
            "degraded_mean_rubric": self.degraded_mean_rubric,
            "degraded_mean_category": self.degraded_mean_category,
            "passed": self.passed,
            "reason": self.reason,
        }


def _label_histogram(alignment: AlignmentResult) -> dict[str, int]:
    histogram = _histogram(alignment)
    return {category.label: histogram[category] for category in MatchCategory}


def negative_validation(
    corpus: Corpus, spec: DegradationSpec, ctx: RunContext
) -> NegativeValidationReport:
    """Run the pipeline on pristine and degraded input and compare outcomes.

    The degraded run is aligned against the pristine originals, so dropped
    content shows up as low similarity instead of round-tripping cleanly.
    """

    def one_pass(input_corpus: Corpus) -> tuple[AlignmentResult, float]:
        stats = GenerationStats()
        derived = forward_generate(
            input_corpus, ctx.target_kind, ctx.chat, stats, ctx.batch_size,
            template=ctx.forward_template,
        )
        reverse = reverse_generate(
            derived, ctx.chat, stats, ctx.batch_size, template=ctx.reverse_template
        )
        alignment = align_cross(
            segment_corpus(corpus), segment_corpus(reverse), ctx.emb, ctx.thresholds
        )
        scores = ctx.backend.score_corpus(
            reverse, ctx.emb, ctx.thresholds, alignment_score(alignment.mean_cosine)
        )
        mean_rubric = sum(s.mean() for s in scores.values()) / len(scores)
        return alignment, mean_rubric

    baseline_alignment, baseline_rubric = one_pass(corpus)
    degraded_corpus = degrade(corpus, spec)
    degraded_alignment, degraded_rubric = one_pass(degraded_corpus)

    degraded_category = classify(degraded_alignment.mean_cosine, ctx.thresholds)
    if spec.level == 0.0:
        passed, reason = False, "no degradation"
    else:
        checks = []
        if degraded_category > MatchCategory.LOW:
            checks.append("degraded mean category above Low")
        if not degraded_rubric < baseline_rubric:
            checks.append("degraded rubric not below baseline")
        passed = not checks
        reason = "degradation detected" if passed else "; ".join(checks)

    return NegativeValidationReport(
        level=spec.level,
        ambiguity_injection=spec.ambiguity_injection,
        baseline_mean_cosine=baseline_alignment.mean_cosine,
        degraded_mean_cosine=degraded_alignment.mean_cosine,
        baseline_histogram=_label_histogram(baseline_alignment),
        degraded_histogram=_label_histogram(degraded_alignment),
        baseline_mean_rubric=baseline_rubric,
        degraded_mean_rubric=degraded_rubric,
        degraded_mean_category=degraded_category.label,
        passed=passed,
        reason=reason,
    )


class SessionStatus(str, Enum):
    AWAITING_REVIEW = "AwaitingReview"
    RUNNING = "Running"
    CONVERGED = "Converged"
    CYCLE_LIMIT = "CycleLimit"


class WrongState(OrchestrationError):
    def __init__(self, status: SessionStatus):
        self.status = status
        super().__init__(f"operation not allowed in state {status.value}")


class Session:
    """Single-writer driver for one refinement run.

    Decisions arriving during a cycle are queued and applied only between
    cycles; ``advance`` is guarded by a non-blocking lock so concurrent
    callers observe exactly one success.
    """

    def __init__(
        self,
        session_id: str,
        project_id: str,
        state: CycleState,
        ctx: RunContext,
        audit: Callable[[dict], None] | None = None,
    ):
        self.session_id = session_id
        self.project_id = project_id
        self.state = state
        self.ctx = ctx
        self.status = SessionStatus.AWAITING_REVIEW
        self.transitions: list[str] = []
        self._audit = audit or (lambda record: None)
        self._lock = threading.Lock()
        self.cycle_outputs: dict[int, dict] = {}

    @classmethod
    def start(
        cls,
        session_id: str,
        project_id: str,
        original: Corpus,
        ctx: RunContext,
        working: Corpus | None = None,
        audit: Callable[[dict], None] | None = None,
    ) -> "Session":
        state = CycleState(
            original=original,
            working=working if working is not None else original,
            derived=None,
            cycle=1,
            max_cycles=ctx.max_cycles,
            stats=GenerationStats(),
        )
        session = cls(session_id, project_id, state, ctx, audit)
        session._transition(SessionStatus.RUNNING)
        session.state = run_cycle(state, ctx)
        session._capture_cycle_outputs()
        session._settle_status()
        return session

    def _capture_cycle_outputs(self):
        completed = len(self.state.history)
        self.cycle_outputs[completed] = {
            "semantic_results": list(self.state.semantic_rows),
            "impact_analysis": list(self.state.impact_rows),
            "updated_requirements": list(self.state.updated_rows),
        }

    def _transition(self, status: SessionStatus):
        if status is self.status:
            return
        self.transitions.append(f"{self.status.value}->{status.value}")
        self.status = status

    def _settle_status(self):
        history = self.state.history
        if not self.state.queue:
            self._transition(SessionStatus.CONVERGED)
            return
        delta_converged = len(history) >= 2 and (
            abs(history[-1].mean_rubric() - history[-2].mean_rubric()) < self.ctx.rubric_delta
            and abs(history[-1].mean_cosine - history[-2].mean_cosine) < self.ctx.cosine_delta
        )
        if delta_converged:
            # converged with pending suggestions: drop them so the terminal
            # snapshot honors "converged implies empty queue"
            self.state = replace(self.state, queue=())
            self._transition(SessionStatus.CONVERGED)
        elif history[-1].cycle >= self.state.max_cycles:
            self._transition(SessionStatus.CYCLE_LIMIT)
        else:
            self._transition(SessionStatus.AWAITING_REVIEW)

    def submit_decisions(self, decisions: Sequence[ReviewDecision]) -> int:
        if self.status is not SessionStatus.AWAITING_REVIEW:
            raise WrongState(self.status)
        accepted = validate_decisions(self.state.queue, self.state.decisions, decisions)
        merged = dict(self.state.decisions)
        merged.update(accepted)
        self.state = replace(self.state, decisions=merged)
        for decision in accepted.values():
            self._audit(
                {
                    "event": "decision",
                    "session": self.session_id,
                    "pair_id": decision.pair_id,
                    "verdict": decision.verdict.value,
                    "reviewer": decision.reviewer,
                    "decided_at": decision.decided_at or self.ctx.clock(),
                }
            )
        return len(accepted)

    def advance(self) -> SessionStatus:
        """Apply decisions, synthesize the unified corpus, run the next cycle."""
        if not self._lock.acquire(blocking=False):
            raise WrongState(SessionStatus.RUNNING)
        try:
            if self.status is not SessionStatus.AWAITING_REVIEW:
                raise WrongState(self.status)
            self._transition(SessionStatus.RUNNING)
            try:
                decisions = list(self.state.decisions.values())
                state = replace(self.state, decisions={})
                state = apply_decisions(state, decisions, self.ctx) if decisions else state
                unified, auto_rows = synthesize_unified(
                    state.original,
                    state.reverse,
                    state.alignment,
                    {d.pair_id: d for d in decisions},
                    self.ctx,
                    base=state.working,
                    cycle=len(state.history),
                )
                state = replace(
                    state,
                    working=unified,
                    derived=None,
                    updated_rows=state.updated_rows + tuple(auto_rows),
                )
                pending_updates = state.updated_rows
                try:
                    new_state = run_cycle(state, self.ctx)
                except CycleLimitExceeded:
                    self.state = state
                    self._audit({"event": "cycle_limit", "session": self.session_id})
                    self._transition(SessionStatus.CYCLE_LIMIT)
                    return self.status
            except Exception:
                # provider or validation failure: the session stays reviewable
                self._transition(SessionStatus.AWAITING_REVIEW)
                raise
            self.state = replace(new_state, updated_rows=pending_updates)
            self._capture_cycle_outputs()
            self._audit(
                {
                    "event": "advance",
                    "session": self.session_id,
                    "cycle": len(self.state.history),
                    "at": self.ctx.clock(),
                }
            )
            self._settle_status()
            return self.status
        finally:
            self._lock.release()
