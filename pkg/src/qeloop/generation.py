"""Forward/reverse artefact generation behind a chat-provider contract.

The mock provider is fully deterministic: it receives the same rendered
prompt a remote model would, recovers the serialized artefacts embedded in
it, and applies mechanical templates. A requirement segment splits at its
first conditional token into a condition and an outcome clause; the reverse
templates invert that split, so an undegraded round trip reproduces bodies
up to framing tokens (and exactly as token sets).

Operation accounting: one op = one provider call; artefacts are packed into
batches (default 10) without splitting a trace group across batches.
"""
from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol

import httpx

from qeloop.artefacts import (
    Artefact,
    ArtefactKind,
    Corpus,
    Origin,
    ParseError,
    parse_corpus,
    serialize_corpus,
)
from qeloop.embedding import fnv1a_64
from qeloop.textproc import segment_artefact

_CONDITIONALS = frozenset({"if", "when", "whenever", "after", "before", "upon", "once", "while"})
_PLAIN_EXPECT = "Outcome observed"
_TRACE_TAG = "@trace-"
_TRAILING_INDEX = re.compile(r"^(?P<req>.+)-(?P<n>\d+)$")
_BLOCK_RE = re.compile(r"<<<ARTEFACTS\n(?P<block>.*?)\nARTEFACTS>>>", re.DOTALL)

DEFAULT_BATCH_SIZE = 10


class GenerationError(Exception):
    pass


class EmptyCorpus(GenerationError):
    def __init__(self):
        super().__init__("generation requires a non-empty corpus")


class ProviderUnavailable(GenerationError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"generation provider unavailable: {detail}")


class MalformedProviderOutput(GenerationError):
    """Provider text failed to parse or trace under the artefact formats."""

    def __init__(self, reason: str, raw_text: str):
        self.reason = reason
        self.raw_text = raw_text
        super().__init__(f"malformed provider output: {reason}")


@dataclass
class GenerationStats:
    """Monotone counters of provider calls, one increment per call."""

    forward_ops: int = 0
    reverse_ops: int = 0
    judge_ops: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add_forward_ops(self, n: int) -> None:
        with self._lock:
            self.forward_ops += n

    def add_reverse_ops(self, n: int) -> None:
        with self._lock:
            self.reverse_ops += n

    def add_judge_ops(self, n: int) -> None:
        with self._lock:
            self.judge_ops += n

    @property
    def llm_ops(self) -> int:
        return self.forward_ops + self.reverse_ops + self.judge_ops


@dataclass(frozen=True)
class DegradationSpec:
    """Deterministic token-dropping model for negative validation."""

    level: float
    ambiguity_injection: bool = False

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"degradation level {self.level} outside [0, 1]")

    def drops(self, token: str) -> bool:
        return fnv1a_64(token) % 100 < 100.0 * self.level


_INJECTION_PHRASES = (
    "as needed", "appropriate", "fast", "reasonable", "robust", "seamless",
)


def degrade(corpus: Corpus, spec: DegradationSpec) -> Corpus:
    """Drop tokens per segment (head token always survives); pure in (corpus, spec)."""
    if spec.level == 0.0:
        return corpus
    degraded: list[Artefact] = []
    for artefact in corpus:
        new_segments: list[str] = []
        for segment in segment_artefact(artefact):
            tokens = segment.text.split()
            kept = [tokens[0]] + [t for t in tokens[1:] if not spec.drops(t)]
            changed = len(kept) < len(tokens)
            text = " ".join(kept)
            if changed and spec.ambiguity_injection:
                phrase = _INJECTION_PHRASES[fnv1a_64(segment.text) % len(_INJECTION_PHRASES)]
                text = f"{text} {phrase}"
            new_segments.append(text)
        joiner = " " if corpus.kind is ArtefactKind.REQUIREMENT else "\n"
        degraded.append(
            Artefact(
                id=artefact.id,
                kind=artefact.kind,
                body=joiner.join(new_segments),
                title=artefact.title,
                origin=Origin.DEGRADED,
                source_cycle=artefact.source_cycle,
            )
        )
    return corpus.with_artefacts(degraded)


class ChatProvider(Protocol):
    def complete(self, prompt: str) -> str:
        ...


class RemoteChatProvider:
    """Chat wire contract: POST {"model", "prompt"} -> {"text"} with retries."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        token_env: str | None = None,
        timeout: float = 60.0,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.retries = retries
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        last_error = "no attempts made"
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(
                    self.endpoint, json={"model": self.model, "prompt": prompt}, headers=headers
                )
            except httpx.HTTPError as exc:
                last_error = str(exc)
                continue
            if response.status_code == 200:
                payload = response.json()
                if isinstance(payload.get("text"), str):
                    return payload["text"]
                last_error = "response missing text field"
            else:
                last_error = f"HTTP {response.status_code}"
        raise ProviderUnavailable(last_error)


def split_conditional(text: str) -> tuple[str, str, str]:
    """Split a sentence into (step, expect, form).

    Forms: ``trailing`` (outcome first, condition clause after a conditional
    token), ``leading`` (sentence opens with a conditional clause ending at a
    comma), or ``plain`` (no usable conditional; the whole text is the step).
    """
    tokens = text.split()
    lowered = [t.lower().strip(".,;:!?") for t in tokens]
    for pos in range(1, len(tokens) - 1):
        if lowered[pos] in _CONDITIONALS:
            return " ".join(tokens[pos:]), " ".join(tokens[:pos]), "trailing"
    if tokens and lowered[0] in _CONDITIONALS:
        for pos, tok in enumerate(tokens[:-1]):
            if tok.endswith(","):
                return " ".join(tokens[: pos + 1]), " ".join(tokens[pos + 1:]), "leading"
    return text, _PLAIN_EXPECT, "plain"


def join_clauses(step: str, expect: str) -> str:
    """Invert ``split_conditional`` from a (step, expect) pair."""
    if expect == _PLAIN_EXPECT:
        return step
    first = step.split()[0].lower().strip(".,;:!?") if step.split() else ""
    if first in _CONDITIONALS and step.endswith(","):
        return f"{step} {expect}"
    return f"{expect} {step}"


def trace_id_of(artefact: Artefact) -> str:
    """Requirement id a derived artefact traces to, via tag, id shape, or fallback."""
    for token in artefact.title.split():
        if token.startswith(_TRACE_TAG):
            return token[len(_TRACE_TAG):]
    if artefact.kind is ArtefactKind.BDD_SCENARIO:
        slug = artefact.id.rsplit("/", 1)[0]
        if slug.startswith("req-"):
            return slug[len("req-"):]
        return artefact.id
    m = _TRAILING_INDEX.match(artefact.id)
    if m:
        return m.group("req")
    return artefact.id


def _mock_forward(reqs: Corpus, target: ArtefactKind) -> str:
    if target is ArtefactKind.TEST_CASE:
        blocks = []
        for req in reqs:
            for n, segment in enumerate(segment_artefact(req), start=1):
                step, expect, _ = split_conditional(segment.text)
                title = req.title or f"Covers {req.id}"
                blocks.append(f"TC-{req.id}-{n}: {title}\nStep: {step}\nExpect: {expect}")
        return "\n\n".join(blocks) + "\n"
    lines: list[str] = []
    for req in reqs:
        lines.append(f"Feature: req-{req.id}")
        for segment in segment_artefact(req):
            step, expect, form = split_conditional(segment.text)
            lines.append(f"  {_TRACE_TAG}{req.id}")
            lines.append(f"  Scenario: {req.title or 'verifies ' + req.id}")
            if form == "plain":
                lines.append(f"    Then {step}")
            elif form == "leading":
                lines.append(f"    Given {step}")
                lines.append(f"    Then {expect}")
            else:
                lines.append(f"    When {step}")
                lines.append(f"    Then {expect}")
    return "\n".join(lines) + "\n"


_STEP_PREFIX = re.compile(r"^(Given|When|Then|And|But)\s+")


def _reconstruct_from_testcase(artefact: Artefact) -> str:
    steps = [l[len("Step:"):].strip() for l in artefact.body.splitlines() if l.startswith("Step:")]
    expects = [l[len("Expect:"):].strip() for l in artefact.body.splitlines() if l.startswith("Expect:")]
    if len(steps) == 1 and len(expects) == 1:
        return join_clauses(steps[0], expects[0])
    return " ".join(steps + [e for e in expects if e != _PLAIN_EXPECT])


def _reconstruct_from_scenario(artefact: Artefact) -> str:
    lines = [l.strip() for l in artefact.body.splitlines() if _STEP_PREFIX.match(l.strip())]
    stripped = [(_STEP_PREFIX.match(l).group(1), _STEP_PREFIX.sub("", l, count=1)) for l in lines]
    if len(stripped) == 1 and stripped[0][0] == "Then":
        return stripped[0][1]
    if len(stripped) == 2 and stripped[1][0] == "Then":
        keyword, step = stripped[0]
        expect = stripped[1][1]
        if keyword == "Given":
            return f"{step} {expect}"
        return join_clauses(step, expect)
    return " ".join(text for _, text in stripped)


def _mock_reverse(derived: Corpus) -> str:
    groups: dict[str, list[Artefact]] = {}
    order: list[str] = []
    for artefact in derived:
        key = trace_id_of(artefact)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(artefact)
    lines = []
    for req_id in order:
        reconstruct = (
            _reconstruct_from_testcase
            if groups[req_id][0].kind is ArtefactKind.TEST_CASE
            else _reconstruct_from_scenario
        )
        body = " ".join(reconstruct(a) for a in groups[req_id])
        lines.append(f"REQ-{req_id}: {body}")
    return "\n".join(lines) + "\n"


class MockChatProvider:
    """Offline provider that applies the mechanical templates byte-reproducibly."""

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        block_match = _BLOCK_RE.search(prompt)
        if not block_match:
            raise ProviderUnavailable("prompt does not embed an artefact block")
        block = block_match.group("block")
        if "TASK: forward" in prompt:
            target_match = re.search(r"TARGET-KIND:\s*(\S+)", prompt)
            target = ArtefactKind(target_match.group(1)) if target_match else ArtefactKind.TEST_CASE
            return _mock_forward(parse_corpus(block, ArtefactKind.REQUIREMENT), target)
        source_match = re.search(r"SOURCE-KIND:\s*(\S+)", prompt)
        source = ArtefactKind(source_match.group(1)) if source_match else ArtefactKind.TEST_CASE
        return _mock_reverse(parse_corpus(block, source))


def _load_template(name: str) -> str:
    return resources.files("qeloop").joinpath(f"data/{name}").read_text(encoding="utf-8")


def _format_instructions(target: ArtefactKind, source: ArtefactKind | None = None) -> str:
    lines = []
    if source is not None:
        lines.append(f"SOURCE-KIND: {source.value}")
    if target is ArtefactKind.TEST_CASE:
        lines.append("Output format: 'TC-<source-id>-<n>: <title>' blocks with 'Step:' and 'Expect:' lines.")
    elif target is ArtefactKind.BDD_SCENARIO:
        lines.append("Output format: Gherkin features named 'req-<source-id>' with Given/When/Then steps.")
    else:
        lines.append("Output format: one 'REQ-<id>: <body>' line per requirement.")
    return "\n".join(lines)


def _batches(artefacts: list[Artefact], batch_size: int, group_key) -> list[list[Artefact]]:
    """Pack artefacts into batches without splitting a trace group."""
    groups: list[list[Artefact]] = []
    index: dict[str, int] = {}
    for a in artefacts:
        key = group_key(a)
        if key in index:
            groups[index[key]].append(a)
        else:
            index[key] = len(groups)
            groups.append([a])
    batches: list[list[Artefact]] = []
    current: list[Artefact] = []
    for group in groups:
        if current and len(current) + len(group) > batch_size:
            batches.append(current)
            current = []
        current.extend(group)
    if current:
        batches.append(current)
    return batches


def forward_generate(
    reqs: Corpus,
    target: ArtefactKind,
    provider: ChatProvider,
    stats: GenerationStats | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    template: str | None = None,
) -> Corpus:
    """Generate test cases or BDD scenarios from requirements, one batch per op."""
    if target not in (ArtefactKind.TEST_CASE, ArtefactKind.BDD_SCENARIO):
        raise ValueError(f"forward target must be testcase or bdd, got {target.value}")
    if len(reqs) == 0:
        raise EmptyCorpus()
    template = template or _load_template("forward_prompt.txt")
    generated: list[Artefact] = []
    for batch in _batches(list(reqs), batch_size, lambda a: a.id):
        sub = Corpus(project_id=reqs.project_id, kind=reqs.kind, artefacts=tuple(batch))
        prompt = template.format(
            target_kind=target.value,
            format_instructions=_format_instructions(target),
            artefacts=serialize_corpus(sub),
        )
        text = provider.complete(prompt)
        if stats is not None:
            stats.add_forward_ops(1)
        try:
            parsed = parse_corpus(text, target, project_id=reqs.project_id)
        except ParseError as exc:
            raise MalformedProviderOutput(str(exc), text) from exc
        batch_ids = {a.id for a in batch}
        for artefact in parsed:
            if trace_id_of(artefact) not in batch_ids and trace_id_of(artefact).upper() not in {
                i.upper() for i in batch_ids
            }:
                raise MalformedProviderOutput(
                    f"artefact {artefact.id!r} does not trace to a source requirement", text
                )
            generated.append(artefact)
    return Corpus(project_id=reqs.project_id, kind=target, artefacts=tuple(generated))


def reverse_generate(
    derived: Corpus,
    provider: ChatProvider,
    stats: GenerationStats | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    template: str | None = None,
    source_cycle: int = 0,
) -> Corpus:
    """Reconstruct one requirement per trace group of the derived corpus."""
    if len(derived) == 0:
        raise EmptyCorpus()
    if derived.kind not in (ArtefactKind.TEST_CASE, ArtefactKind.BDD_SCENARIO):
        raise ValueError(f"reverse source must be testcase or bdd, got {derived.kind.value}")
    template = template or _load_template("reverse_prompt.txt")
    reconstructed: list[Artefact] = []
    for batch in _batches(list(derived), batch_size, trace_id_of):
        sub = Corpus(project_id=derived.project_id, kind=derived.kind, artefacts=tuple(batch))
        prompt = template.format(
            target_kind=ArtefactKind.REQUIREMENT.value,
            format_instructions=_format_instructions(ArtefactKind.REQUIREMENT, source=derived.kind),
            artefacts=serialize_corpus(sub),
        )
        text = provider.complete(prompt)
        if stats is not None:
            stats.add_reverse_ops(1)
        try:
            parsed = parse_corpus(text, ArtefactKind.REQUIREMENT, project_id=derived.project_id)
        except ParseError as exc:
            raise MalformedProviderOutput(str(exc), text) from exc
        for artefact in parsed:
            reconstructed.append(
                Artefact(
                    id=artefact.id,
                    kind=ArtefactKind.REQUIREMENT,
                    body=artefact.body,
                    title=artefact.title,
                    origin=Origin.REVERSE_GENERATED,
                    source_cycle=source_cycle,
                )
            )
    return Corpus(
        project_id=derived.project_id,
        kind=ArtefactKind.REQUIREMENT,
        artefacts=tuple(reconstructed),
    )
