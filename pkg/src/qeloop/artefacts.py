"""Artefact domain types and parsers for the three supported document formats.

Formats are line-oriented so reviewers can hand-edit them:

* Requirements: ``REQ-<id>: <body>`` lines; indented or plain continuation
  lines append to the current body; a blank line ends it.
* Test cases: ``TC-<id>: <title>`` blocks followed by ``Step:`` and
  ``Expect:`` lines (at least one of each).
* Feature files: a pragmatic Gherkin subset (Feature, Scenario,
  Scenario Outline, Given/When/Then/And/But, Examples tables kept verbatim).

``serialize_corpus`` emits the canonical form of each format; parsing the
canonical form of any parsed corpus yields an equal corpus.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum


class ArtefactKind(str, Enum):
    REQUIREMENT = "requirement"
    TEST_CASE = "testcase"
    BDD_SCENARIO = "bdd"


class Origin(str, Enum):
    ORIGINAL = "original"
    REVERSE_GENERATED = "reverse_generated"
    UNIFIED = "unified"
    DEGRADED = "degraded"


class ParseError(Exception):
    """Base class for document parsing failures."""


class DuplicateId(ParseError):
    def __init__(self, artefact_id: str):
        self.artefact_id = artefact_id
        super().__init__(f"duplicate artefact id: {artefact_id!r}")


class EmptyBody(ParseError):
    def __init__(self, artefact_id: str):
        self.artefact_id = artefact_id
        super().__init__(f"artefact {artefact_id!r} has an empty body")


class NoArtefactsFound(ParseError):
    def __init__(self):
        super().__init__("no artefacts found in document")


class NoScenarios(ParseError):
    def __init__(self):
        super().__init__("feature text contains no Scenario blocks")


class StepOutsideScenario(ParseError):
    def __init__(self, line_number: int):
        self.line_number = line_number
        super().__init__(f"step on line {line_number} appears outside any Scenario")


class UnterminatedExamplesTable(ParseError):
    def __init__(self, line_number: int):
        self.line_number = line_number
        super().__init__(f"Examples block on line {line_number} has no table rows")


class MissingStep(ParseError):
    def __init__(self, artefact_id: str):
        self.artefact_id = artefact_id
        super().__init__(f"test case {artefact_id!r} has no Step lines")


class MissingExpectation(ParseError):
    def __init__(self, artefact_id: str):
        self.artefact_id = artefact_id
        super().__init__(f"test case {artefact_id!r} has no Expect lines")


class InvalidArtefact(ValueError):
    """Raised when an Artefact or Corpus violates its invariants."""


@dataclass(frozen=True)
class Artefact:
    """A single requirement, test case, or BDD scenario."""

    id: str
    kind: ArtefactKind
    body: str
    title: str = ""
    origin: Origin = Origin.ORIGINAL
    source_cycle: int = 0

    def __post_init__(self):
        if not self.id:
            raise InvalidArtefact("artefact id must be non-empty")
        if not self.body.strip():
            raise InvalidArtefact(f"artefact {self.id!r} body must be non-empty")
        if self.source_cycle < 0:
            raise InvalidArtefact(f"artefact {self.id!r} source_cycle must be >= 0")
        if self.origin is Origin.ORIGINAL and self.source_cycle != 0:
            raise InvalidArtefact(
                f"artefact {self.id!r} is original but has source_cycle "
                f"{self.source_cycle}"
            )


@dataclass(frozen=True)
class Corpus:
    """An ordered, uniquely-keyed set of artefacts of one kind."""

    project_id: str
    kind: ArtefactKind
    artefacts: tuple[Artefact, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "artefacts", tuple(self.artefacts))
        seen: set[str] = set()
        for a in self.artefacts:
            if a.kind is not self.kind:
                raise InvalidArtefact(
                    f"artefact {a.id!r} has kind {a.kind.value}, corpus is {self.kind.value}"
                )
            if a.id in seen:
                raise DuplicateId(a.id)
            seen.add(a.id)

    def __len__(self) -> int:
        return len(self.artefacts)

    def __iter__(self):
        return iter(self.artefacts)

    def get(self, artefact_id: str) -> Artefact | None:
        for a in self.artefacts:
            if a.id == artefact_id:
                return a
        return None

    def with_artefacts(self, artefacts: list[Artefact]) -> "Corpus":
        return replace(self, artefacts=tuple(artefacts))


_REQ_LINE = re.compile(r"^REQ-(?P<id>\S+?):\s?(?P<body>.*)$")
_TC_LINE = re.compile(r"^TC-(?P<id>\S+?):\s?(?P<title>.*)$")
_STEP_KEYWORDS = ("Given ", "When ", "Then ", "And ", "But ")
_GHERKIN_HEADERS = ("Feature:", "Scenario:", "Scenario Outline:", "Background:")


def parse_requirements(text: str, project_id: str = "") -> Corpus:
    """Parse a requirement document into a Corpus of kind REQUIREMENT.

    Raises DuplicateId, EmptyBody, or NoArtefactsFound. Continuation lines
    are joined onto the current body with single spaces, so a requirement
    body is one normalized paragraph.
    """
    artefacts: list[Artefact] = []
    seen: set[str] = set()
    current_id: str | None = None
    current_parts: list[str] = []

    def flush():
        nonlocal current_id, current_parts
        if current_id is None:
            return
        body = " ".join(p for p in current_parts if p)
        if not body.strip():
            raise EmptyBody(current_id)
        artefacts.append(
            Artefact(id=current_id, kind=ArtefactKind.REQUIREMENT, body=body)
        )
        current_id, current_parts = None, []

    for raw in text.splitlines():
        line = raw.strip()
        m = _REQ_LINE.match(raw.strip())
        if m:
            flush()
            rid = m.group("id")
            if rid in seen:
                raise DuplicateId(rid)
            seen.add(rid)
            current_id = rid
            current_parts = [m.group("body").strip()]
        elif not line:
            flush()
        elif current_id is not None:
            current_parts.append(line)
        # leading prose before the first REQ line is ignored
    flush()

    if not artefacts:
        raise NoArtefactsFound()
    return Corpus(project_id=project_id, kind=ArtefactKind.REQUIREMENT, artefacts=tuple(artefacts))


def parse_testcases(text: str, project_id: str = "") -> Corpus:
    """Parse a test-case document into a Corpus of kind TEST_CASE.

    Each block keeps its ``Step:``/``Expect:`` markers in the body, steps
    first, then expectations, in document order.
    """
    artefacts: list[Artefact] = []
    seen: set[str] = set()
    current_id: str | None = None
    current_title = ""
    steps: list[str] = []
    expects: list[str] = []

    def flush():
        nonlocal current_id, current_title, steps, expects
        if current_id is None:
            return
        if not steps:
            raise MissingStep(current_id)
        if not expects:
            raise MissingExpectation(current_id)
        body = "\n".join(steps + expects)
        artefacts.append(
            Artefact(id=current_id, kind=ArtefactKind.TEST_CASE, body=body, title=current_title)
        )
        current_id, current_title, steps, expects = None, "", [], []

    for raw in text.splitlines():
        line = raw.strip()
        m = _TC_LINE.match(line)
        if m:
            flush()
            tid = m.group("id")
            if tid in seen:
                raise DuplicateId(tid)
            seen.add(tid)
            current_id = tid
            current_title = m.group("title").strip()
        elif line.startswith("Step:") and current_id is not None:
            steps.append(line)
        elif line.startswith("Expect:") and current_id is not None:
            expects.append(line)
        elif not line:
            continue
    flush()

    if not artefacts:
        raise NoArtefactsFound()
    return Corpus(project_id=project_id, kind=ArtefactKind.TEST_CASE, artefacts=tuple(artefacts))


def _slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "feature"


def parse_gherkin(text: str, project_id: str = "") -> Corpus:
    """Parse a feature file into a Corpus of kind BDD_SCENARIO.

    One artefact per Scenario; id is ``<feature-slug>/<n>`` with n counted
    per feature from 1. Step lines and Examples tables are kept verbatim in
    the body; tag lines are preserved as leading ``@`` tokens of the title.
    """
    artefacts: list[Artefact] = []
    feature_slug = "feature"
    scenario_index = 0
    pending_tags: list[str] = []
    current_title: str | None = None
    current_lines: list[str] = []
    in_scenario = False
    examples_open_line: int | None = None
    examples_has_rows = False

    def close_examples():
        nonlocal examples_open_line, examples_has_rows
        if examples_open_line is not None and not examples_has_rows:
            raise UnterminatedExamplesTable(examples_open_line)
        examples_open_line, examples_has_rows = None, False

    def flush():
        nonlocal current_title, current_lines, scenario_index, in_scenario
        if not in_scenario:
            return
        close_examples()
        scenario_index += 1
        body = "\n".join(current_lines)
        if not body.strip():
            raise EmptyBody(f"{feature_slug}/{scenario_index}")
        artefacts.append(
            Artefact(
                id=f"{feature_slug}/{scenario_index}",
                kind=ArtefactKind.BDD_SCENARIO,
                body=body,
                title=current_title or "",
            )
        )
        current_title, current_lines, in_scenario = None, [], False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@"):
            pending_tags = [t for t in line.split() if t.startswith("@")]
            continue
        if line.startswith("Feature:"):
            flush()
            feature_slug = _slugify(line[len("Feature:"):].strip())
            scenario_index = 0
            pending_tags = []
            continue
        if line.startswith("Scenario Outline:") or line.startswith("Scenario:"):
            flush()
            name = line.split(":", 1)[1].strip()
            current_title = " ".join(pending_tags + [name]).strip()
            pending_tags = []
            in_scenario = True
            continue
        if line.startswith("Examples:"):
            if not in_scenario:
                raise StepOutsideScenario(lineno)
            close_examples()
            examples_open_line = lineno
            examples_has_rows = False
            current_lines.append(line)
            continue
        if line.startswith("|"):
            if not in_scenario:
                raise StepOutsideScenario(lineno)
            if examples_open_line is not None:
                examples_has_rows = True
            current_lines.append(line)
            continue
        if any(line.startswith(k) for k in _STEP_KEYWORDS):
            if not in_scenario:
                raise StepOutsideScenario(lineno)
            if examples_open_line is not None:
                close_examples()
            current_lines.append(line)
            continue
        # free text inside a scenario is treated as a description line
        if in_scenario:
            current_lines.append(line)
    flush()

    if not artefacts:
        raise NoScenarios()
    return Corpus(project_id=project_id, kind=ArtefactKind.BDD_SCENARIO, artefacts=tuple(artefacts))


def _split_title_tags(title: str) -> tuple[list[str], str]:
    tokens = title.split()
    tags = []
    for t in tokens:
        if t.startswith("@"):
            tags.append(t)
        else:
            break
    return tags, " ".join(tokens[len(tags):])


def serialize_corpus(corpus: Corpus) -> str:
    """Render a corpus in its canonical document form (UTF-8, LF endings)."""
    if corpus.kind is ArtefactKind.REQUIREMENT:
        return "".join(f"REQ-{a.id}: {a.body}\n" for a in corpus)
    if corpus.kind is ArtefactKind.TEST_CASE:
        blocks = []
        for a in corpus:
            lines = [f"TC-{a.id}: {a.title}".rstrip()]
            lines.extend(a.body.splitlines())
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"
    # BDD: group consecutive scenarios by feature slug (the id prefix)
    out: list[str] = []
    current_slug = None
    for a in corpus:
        slug = a.id.rsplit("/", 1)[0]
        if slug != current_slug:
            if current_slug is not None:
                out.append("")
            out.append(f"Feature: {slug}")
            current_slug = slug
        tags, name = _split_title_tags(a.title)
        if tags:
            out.append("  " + " ".join(tags))
        out.append(f"  Scenario: {name}".rstrip())
        out.extend("    " + line for line in a.body.splitlines())
    return "\n".join(out) + "\n"


def parse_corpus(text: str, kind: ArtefactKind, project_id: str = "") -> Corpus:
    """Dispatch to the parser matching ``kind``."""
    if kind is ArtefactKind.REQUIREMENT:
        return parse_requirements(text, project_id)
    if kind is ArtefactKind.TEST_CASE:
        return parse_testcases(text, project_id)
    return parse_gherkin(text, project_id)
