"""Sentence-level segmentation, token normalization, and entity/verb profiles."""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from qeloop.artefacts import Artefact

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
# markers that force a line to stand alone as a segment
_LINE_MARKERS = (
    "-", "*",
    "Given ", "When ", "Then ", "And ", "But ",
    "Step:", "Expect:", "Examples:", "|",
)
# periods inside these abbreviations never end a sentence
_ABBREVIATIONS = ("e.g.", "i.e.", "etc.", "vs.", "cf.")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


class EmptyAfterSegmentation(ValueError):
    def __init__(self, artefact_id: str):
        self.artefact_id = artefact_id
        super().__init__(f"artefact {artefact_id!r} has no tokenizable content")


@dataclass(frozen=True)
class Segment:
    """One sentence-level unit of an artefact body."""

    artefact_id: str
    index: int
    text: str


@dataclass(frozen=True)
class EntityVerbProfile:
    entities: frozenset[str]
    verbs: frozenset[str]


def tokenize(text: str) -> list[str]:
    """All alphanumeric tokens of ``text``, lowercased, in order."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def tokenize_normalize(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> frozenset[str]:
    """Lowercased alphanumeric token set with stopwords removed."""
    return frozenset(t for t in tokenize(text) if t not in stopwords)


def _protect_abbreviations(text: str) -> str:
    for abbr in _ABBREVIATIONS:
        text = text.replace(abbr, abbr.replace(".", "\x00"))
    return text


def _restore_abbreviations(text: str) -> str:
    return text.replace("\x00", ".")


def _split_sentences(block: str) -> list[str]:
    guarded = _protect_abbreviations(block)
    parts = _SENTENCE_SPLIT.split(guarded)
    return [_restore_abbreviations(p).strip() for p in parts if p.strip()]


def _is_marker_line(line: str) -> bool:
    return any(line.startswith(m) for m in _LINE_MARKERS)


def segment_artefact(artefact: Artefact) -> list[Segment]:
    """Split an artefact body into trimmed sentence/step segments.

    Lines starting with a bullet or step marker stand alone; consecutive
    prose lines are joined and split at sentence terminators. Segments with
    no alphanumeric token are dropped and indices reassigned from 0.
    """
    pieces: list[str] = []
    prose: list[str] = []

    def flush_prose():
        if prose:
            pieces.extend(_split_sentences(" ".join(prose)))
            prose.clear()

    for raw in artefact.body.splitlines():
        line = raw.strip()
        if not line:
            flush_prose()
            continue
        if _is_marker_line(line):
            flush_prose()
            pieces.append(line)
        else:
            prose.append(line)
    flush_prose()

    segments = []
    for text in pieces:
        if not _TOKEN_RE.search(text):
            continue
        segments.append(Segment(artefact_id=artefact.id, index=len(segments), text=text))
    if not segments:
        raise EmptyAfterSegmentation(artefact.id)
    return segments


def segment_corpus(corpus) -> list[Segment]:
    """Segments of every artefact in corpus order; token-free artefacts are skipped."""
    out: list[Segment] = []
    for a in corpus:
        try:
            out.extend(segment_artefact(a))
        except EmptyAfterSegmentation:
            continue
    return out


_VERB_SUFFIXES = ("ify", "ate")


def extract_entity_verbs(
    segment: Segment,
    verb_lexicon: frozenset[str] | set[str],
    stopwords: frozenset[str] | set[str] = frozenset(),
) -> EntityVerbProfile:
    """Partition a segment's non-stopword tokens into verb-like and noun-like sets.

    A token is verb-like when it is in the lexicon or carries a common verb
    suffix; everything else counts as an entity. The two sets are disjoint
    and jointly cover the segment's normalized tokens.
    """
    tokens = tokenize_normalize(segment.text, stopwords)
    verbs = frozenset(
        t for t in tokens if t in verb_lexicon or any(t.endswith(s) for s in _VERB_SUFFIXES)
    )
    return EntityVerbProfile(entities=tokens - verbs, verbs=verbs)


def load_lexicon(path: str | Path) -> frozenset[str]:
    """Read a one-entry-per-line lexicon file; ``#`` starts a comment."""
    entries = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip().lower()
        if line:
            entries.add(line)
    return frozenset(entries)


def load_default_lexicon(name: str) -> frozenset[str]:
    """Load one of the lexicons shipped under qeloop/data."""
    text = resources.files("qeloop").joinpath(f"data/{name}").read_text(encoding="utf-8")
    entries = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip().lower()
        if line:
            entries.add(line)
    return frozenset(entries)
