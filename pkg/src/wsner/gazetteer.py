"""Entity-list matching: build surface-form lists into a token trie and
annotate sentences by greedy longest match.

Entries shorter than their source's minimum character length are dropped at
build time, which filters one- and two-letter noise entries out of large
knowledge-base exports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Dataset, EntitySpan, LabeledSentence, TagSet
from .date_rules import DateRuleSet, annotate_dates
from .errors import ParseError, SchemaError
from .textnorm import strip_diacritics, visible_length

DEFAULT_PRIORITY = ("PER", "LOC", "ORG")


@dataclass(frozen=True)
class GazetteerEntry:
    """One surface form (≥1 tokens) mapped to an entity type, with the
    name of the list it came from."""

    surface: tuple[str, ...]
    label: str
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "surface", tuple(self.surface))
        if not self.surface or any(not t for t in self.surface):
            raise SchemaError(f"bad gazetteer surface {self.surface!r}")


class _Node:
    __slots__ = ("children", "labels")

    def __init__(self):
        self.children: dict[str, _Node] = {}
        self.labels: set[str] = set()


class Gazetteer:
    """Immutable token-sequence trie; lookups are read-only and shareable.

    ``lowercase`` and ``strip_diacritics`` control how both stored surfaces
    and query tokens are normalized before comparison (both default off:
    names are case-informative).
    """

    def __init__(self, lowercase: bool = False, strip_marks: bool = False,
                 priority: tuple[str, ...] = DEFAULT_PRIORITY):
        self._root = _Node()
        self.lowercase = lowercase
        self.strip_marks = strip_marks
        self.priority = tuple(priority)
        self._size = 0

    def normalize(self, token: str) -> str:
        if self.strip_marks:
            token = strip_diacritics(token)
        if self.lowercase:
            token = token.lower()
        return token

    def _insert(self, surface: tuple[str, ...], label: str) -> None:
        node = self._root
        for token in surface:
            node = node.children.setdefault(self.normalize(token), _Node())
        if label not in node.labels:
            node.labels.add(label)
            self._size += 1

    def __len__(self) -> int:
        """Number of stored (surface, type) pairs."""
        return self._size

    def rank(self, label: str) -> tuple[int, str]:
        """Priority rank for equal-length conflicts; unlisted types sort
        after listed ones, alphabetically, for determinism."""
        if label in self.priority:
            return (self.priority.index(label), "")
        return (len(self.priority), label)


def build_gazetteer(
    entries,
    min_len: dict[str, int] | None = None,
    *,
    default_min_len: int = 1,
    lowercase: bool = False,
    strip_marks: bool = False,
    priority: tuple[str, ...] = DEFAULT_PRIORITY,
    tag_set: TagSet | None = None,
    stoplist=(),
) -> Gazetteer:
    """Build a trie from *entries*, applying per-source minimum lengths.

    Length is the character count of the joined surface form, spaces and
    combining marks excluded. Duplicate (surface, type) pairs collapse.
    ``stoplist`` drops surfaces (compared in normalized joined form); it
    ships empty.
    """
    min_len = dict(min_len or {})
    for source, n in min_len.items():
        if n < 1:
            raise ValueError(f"min_len for {source!r} must be >= 1")
    tag_set = tag_set or TagSet()
    known = set(tag_set.entity_types)
    gaz = Gazetteer(lowercase=lowercase, strip_marks=strip_marks, priority=priority)
    stop = {" ".join(gaz.normalize(t) for t in s.split(" ")) if isinstance(s, str)
            else " ".join(gaz.normalize(t) for t in s)
            for s in stoplist}
    for entry in entries:
        if entry.label not in known:
            raise SchemaError(f"gazetteer entry type {entry.label!r} not in tag set")
        limit = min_len.get(entry.source, default_min_len)
        if sum(visible_length(t) for t in entry.surface) < limit:
            continue
        normalized = tuple(gaz.normalize(t) for t in entry.surface)
        if " ".join(normalized) in stop:
            continue
        gaz._insert(entry.surface, entry.label)
    return gaz


def match_sentence(tokens, gaz: Gazetteer) -> list[EntitySpan]:
    """Greedy left-to-right longest match; scanning resumes after each
    match. Equal-length type conflicts resolve by the gazetteer's priority
    order."""
    norm = [gaz.normalize(t) for t in tokens]
    spans: list[EntitySpan] = []
    i = 0
    n = len(norm)
    while i < n:
        node = gaz._root
        j = i
        best_end = None
        best_labels = None
        while j < n:
            node = node.children.get(norm[j])
            if node is None:
                break
            j += 1
            if node.labels:
                best_end, best_labels = j, node.labels
        if best_end is None:
            i += 1
            continue
        label = min(best_labels, key=gaz.rank)
        spans.append(EntitySpan(label, i, best_end))
        i = best_end
    return spans


def _merge_rank(span: EntitySpan, gaz: Gazetteer, date_label: str):
    # Earlier start wins; ties go to the longer span, then to the priority
    # order with DATE last.
    return (span.start, -(span.end - span.start),
            span.label == date_label, gaz.rank(span.label))


def annotate_distant(
    dataset: Dataset,
    gaz: Gazetteer,
    date_rules: DateRuleSet | None = None,
) -> Dataset:
    """Re-annotate every sentence with gazetteer matches plus date-rule
    spans; existing spans are ignored and provenance becomes ``distant``."""
    date_label = date_rules.date_label if date_rules else "DATE"
    sentences = []
    for sent in dataset.sentences:
        candidates = match_sentence(sent.tokens, gaz)
        if date_rules is not None:
            candidates += annotate_dates(sent.tokens, date_rules)
        candidates.sort(key=lambda s: _merge_rank(s, gaz, date_label))
        kept: list[EntitySpan] = []
        last_end = 0
        for span in candidates:
            if span.start >= last_end:
                kept.append(span)
                last_end = span.end
        sentences.append(LabeledSentence(sent.tokens, tuple(kept), "distant"))
    return Dataset(tuple(sentences), dataset.tag_set)


def read_entity_tsv(path, tag_set: TagSet | None = None) -> list[GazetteerEntry]:
    """Read entity-list TSV: ``surface<TAB>type<TAB>source``, one entry per
    line; multi-token surfaces use single spaces in the surface field."""
    tag_set = tag_set or TagSet()
    known = set(tag_set.entity_types)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise ParseError(
                    f"{path}:{lineno}: expected 'surface<TAB>type<TAB>source'"
                )
            if parts[1] not in known:
                raise SchemaError(f"{path}:{lineno}: unknown type {parts[1]!r}")
            entries.append(
                GazetteerEntry(tuple(parts[0].split(" ")), parts[1], parts[2])
            )
    return entries
