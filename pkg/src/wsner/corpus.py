"""Span-annotated corpus model and CoNLL-style file IO.

Spans are the canonical annotation; per-token BIO/IO tag sequences are
serializations of them. The writer always emits BIO (lossless); the reader
accepts BIO and IO files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError

PROVENANCES = ("gold", "distant")


def _check_token(surface: str) -> None:
    if not surface:
        raise SchemaError("token surface must be non-empty")
    if any(ch.isspace() for ch in surface):
        raise SchemaError(f"token surface contains whitespace: {surface!r}")


@dataclass(frozen=True)
class TagSet:
    """Entity labels plus the outside label; the model's label space is
    ``(outside,) + entity_types`` (IO encoding, outside first)."""

    entity_types: tuple[str, ...] = ("PER", "ORG", "LOC", "DATE")
    outside: str = "O"

    def __post_init__(self):
        object.__setattr__(self, "entity_types", tuple(self.entity_types))
        if len(set(self.entity_types)) != len(self.entity_types):
            raise SchemaError("entity types must be unique")
        if self.outside in self.entity_types:
            raise SchemaError("outside label cannot also be an entity type")
        for t in self.entity_types + (self.outside,):
            if not t:
                raise SchemaError("labels must be non-empty")

    @property
    def labels(self) -> tuple[str, ...]:
        return (self.outside,) + self.entity_types

    @property
    def size(self) -> int:
        return len(self.entity_types) + 1

    def index(self, label: str) -> int:
        if label == self.outside:
            return 0
        try:
            return 1 + self.entity_types.index(label)
        except ValueError:
            raise SchemaError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class EntitySpan:
    """Half-open token span ``[start, end)`` carrying an entity label."""

    label: str
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.start >= self.end:
            raise SchemaError(
                f"invalid span boundaries ({self.start}, {self.end})"
            )

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LabeledSentence:
    """Tokenized sentence with non-overlapping spans, sorted by start."""

    tokens: tuple[str, ...]
    spans: tuple[EntitySpan, ...] = ()
    provenance: str = "gold"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise SchemaError("sentence must contain at least one token")
        for tok in self.tokens:
            _check_token(tok)
        spans = tuple(sorted(self.spans, key=lambda s: (s.start, s.end)))
        object.__setattr__(self, "spans", spans)
        last_end = 0
        for span in spans:
            if span.end > len(self.tokens):
                raise SchemaError(
                    f"span {span} exceeds sentence length {len(self.tokens)}"
                )
            if span.start < last_end:
                raise SchemaError(f"span {span} overlaps a previous span")
            last_end = span.end
        if self.provenance not in PROVENANCES:
            raise SchemaError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Dataset:
    """A sequence of labeled sentences under one tag set."""

    sentences: tuple[LabeledSentence, ...] = ()
    tag_set: TagSet = field(default_factory=TagSet)

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        known = set(self.tag_set.entity_types)
        for i, sent in enumerate(self.sentences):
            for span in sent.spans:
                if span.label not in known:
                    raise SchemaError(
                        f"sentence {i}: span label {span.label!r} not in tag set"
                    )

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def merge(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two datasets sharing a tag set (a's sentences first)."""
    if a.tag_set != b.tag_set:
        raise SchemaError("cannot merge datasets with different tag sets")
    return Dataset(a.sentences + b.sentences, a.tag_set)


def spans_to_bio(sentence: LabeledSentence, outside: str = "O") -> list[str]:
    """Tag sequence with ``B-``/``I-`` prefixes; length equals token count."""
    tags = [outside] * len(sentence.tokens)
    for span in sentence.spans:
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def spans_to_io(sentence: LabeledSentence, outside: str = "O") -> list[str]:
    """Prefix-free tag sequence; adjacent same-type spans become one run."""
    tags = [outside] * len(sentence.tokens)
    for span in sentence.spans:
        for i in range(span.start, span.end):
            tags[i] = span.label
    return tags


def bio_to_spans(tags: list[str], tag_set: TagSet | None = None) -> list[EntitySpan]:
    """Decode BIO tags to spans.

    An ``I-X`` with no open ``X`` span is repaired to ``B-X`` (the behavior
    of the reference CoNLL scorer), so any tag sequence over the known
    labels decodes cleanly.
    """
    tag_set = tag_set or TagSet()
    known = set(tag_set.entity_types)
    spans: list[EntitySpan] = []
    start = None
    current = None

    def close(end: int) -> None:
        nonlocal start, current
        if current is not None:
            spans.append(EntitySpan(current, start, end))
        start = current = None

    for i, tag in enumerate(tags):
        if tag == tag_set.outside:
            close(i)
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise SchemaError(f"position {i}: unknown tag {tag!r}")
        prefix, label = tag[0], tag[2:]
        if label not in known:
            raise SchemaError(f"position {i}: unknown entity type {label!r}")
        if prefix == "B" or current != label:
            close(i)
            start, current = i, label
    close(len(tags))
    return spans


def io_to_spans(tags: list[str], tag_set: TagSet | None = None) -> list[EntitySpan]:
    """Decode IO tags to spans; adjacent same-type tags merge into one span."""
    tag_set = tag_set or TagSet()
    known = set(tag_set.entity_types)
    spans: list[EntitySpan] = []
    start = None
    current = None
    for i, tag in enumerate(tags):
        if tag != tag_set.outside and tag not in known:
            raise SchemaError(f"position {i}: unknown tag {tag!r}")
        if tag != current:
            if current is not None and current != tag_set.outside:
                spans.append(EntitySpan(current, start, i))
            start, current = i, tag
    if current is not None and current != tag_set.outside:
        spans.append(EntitySpan(current, start, len(tags)))
    return spans


def _detect_scheme(all_tags: list[str]) -> str:
    for tag in all_tags:
        if tag.startswith("B-") or tag.startswith("I-"):
            return "bio"
    return "io"


def read_conll(
    path,
    scheme: str = "auto",
    tag_set: TagSet | None = None,
    provenance: str = "gold",
) -> Dataset:
    """Read a two-column UTF-8 CoNLL file: ``token<TAB>tag``, blank line
    between sentences, final newline optional.

    ``scheme`` is ``bio``, ``io``, or ``auto`` (detects B-/I- prefixes and
    otherwise treats tags as IO).
    """
    if scheme not in ("bio", "io", "auto"):
        raise ValueError(f"unknown scheme {scheme!r}")
    tag_set = tag_set or TagSet()
    sentences_raw: list[tuple[list[str], list[str], int]] = []
    tokens: list[str] = []
    tags: list[str] = []
    first_line = 0

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    sentences_raw.append((tokens, tags, first_line))
                    tokens, tags = [], []
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(
                    f"{path}:{lineno}: expected 'token<TAB>tag', got {line!r}"
                )
            if any(ch.isspace() for ch in parts[0]):
                raise ParseError(
                    f"{path}:{lineno}: token contains whitespace: {parts[0]!r}"
                )
            if not tokens:
                first_line = lineno
            tokens.append(parts[0])
            tags.append(parts[1])
    if tokens:
        sentences_raw.append((tokens, tags, first_line))

    if scheme == "auto":
        scheme = _detect_scheme([t for _, ts, _ in sentences_raw for t in ts])
    decode = bio_to_spans if scheme == "bio" else io_to_spans

    sentences = []
    for toks, ts, lineno in sentences_raw:
        try:
            spans = decode(ts, tag_set)
        except SchemaError as exc:
            raise SchemaError(f"{path}: sentence at line {lineno}: {exc}") from None
        sentences.append(LabeledSentence(tuple(toks), tuple(spans), provenance))
    return Dataset(tuple(sentences), tag_set)


def write_conll(dataset: Dataset, path) -> None:
    """Write a dataset in BIO encoding (the lossless serialization)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sent in dataset.sentences:
            for token, tag in zip(sent.tokens, spans_to_bio(sent, dataset.tag_set.outside)):
                fh.write(f"{token}\t{tag}\n")
            fh.write("\n")


def read_tokens(path, provenance: str = "distant") -> Dataset:
    """Read an unlabeled pre-tokenized file: one token per line, blank line
    between sentences. Lines with a tab also work (tags are ignored)."""
    sentences = []
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                if tokens:
                    sentences.append(LabeledSentence(tuple(tokens), (), provenance))
                    tokens = []
                continue
            token = line.split("\t")[0]
            if not token or any(ch.isspace() for ch in token):
                raise ParseError(f"{path}:{lineno}: bad token line {line!r}")
            tokens.append(token)
    if tokens:
        sentences.append(LabeledSentence(tuple(tokens), (), provenance))
    return Dataset(tuple(sentences))


def subsample_tokens(dataset: Dataset, budget: int, seed: int) -> Dataset:
    """Whole sentences in seeded random order until the cumulative token
    count first reaches or exceeds *budget*.

    A budget at or above the corpus size returns every sentence (reordered);
    a budget of zero returns an empty dataset.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if budget == 0:
        return Dataset((), dataset.tag_set)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset.sentences))
    picked = []
    total = 0
    for idx in order:
        picked.append(dataset.sentences[int(idx)])
        total += len(dataset.sentences[int(idx)])
        if total >= budget:
            break
    return Dataset(tuple(picked), dataset.tag_set)
