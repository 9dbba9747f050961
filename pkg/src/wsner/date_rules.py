"""Rule-based DATE annotation.

A token is marked DATE when it is a date keyword, immediately follows a
date keyword, or (optionally) is made of decimal digits only; maximal runs
of marked tokens become single DATE spans.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .corpus import EntitySpan
from .errors import ParseError
from .textnorm import canonical

DEFAULT_KEYWORD_RESOURCE = "date_keywords_yo.txt"

# Matches whole tokens like "8" or "2018" but not "8th" or "08:30".
DIGITS_ONLY = r"[0-9]+"


@dataclass(frozen=True)
class DateRuleSet:
    """Keyword set (stored in canonical form) plus the digit rule switch."""

    keywords: frozenset[str]
    digit_rule_enabled: bool = True
    digit_pattern: str = DIGITS_ONLY
    date_label: str = "DATE"

    @classmethod
    def from_keywords(cls, words, **kwargs) -> "DateRuleSet":
        return cls(frozenset(canonical(w) for w in words), **kwargs)

    @classmethod
    def load(cls, path, **kwargs) -> "DateRuleSet":
        """Read keywords from a UTF-8 file, one per line; ``#`` lines and
        blank lines are ignored."""
        words = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                word = line.strip()
                if not word or word.startswith("#"):
                    continue
                if any(ch.isspace() for ch in word):
                    raise ParseError(
                        f"{path}:{lineno}: keyword contains whitespace: {word!r}"
                    )
                words.append(word)
        return cls.from_keywords(words, **kwargs)


def default_date_rules(**kwargs) -> DateRuleSet:
    """The bundled Yorùbá rule set (11 keywords, digit rule on)."""
    text = resources.files("wsner.data").joinpath(DEFAULT_KEYWORD_RESOURCE).read_text("utf-8")
    words = [w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#")]
    return DateRuleSet.from_keywords(words, **kwargs)


def annotate_dates(tokens, rules: DateRuleSet) -> list[EntitySpan]:
    """DATE spans for a token sequence under *rules*.

    Comparison is on the canonical form, so input casing and diacritics do
    not matter. Returned spans are maximal runs (never adjacent).
    """
    digit_re = re.compile(rules.digit_pattern) if rules.digit_rule_enabled else None
    is_kw = [canonical(tok) in rules.keywords for tok in tokens]
    marked = []
    for i, tok in enumerate(tokens):
        hit = is_kw[i] or (i > 0 and is_kw[i - 1])
        if not hit and digit_re is not None and digit_re.fullmatch(tok):
            hit = True
        marked.append(hit)

    spans: list[EntitySpan] = []
    start = None
    for i, flag in enumerate(marked):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            spans.append(EntitySpan(rules.date_label, start, i))
            start = None
    if start is not None:
        spans.append(EntitySpan(rules.date_label, start, len(tokens)))
    return spans
