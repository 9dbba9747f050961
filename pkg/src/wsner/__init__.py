"""Weakly supervised named entity recognition toolkit.

Annotates tokenized text with entity lists and date rules, trains a compact
bidirectional recurrent tagger on mixtures of gold and automatically
labeled data, and offers three ways to soften the damage done by annotation
noise (a trainable confusion-matrix channel, an EM-estimated noise channel,
and a feature-conditioned label cleaner).
"""

from .corpus import (
    Dataset,
    EntitySpan,
    LabeledSentence,
    TagSet,
    bio_to_spans,
    read_conll,
    spans_to_bio,
    subsample_tokens,
    write_conll,
)
from .errors import WsnerError

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EntitySpan",
    "LabeledSentence",
    "TagSet",
    "WsnerError",
    "bio_to_spans",
    "read_conll",
    "spans_to_bio",
    "subsample_tokens",
    "write_conll",
]
