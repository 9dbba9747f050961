"""Synthetic low-resource tagging tasks.

Words carry a class identity; their embeddings sit near a class centroid
with per-word jitter, so a model can both generalize across words and
memorize individual ones. Noisy twins of gold datasets are produced either
by uniform label flips or by sampling through an explicit channel, which
gives benchmarks with a known ground-truth noise process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, LabeledSentence, TagSet, io_to_spans, spans_to_io
from .noise import ConfusionMatrix
from .tagger import EmbeddingTable


@dataclass(frozen=True)
class SynthTask:
    clean: Dataset
    distant: Dataset
    pair_source: Dataset
    test: Dataset
    table: EmbeddingTable
    true_channel: ConfusionMatrix | None = None


def _make_vocabulary(rng, tag_set: TagSet, entity_words: int, outside_words: int,
                     dim: int, centroid_scale: float, jitter: float,
                     marker_words: float = 0.0):
    """Words per label with centroid-plus-jitter embeddings.

    ``marker_words`` > 0 reserves embedding dimension 0 as a marker set on
    that fraction of each entity class's words (feature-dependent noise
    experiments key off it).
    """
    words_by_label: dict[str, list[str]] = {}
    marked: set[str] = set()
    vocab: dict[str, int] = {}
    vectors = []
    labels = (tag_set.outside,) + tag_set.entity_types
    counts = {lab: entity_words for lab in tag_set.entity_types}
    counts[tag_set.outside] = outside_words
    for lab in labels:
        centroid = rng.normal(0.0, centroid_scale, size=dim)
        centroid[0] = 0.0
        words = []
        for i in range(counts[lab]):
            word = f"{lab.lower()}{i}"
            vec = centroid + rng.normal(0.0, jitter, size=dim)
            vec[0] = 0.0
            if (lab != tag_set.outside and marker_words > 0.0
                    and i < int(counts[lab] * marker_words)):
                vec[0] = 2.0
                marked.add(word)
            vocab[word] = len(vectors)
            vectors.append(vec)
            words.append(word)
        words_by_label[lab] = words
    return words_by_label, EmbeddingTable(vocab, np.array(vectors)), marked


def _make_sentences(rng, words_by_label, tag_set: TagSet, total_tokens: int,
                    min_len: int, max_len: int, entity_rate: float,
                    provenance: str = "gold") -> list[LabeledSentence]:
    sentences = []
    produced = 0
    entity_types = tag_set.entity_types
    while produced < total_tokens:
        n = int(rng.integers(min_len, max_len + 1))
        tokens = []
        tags = []
        for _ in range(n):
            if rng.random() < entity_rate:
                lab = entity_types[int(rng.integers(len(entity_types)))]
            else:
                lab = tag_set.outside
            words = words_by_label[lab]
            tokens.append(words[int(rng.integers(len(words)))])
            tags.append(lab)
        spans = io_to_spans(tags, tag_set)
        sentences.append(LabeledSentence(tuple(tokens), tuple(spans), provenance))
        produced += n
    return sentences


def _label_indices(sentence: LabeledSentence, tag_set: TagSet) -> list[int]:
    return [tag_set.index(t) for t in spans_to_io(sentence, tag_set.outside)]


def _from_indices(sentence: LabeledSentence, indices, tag_set: TagSet,
                  provenance: str = "distant") -> LabeledSentence:
    labels = tag_set.labels
    tags = [labels[i] for i in indices]
    return LabeledSentence(sentence.tokens, tuple(io_to_spans(tags, tag_set)),
                           provenance)


def uniform_flip(dataset: Dataset, noise_rate: float, seed) -> Dataset:
    """Noisy twin: each token's label flips, with probability
    ``noise_rate``, to a label drawn uniformly from the other labels."""
    rng = np.random.default_rng(seed)
    L = dataset.tag_set.size
    out = []
    for sent in dataset.sentences:
        idx = np.array(_label_indices(sent, dataset.tag_set))
        flips = rng.random(len(idx)) < noise_rate
        offsets = rng.integers(1, L, size=len(idx))
        noisy = np.where(flips, (idx + offsets) % L, idx)
        out.append(_from_indices(sent, noisy, dataset.tag_set))
    return Dataset(tuple(out), dataset.tag_set)


def channel_flip(dataset: Dataset, channel: ConfusionMatrix, seed) -> Dataset:
    """Noisy twin drawn through an explicit channel row per clean label."""
    rng = np.random.default_rng(seed)
    cum = channel.matrix.cumsum(axis=1)
    out = []
    for sent in dataset.sentences:
        idx = _label_indices(sent, dataset.tag_set)
        noisy = [int(np.searchsorted(cum[t], rng.random(), side="right"))
                 for t in idx]
        noisy = [min(n, channel.matrix.shape[1] - 1) for n in noisy]
        out.append(_from_indices(sent, noisy, dataset.tag_set))
    return Dataset(tuple(out), dataset.tag_set)


# ---------------------------------------------------------------------------
# benchmark tasks


def make_noise_benchmark(seed: int, *, clean_tokens: int = 200,
                         noisy_tokens: int = 5000, test_tokens: int = 2000,
                         noise_rate: float = 0.3, entity_words: int = 220,
                         outside_words: int = 260, dim: int = 12,
                         centroid_scale: float = 1.0, jitter: float = 1.0,
                         entity_rate: float = 0.55) -> SynthTask:
    """Scarce clean data plus a large uniformly-noised pool over the same
    vocabulary; the test split shares the vocabulary but not the sentences."""
    rng = np.random.default_rng([seed, 0])
    tag_set = TagSet()
    words, table, _ = _make_vocabulary(rng, tag_set, entity_words, outside_words,
                                       dim, centroid_scale, jitter)
    clean = Dataset(tuple(_make_sentences(rng, words, tag_set, clean_tokens,
                                          5, 10, entity_rate)), tag_set)
    pool = Dataset(tuple(_make_sentences(rng, words, tag_set, noisy_tokens,
                                         5, 10, entity_rate)), tag_set)
    test = Dataset(tuple(_make_sentences(rng, words, tag_set, test_tokens,
                                         5, 10, entity_rate)), tag_set)
    distant = uniform_flip(pool, noise_rate, [seed, 1])
    pair_source = uniform_flip(clean, noise_rate, [seed, 2])
    return SynthTask(clean, distant, pair_source, test, table)


RECOVERY_CHANNEL = np.array([
    [0.70, 0.15, 0.05, 0.05, 0.05],
    [0.10, 0.70, 0.10, 0.05, 0.05],
    [0.05, 0.05, 0.75, 0.10, 0.05],
    [0.05, 0.10, 0.05, 0.70, 0.10],
    [0.10, 0.05, 0.05, 0.10, 0.70],
])


def make_recovery_task(seed: int, *, tokens: int = 5000, entity_words: int = 12,
                       outside_words: int = 12, dim: int = 8,
                       centroid_scale: float = 1.2, jitter: float = 0.2,
                       entity_rate: float = 0.8, min_len: int = 3,
                       max_len: int = 6):
    """Cleanly separable data pushed through a fixed known channel; EM
    should recover the channel. Returns (noisy data, gold data, channel,
    embeddings)."""
    rng = np.random.default_rng([seed, 0])
    tag_set = TagSet()
    channel = ConfusionMatrix(tag_set.labels, RECOVERY_CHANNEL)
    words, table, _ = _make_vocabulary(rng, tag_set, entity_words, outside_words,
                                       dim, centroid_scale, jitter)
    gold = Dataset(tuple(_make_sentences(rng, words, tag_set, tokens,
                                         min_len, max_len, entity_rate)), tag_set)
    noisy = channel_flip(gold, channel, [seed, 1])
    return noisy, gold, channel, table


def make_feature_noise_task(seed: int, *, clean_tokens: int = 400,
                            noisy_tokens: int = 4000, test_tokens: int = 1500,
                            entity_words: int = 80, outside_words: int = 120,
                            dim: int = 12, centroid_scale: float = 1.2,
                            jitter: float = 0.5, entity_rate: float = 0.5,
                            marker_words: float = 0.5) -> SynthTask:
    """Noise that depends on the input: marked words (marker set in the
    embedding) get their labels rotated to the next entity type; unmarked
    words keep clean labels. A global channel cannot express this."""
    rng = np.random.default_rng([seed, 0])
    tag_set = TagSet()
    words, table, marked = _make_vocabulary(
        rng, tag_set, entity_words, outside_words, dim, centroid_scale,
        jitter, marker_words=marker_words)
    clean = Dataset(tuple(_make_sentences(rng, words, tag_set, clean_tokens,
                                          5, 10, entity_rate)), tag_set)
    pool = Dataset(tuple(_make_sentences(rng, words, tag_set, noisy_tokens,
                                         5, 10, entity_rate)), tag_set)
    test = Dataset(tuple(_make_sentences(rng, words, tag_set, test_tokens,
                                         5, 10, entity_rate)), tag_set)

    def corrupt(ds: Dataset) -> Dataset:
        n_types = len(tag_set.entity_types)
        out = []
        for sent in ds.sentences:
            idx = _label_indices(sent, tag_set)
            noisy = [
                1 + (t % n_types) if (tok in marked and t > 0) else t
                for tok, t in zip(sent.tokens, idx)
            ]
            out.append(_from_indices(sent, noisy, tag_set))
        return Dataset(tuple(out), tag_set)

    return SynthTask(clean, corrupt(pool), corrupt(clean), test, table)
