import math

import numpy as np
import pytest

from wsner.corpus import Dataset, EntitySpan, LabeledSentence, TagSet
from wsner.errors import ParseError
from wsner.tagger import (
    EmbeddingTable,
    TaggerConfig,
    TaggerParams,
    forward,
    init_params,
    load_checkpoint,
    loss_and_gradient,
    predict,
    save_checkpoint,
    train,
)

from conftest import make_dataset, make_sentence
from gradcheck import finite_difference, max_relative_error


# ---------------------------------------------------------------------------
# embeddings


def test_load_embeddings(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("2 3\nfoo 1.0 2.0 3.0\nbar 0.0 1.0 0.5\n", encoding="utf-8")
    table = EmbeddingTable.load(path)
    assert len(table) == 2 and table.dimension == 3
    assert np.array_equal(table.lookup("foo"), [1.0, 2.0, 3.0])


def test_unknown_token_gets_mean_vector(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("2 2\na 1.0 3.0\nb 3.0 5.0\n", encoding="utf-8")
    table = EmbeddingTable.load(path)
    # independent mean computation
    expected = np.array([(1.0 + 3.0) / 2, (3.0 + 5.0) / 2])
    assert np.abs(table.lookup("zzz") - expected).max() < 1e-12


def test_unk_is_mean_of_rows_large(tmp_path):
    rng = np.random.default_rng(5)
    rows = rng.normal(size=(40, 6))
    lines = ["40 6"]
    for i, row in enumerate(rows):
        lines.append("w%d %s" % (i, " ".join(repr(float(v)) for v in row)))
    path = tmp_path / "vec.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    table = EmbeddingTable.load(path)
    manual = np.zeros(6)
    for row in rows:
        manual += row
    manual /= 40
    assert np.abs(table.unk - manual).max() < 1e-12


def test_load_embeddings_errors(tmp_path):
    bad_header = tmp_path / "h.txt"
    bad_header.write_text("notanumber\n", encoding="utf-8")
    with pytest.raises(ParseError, match=":1"):
        EmbeddingTable.load(bad_header)

    bad_row = tmp_path / "r.txt"
    bad_row.write_text("1 3\nfoo 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ParseError, match=":2"):
        EmbeddingTable.load(bad_row)

    short = tmp_path / "s.txt"
    short.write_text("2 2\nfoo 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ParseError, match="header announced"):
        EmbeddingTable.load(short)


def test_duplicate_tokens_keep_first(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("2 1\nfoo 1.0\nfoo 2.0\n", encoding="utf-8")
    table = EmbeddingTable.load(path)
    assert len(table) == 2  # both rows kept
    assert table.lookup("foo")[0] == 1.0


# ---------------------------------------------------------------------------
# forward


def test_zero_params_give_uniform(tiny_table):
    ts = TagSet(("PER", "LOC"))
    params = init_params(np.random.default_rng(0), "lstm", 4, 3, 4, ts.size)
    zero = params.zeros_like()
    zero.cell = params.cell
    probs = forward(["w0", "w1"], zero, tiny_table)
    assert np.abs(probs - 1.0 / ts.size).max() < 1e-15


def test_rows_sum_to_one(tiny_table):
    params = init_params(np.random.default_rng(1), "lstm", 4, 5, 6, 5)
    probs = forward(["w0", "w1", "w2", "zzz"], params, tiny_table)
    assert probs.shape == (4, 5)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9
    assert (probs >= 0).all()


def _scalar_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_hand_computed_tiny_forward():
    # d=2, h=1, L=2, f=2, single token: every gate is a scalar
    x = np.array([0.3, -0.4])
    table = EmbeddingTable({"tok": 0}, x[None, :])
    w_in_f = np.array([[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6], [0.7, 0.8]])
    w_in_b = np.array([[-0.2, 0.3], [0.4, 0.1], [-0.5, 0.2], [0.6, -0.7]])
    u = np.array([[0.9], [-0.8], [0.7], [-0.6]])
    b_f = np.array([0.05, -0.1, 0.15, 0.2])
    b_b = np.array([-0.05, 0.1, -0.15, 0.25])
    w_feat = np.array([[0.2, -0.1], [0.3, 0.4]])
    b_feat = np.array([0.01, -0.02])
    w_out = np.array([[0.5, -0.5], [0.25, 0.75]])
    b_out = np.array([0.1, -0.1])
    params = TaggerParams("lstm", w_in_f, u.copy(), b_f, w_in_b, u.copy(), b_b,
                          w_feat, b_feat, w_out, b_out)

    def lstm_scalar(w_in, bias):
        z = [w_in[k] @ x + bias[k] for k in range(4)]  # h_prev = 0
        i, f = _scalar_sigmoid(z[0]), _scalar_sigmoid(z[1])
        g, o = math.tanh(z[2]), _scalar_sigmoid(z[3])
        c = i * g  # c_prev = 0
        return o * math.tanh(c)

    h_f = lstm_scalar(w_in_f, b_f)
    h_b = lstm_scalar(w_in_b, b_b)
    feat = [w_feat[0][0] * h_f + w_feat[0][1] * h_b + b_feat[0],
            w_feat[1][0] * h_f + w_feat[1][1] * h_b + b_feat[1]]
    logits = [w_out[0][0] * feat[0] + w_out[0][1] * feat[1] + b_out[0],
              w_out[1][0] * feat[0] + w_out[1][1] * feat[1] + b_out[1]]
    exps = [math.exp(v - max(logits)) for v in logits]
    expected = np.array([e / sum(exps) for e in exps])

    probs = forward(["tok"], params, table)
    assert np.abs(probs[0] - expected).max() < 1e-12


def test_vocab_permutation_invariance(tiny_table):
    params = init_params(np.random.default_rng(2), "lstm", 4, 3, 4, 5)
    rng = np.random.default_rng(3)
    perm = rng.permutation(len(tiny_table))
    permuted = EmbeddingTable(
        {tok: int(np.where(perm == row)[0][0]) for tok, row in tiny_table.vocab.items()},
        tiny_table.matrix[perm],
    )
    tokens = ["w0", "w3", "w7"]
    assert np.array_equal(forward(tokens, params, tiny_table),
                          forward(tokens, params, permuted))


# ---------------------------------------------------------------------------
# loss and gradient


def _random_model(rng, cell="lstm"):
    d = int(rng.integers(2, 4))
    h = int(rng.integers(1, 3))
    f = int(rng.integers(2, 4))
    ts = TagSet(("PER", "LOC") if rng.random() < 0.5 else ("PER",))
    vocab = {f"w{i}": i for i in range(6)}
    table = EmbeddingTable(vocab, rng.normal(size=(6, d)))
    params = init_params(rng, cell, d, h, f, ts.size)
    sents = []
    for _ in range(int(rng.integers(1, 3))):
        n = int(rng.integers(1, 5))
        tokens = tuple(f"w{int(rng.integers(6))}" for _ in range(n))
        spans = []
        if n >= 2 and rng.random() < 0.7:
            label = ts.entity_types[int(rng.integers(len(ts.entity_types)))]
            spans.append(EntitySpan(label, 0, int(rng.integers(1, n + 1))))
        sents.append(LabeledSentence(tokens, tuple(spans)))
    return params, table, ts, sents


@pytest.mark.parametrize("cell", ["lstm", "rnn"])
def test_gradient_matches_finite_differences(cell):
    rng = np.random.default_rng(0 if cell == "lstm" else 1)
    for _ in range(8):
        params, table, ts, sents = _random_model(rng, cell)
        assert params.num_parameters <= 200
        _, grads = loss_and_gradient(sents, params, table, ts)
        arrays = [arr for _, arr in params.arrays()]
        numeric = finite_difference(
            lambda: loss_and_gradient(sents, params, table, ts)[0], arrays)
        analytic = [arr for _, arr in grads.arrays()]
        assert max_relative_error(analytic, numeric) < 1e-4


def test_soft_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    params, table, ts, sents = _random_model(rng)
    soft = []
    for s in sents:
        w = rng.random((len(s.tokens), ts.size))
        soft.append(w / w.sum(axis=1, keepdims=True))
    _, grads = loss_and_gradient(sents, params, table, ts, soft_targets=soft)
    arrays = [arr for _, arr in params.arrays()]
    numeric = finite_difference(
        lambda: loss_and_gradient(sents, params, table, ts, soft_targets=soft)[0],
        arrays)
    assert max_relative_error([a for _, a in grads.arrays()], numeric) < 1e-4


def test_perfect_soft_target_gives_zero_gradient(tiny_table):
    ts = TagSet(("PER", "LOC"))
    params = init_params(np.random.default_rng(4), "lstm", 4, 2, 3, ts.size)
    sent = make_sentence(("w0", "w1"))
    probs = forward(sent.tokens, params, tiny_table)
    loss, grads = loss_and_gradient([sent], params, tiny_table, ts,
                                    soft_targets=[probs])
    # cross-entropy of a distribution with itself is its entropy
    entropy = float(-(probs * np.log(probs)).sum() / len(sent.tokens))
    assert loss == pytest.approx(entropy, abs=1e-12)
    for _, g in grads.arrays():
        assert np.abs(g).max() < 1e-12


def test_duplicating_batch_keeps_mean_loss(tiny_table):
    ts = TagSet(("PER", "LOC"))
    params = init_params(np.random.default_rng(5), "lstm", 4, 2, 3, ts.size)
    sents = [make_sentence(("w0", "w1"), (EntitySpan("PER", 0, 1),)),
             make_sentence(("w2",))]
    loss_once, _ = loss_and_gradient(sents, params, tiny_table, ts)
    loss_twice, _ = loss_and_gradient(sents + sents, params, tiny_table, ts)
    assert loss_twice == pytest.approx(loss_once, rel=1e-12)


# ---------------------------------------------------------------------------
# training


def _toy_corpus():
    # five sentences, word identity determines the label
    ts = TagSet(("PER", "LOC"))
    vocab = {f"w{i}": i for i in range(6)}
    table = EmbeddingTable(vocab, np.random.default_rng(11).normal(size=(6, 4)))
    label_of = {"w0": "O", "w1": "PER", "w2": "LOC", "w3": "O", "w4": "PER", "w5": "O"}
    sents = []
    seqs = [("w0", "w1", "w2"), ("w3", "w4"), ("w2", "w0"), ("w1", "w5", "w3"),
            ("w4", "w2", "w5")]
    for seq in seqs:
        tags = [label_of[w] for w in seq]
        from wsner.corpus import io_to_spans
        sents.append(LabeledSentence(seq, tuple(io_to_spans(tags, ts))))
    return Dataset(tuple(sents), ts), table


def _token_accuracy_on(ds, params, table):
    from wsner.evaluation import token_accuracy
    return token_accuracy(ds, predict(ds, params, table))


def test_overfits_toy_corpus_within_200_epochs():
    ds, table = _toy_corpus()
    config = TaggerConfig(hidden_size=8, feature_size=8, learning_rate=0.1,
                          epochs=200, seed=0)
    params = train(ds, config, table)
    assert _token_accuracy_on(ds, params, table) == 1.0


def test_training_is_deterministic_per_seed():
    ds, table = _toy_corpus()
    config = TaggerConfig(hidden_size=4, feature_size=4, learning_rate=0.05,
                          epochs=5, seed=3)
    a = train(ds, config, table)
    b = train(ds, config, table)
    for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


def test_seed_changes_parameters():
    ds, table = _toy_corpus()
    base = dict(hidden_size=4, feature_size=4, learning_rate=0.05, epochs=2)
    a = train(ds, TaggerConfig(seed=0, **base), table)
    b = train(ds, TaggerConfig(seed=1, **base), table)
    assert any(not np.array_equal(x, y)
               for (_, x), (_, y) in zip(a.arrays(), b.arrays()))


def test_epoch_losses_non_increasing_at_small_lr():
    ds, table = _toy_corpus()
    losses = []
    for epochs in range(1, 21):
        config = TaggerConfig(hidden_size=6, feature_size=6, learning_rate=0.01,
                              epochs=epochs, seed=2)
        params = train(ds, config, table)
        loss, _ = loss_and_gradient(list(ds.sentences), params, table, ds.tag_set)
        losses.append(loss)
    increases = sum(1 for a, b in zip(losses, losses[1:]) if b > a + 1e-9)
    assert increases <= max(1, int(0.05 * len(losses)))


def test_frozen_embeddings_are_bit_identical():
    ds, table = _toy_corpus()
    before = table.matrix.copy()
    unk_before = table.unk.copy()
    config = TaggerConfig(hidden_size=4, feature_size=4, learning_rate=0.05,
                          epochs=3, seed=0)
    train(ds, config, table)
    assert np.array_equal(table.matrix, before)
    assert np.array_equal(table.unk, unk_before)


def test_fine_tuning_updates_embeddings():
    ds, table = _toy_corpus()
    before = table.matrix.copy()
    config = TaggerConfig(hidden_size=4, feature_size=4, learning_rate=0.05,
                          epochs=3, seed=0, fine_tune_embeddings=True)
    train(ds, config, table)
    assert not np.array_equal(table.matrix, before)


# ---------------------------------------------------------------------------
# prediction


def test_uniform_output_decodes_to_no_spans(tiny_table):
    ds = make_dataset([make_sentence(("w0", "w1"))])
    params = init_params(np.random.default_rng(0), "lstm", 4, 2, 3, 5)
    zero = params.zeros_like()
    zero.cell = params.cell
    out = predict(ds, zero, tiny_table)
    assert out.sentences[0].spans == ()


def test_overfit_model_reproduces_gold():
    ds, table = _toy_corpus()
    config = TaggerConfig(hidden_size=8, feature_size=8, learning_rate=0.1,
                          epochs=200, seed=0)
    params = train(ds, config, table)
    out = predict(ds, params, table)
    assert all(o.spans == g.spans for o, g in zip(out.sentences, ds.sentences))


def test_predict_is_pure(tiny_table):
    ds = make_dataset([make_sentence(("w0", "w1", "zzz"))])
    params = init_params(np.random.default_rng(8), "rnn", 4, 3, 4, 5)
    a = predict(ds, params, tiny_table)
    b = predict(ds, params, tiny_table)
    assert a.sentences == b.sentences
    assert a.sentences[0].provenance == "gold"


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path, tiny_table):
    ds, table = _toy_corpus()
    config = TaggerConfig(hidden_size=4, feature_size=4, learning_rate=0.05,
                          epochs=2, seed=0)
    params = train(ds, config, table)
    path = tmp_path / "model.npz"
    save_checkpoint(path, params, ds.tag_set)
    loaded, tag_set = load_checkpoint(path)
    assert tag_set == ds.tag_set
    assert loaded.cell == params.cell
    for (_, x), (_, y) in zip(params.arrays(), loaded.arrays()):
        assert np.array_equal(x, y)
    before = predict(ds, params, table)
    after = predict(ds, loaded, table)
    assert before.sentences == after.sentences
