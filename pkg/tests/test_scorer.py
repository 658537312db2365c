import numpy as np
import pytest

from ggparse import nn
from ggparse.scorer import Model, ModelDims, _forward, encode, load_external_embeddings, score_sentence, sentence_ids
from ggparse.scores import NUM_LAYERS, ScoreSet, dump_scores, load_scores, order_priority
from ggparse.treebank import Sentence, build_vocab
from ggparse.trees import oracle_scores

from conftest import FIG1_HEADS, make_sentence

TINY = ModelDims(word_dim=6, pos_dim=4, char_dim=3, char_filters=5, hidden=4, layers=2,
                 arc_dim=5, order_dim=4, label_dim=3)


@pytest.fixture
def model(fig1_sentence):
    return Model(build_vocab([fig1_sentence], 1), TINY, seed=0)


def test_score_shapes(model, fig1_sentence):
    ss = score_sentence(fig1_sentence, model)
    n, L = 6, len(model.vocab.labels)
    assert ss.arc.shape == (n + 1, n + 1)
    assert ss.arc_prob.shape == (n + 1, n + 1)
    assert ss.order_logits.shape == (n, NUM_LAYERS)
    assert ss.label.shape == (n + 1, n, L)
    assert np.all((ss.arc_prob > 0) & (ss.arc_prob < 1))


def test_constant_output_when_only_biases_are_set(model, fig1_sentence):
    for k in model.params:
        model.params[k][...] = 0.0
    model.params["arc_b"][0] = 1.5
    model.params["order_b"][7] = 2.0
    model.params["label_b"][:] = np.arange(len(model.vocab.labels))
    ss = score_sentence(fig1_sentence, model)
    assert np.all(ss.arc == 1.5)
    assert np.allclose(ss.arc_prob, 1 / (1 + np.exp(-1.5)))
    assert list(ss.priorities()) == [7] * 6
    assert np.all(ss.label == np.arange(len(model.vocab.labels)))


def test_zero_parameters_give_zero_context(model, fig1_sentence):
    for k in model.params:
        model.params[k][...] = 0.0
    assert np.all(encode(fig1_sentence, model) == 0.0)


def test_arc_biaffine_matches_explicit_loops():
    rng = np.random.default_rng(1)
    Ah, Ad = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    W, U, V, b = rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3), rng.normal(size=1)
    S, _ = nn.biaffine_arc_forward(Ah, Ad, W, U, V, b)
    for h in range(5):
        for d in range(5):
            ref = sum(Ah[h, i] * W[i, j] * Ad[d, j] for i in range(3) for j in range(3))
            ref += sum(U[i] * Ah[h, i] for i in range(3)) + sum(V[j] * Ad[d, j] for j in range(3)) + b[0]
            assert abs(S[h, d] - ref) <= 1e-10


def test_label_biaffine_full_and_pairwise_agree_with_loops():
    rng = np.random.default_rng(2)
    L, k = 4, 3
    Lh, Ld = rng.normal(size=(5, k)), rng.normal(size=(4, k))
    W, U, V, b = rng.normal(size=(L, k, k)), rng.normal(size=(L, k)), rng.normal(size=(L, k)), rng.normal(size=L)
    full = nn.biaffine_label_full(Lh, Ld, W, U, V, b)
    for h in range(5):
        for d in range(4):
            for r in range(L):
                ref = Lh[h] @ W[r] @ Ld[d] + U[r] @ Lh[h] + V[r] @ Ld[d] + b[r]
                assert abs(full[h, d, r] - ref) <= 1e-10
    heads = np.array([2, 0, 4, 1])
    pairs, _ = nn.biaffine_label_pairs_forward(Lh[heads], Ld, W, U, V, b)
    assert np.allclose(pairs, full[heads, np.arange(4)], atol=1e-12)


def test_masked_arc_blocks_self_loops_and_root_column():
    ss = ScoreSet(np.zeros((4, 4)), np.zeros((3, NUM_LAYERS)))
    m = ss.masked_arc()
    assert np.all(np.isneginf(np.diag(m))) and np.all(np.isneginf(m[:, 0]))
    assert np.all(m[0, 1:] == 0) and np.all(ss.arc == 0)


def test_arc_probability_is_monotone_in_raw_score():
    raw = np.random.default_rng(3).normal(scale=20, size=(8, 8))
    p = ScoreSet(raw, np.zeros((7, NUM_LAYERS))).arc_prob
    order = np.argsort(raw, axis=None, kind="stable")
    assert np.all(np.diff(p.ravel()[order]) >= 0)
    ends = ScoreSet(np.array([[0.0, np.inf], [-np.inf, 0.0]]), np.zeros((1, NUM_LAYERS))).arc_prob
    assert ends[0, 1] == 1.0 and ends[1, 0] == 0.0


def test_order_priority_prefers_lower_layer_on_ties():
    logits = np.zeros((2, NUM_LAYERS))
    logits[0, [4, 9]] = 3.0
    ss = ScoreSet(np.zeros((3, 3)), logits)
    assert order_priority(ss, 1) == 4
    assert order_priority(ss, 2) == 0
    with pytest.raises(IndexError):
        order_priority(ss, 3)


def test_eval_scoring_is_deterministic_and_train_needs_rng(model, fig1_sentence):
    a = score_sentence(fig1_sentence, model)
    b = score_sentence(fig1_sentence, model)
    assert np.array_equal(a.arc, b.arc) and np.array_equal(a.label, b.label)
    with pytest.raises(ValueError):
        score_sentence(fig1_sentence, model, mode="train")
    t1 = score_sentence(fig1_sentence, model, "train", np.random.default_rng(4))
    t2 = score_sentence(fig1_sentence, model, "train", np.random.default_rng(4))
    assert np.array_equal(t1.arc, t2.arc)
    assert not np.array_equal(t1.arc, a.arc)
    with pytest.raises(ValueError):
        score_sentence(fig1_sentence, model, mode="predict")


def test_context_reaches_every_position(model, fig1_sentence):
    other = make_sentence(["The", "test", "may", "come", "tomorrow", "."], FIG1_HEADS)
    for t, u in zip(other.tokens, fig1_sentence.tokens):
        t.upos = u.upos
    h1, h2 = encode(fig1_sentence, model), encode(other, model)
    # only word 5 changed, yet the root row and word 1 see it through the backward direction
    assert not np.allclose(h1[0], h2[0]) and not np.allclose(h1[1], h2[1])


def test_unknown_words_use_unk(model):
    s = make_sentence(["zzz", "qqq"], [0, 1])
    ids = sentence_ids(s, model)
    assert list(ids.words) == [1, 1]
    assert score_sentence(s, model).n == 2
    with pytest.raises(ValueError):
        sentence_ids(Sentence([], "empty"), model)


def test_gold_mode_label_rows_match_full_tensor(model, fig1_sentence):
    ids = sentence_ids(fig1_sentence, model)
    full, _ = _forward(model, ids)
    ss, cache = _forward(model, ids, gold_heads=FIG1_HEADS)
    assert ss.label is None
    assert np.allclose(cache["label_gold"], full.label[FIG1_HEADS, np.arange(6)], atol=1e-12)


def test_large_dims_and_shapes():
    d = ModelDims.large()
    assert (d.hidden, d.layers, d.arc_dim, d.order_dim, d.label_dim) == (512, 3, 512, 128, 128)
    v = build_vocab([make_sentence(["a"], [0])], 1)
    m = Model(v, ModelDims(hidden=3))
    assert m.params["lstm0_fw_b"][3:6].tolist() == [1.0, 1.0, 1.0]
    bad = {k: v.copy() for k, v in m.params.items()}
    bad["arc_W"] = np.zeros((2, 2))
    with pytest.raises(ValueError):
        Model(v, m.dims, bad)


def test_external_embeddings_feed_the_encoder(tmp_path, fig1_sentence):
    path = tmp_path / "ext.txt"
    path.write_text("dim 2\nthe\t1 0\ncome\t0 1\n", encoding="utf-8")
    vecs, dim = load_external_embeddings(path)
    assert dim == 2 and vecs["come"].tolist() == [0.0, 1.0]
    m = Model(build_vocab([fig1_sentence], 1), ModelDims(**{**TINY.to_dict(), "ext_dim": 0}), external=vecs)
    assert m.dims.ext_dim == 2
    ids = sentence_ids(fig1_sentence, m)
    assert ids.ext[0].tolist() == [1.0, 0.0]  # "The" falls back to lowercase
    assert ids.ext[1].tolist() == [0.0, 0.0]
    bad = tmp_path / "bad.txt"
    bad.write_text("dim 3\nx\t1 2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_external_embeddings(bad)


def test_score_interchange_round_trip(tmp_path, model, fig1_sentence):
    ss = score_sentence(fig1_sentence, model)
    oracle = oracle_scores(FIG1_HEADS)
    path = tmp_path / "scores.txt"
    dump_scores([("fig 1", ss), ("oracle", oracle)], path)
    blocks = load_scores(path)
    assert [sid for sid, _ in blocks] == ["fig_1", "oracle"]
    back = blocks[0][1]
    assert np.array_equal(back.arc, ss.arc)
    assert np.array_equal(back.order_logits, ss.order_logits)
    assert np.array_equal(back.label, ss.label)
    assert np.array_equal(blocks[1][1].arc_prob, oracle.arc_prob)
    assert blocks[1][1].label is None


def test_score_interchange_rejects_truncation(tmp_path, model, fig1_sentence):
    path = tmp_path / "scores.txt"
    dump_scores([("s", score_sentence(fig1_sentence, model))], path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:5]) + "\n")
    with pytest.raises(ValueError):
        load_scores(path)
