import math
import struct

import numpy as np
import pytest

from ggparse.checkpoint import MAGIC, CheckpointError, load_model, read_header, save_model
from ggparse.scorer import Model, ModelDims, score_sentence
from ggparse.scores import NUM_LAYERS, ScoreSet
from ggparse.synthetic import treebank
from ggparse.training import (
    LossBreakdown,
    OptimizerState,
    PlateauDecay,
    TrainConfig,
    clip_by_global_norm,
    global_norm,
    gradients,
    loss,
    read_config,
    sentence_gradients,
    step,
    train,
    write_config,
)
from ggparse.treebank import build_vocab
from ggparse.trees import DepTree

import gradcheck
from conftest import FIG1_HEADS, make_sentence

SMALL = ModelDims(word_dim=8, pos_dim=4, char_dim=4, char_filters=6, hidden=8, layers=1,
                  arc_dim=8, order_dim=6, label_dim=6)


def _uniform(n):
    return ScoreSet(np.zeros((n + 1, n + 1)), np.zeros((n, NUM_LAYERS)))


@pytest.mark.parametrize("n", [1, 2, 5, 17])
def test_uniform_arc_loss_closed_form(n):
    heads = [0] + list(range(1, n))
    lb = loss(None, DepTree(heads), _uniform(n))
    assert abs(lb.l_arc - n * math.log(n)) <= 1e-9
    assert abs(lb.l_order - n * math.log(NUM_LAYERS)) <= 1e-9
    assert lb.l_rel == 0.0


def test_saturated_gold_scores_give_near_zero_loss():
    n = 6
    arc = np.full((n + 1, n + 1), -1e4)
    for d, h in enumerate(FIG1_HEADS, 1):
        arc[h, d] = 1e4
    order = np.full((n, NUM_LAYERS), -1e4)
    order[np.arange(n), [3, 2, 2, 1, 2, 2]] = 1e4
    lb = loss(None, DepTree(FIG1_HEADS), ScoreSet(arc, order))
    assert lb.total == 0.0


def test_layers_past_the_cap_target_the_last_class():
    n = 40
    heads = [0] + list(range(1, n))
    order = np.zeros((n, NUM_LAYERS))
    order[:, NUM_LAYERS - 1] = 50.0
    for i in range(min(n, 31)):
        order[i, i + 1] = 100.0
    lb = loss(None, DepTree(heads), ScoreSet(np.zeros((n + 1, n + 1)), order))
    assert lb.l_order < 1e-9


def test_arc_loss_ignores_per_column_shifts():
    rng = np.random.default_rng(0)
    arc = rng.normal(size=(7, 7))
    base = loss(None, DepTree(FIG1_HEADS), ScoreSet(arc, np.zeros((6, NUM_LAYERS)))).l_arc
    shifted = arc + rng.normal(size=(1, 7)) * 10
    assert abs(loss(None, DepTree(FIG1_HEADS), ScoreSet(shifted, np.zeros((6, NUM_LAYERS)))).l_arc - base) < 1e-9


def test_diagonal_is_excluded_from_the_head_softmax():
    arc = np.zeros((3, 3))
    arc[1, 1] = arc[2, 2] = 1e6  # a self-loop score must not matter
    assert abs(loss(None, DepTree([0, 1]), ScoreSet(arc, np.zeros((2, NUM_LAYERS)))).l_arc - 2 * math.log(2)) < 1e-9


def test_loss_rejects_bad_gold():
    with pytest.raises(ValueError):
        loss(None, DepTree([2, 1]), _uniform(2))
    with pytest.raises(ValueError):
        loss(None, DepTree([0, 1, 1]), _uniform(2))


def test_gradient_check_without_dropout():
    sent, model = gradcheck.three_word_setup(seed=11, layers=1)
    for name, (err, _, _) in gradcheck.check(sent, model).items():
        assert err < 1e-3, name


def test_gradient_check_with_fixed_dropout_masks():
    sent, model = gradcheck.three_word_setup(seed=5, layers=2)
    for name, (err, _, _) in gradcheck.check(sent, model, dropout_seed=9).items():
        assert err < 1e-3, name


def test_single_word_single_label_is_a_fixed_point():
    s = make_sentence(["alone"], [0], ["root"])
    model = Model(build_vocab([s], 1), SMALL, seed=0)
    model.params["order_b"][1] = 800.0  # softmax saturates exactly
    lb, grads = sentence_gradients(s, model)
    assert lb.total == 0.0
    assert global_norm(grads) == 0.0
    before = {k: v.copy() for k, v in model.params.items()}
    step(OptimizerState(), model, grads)
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_batch_gradient_is_the_mean():
    tb = treebank(3, seed=4)
    model = Model(build_vocab(tb, 1), SMALL, seed=1)
    g1, l1 = gradients(tb[:1], model)
    g2, l2 = gradients([tb[0], tb[0]], model)
    assert all(np.allclose(g1[k], g2[k], atol=1e-14) for k in g1)
    assert abs(l1.total - l2.total) < 1e-12
    ga, _ = gradients(tb[:1], model)
    gb, _ = gradients(tb[1:2], model)
    gm, lm = gradients(tb[:2], model)
    assert all(np.allclose(gm[k], (ga[k] + gb[k]) / 2, atol=1e-12) for k in gm)
    with pytest.raises(ValueError):
        gradients([], model)


def test_clipping_scales_to_the_threshold():
    grads = {"a": np.array([6.0, 0.0]), "b": np.array([[0.0, 8.0]])}
    clipped, norm = clip_by_global_norm(grads, 5.0)
    assert norm == 10.0
    assert np.allclose(clipped["a"], [3.0, 0.0]) and np.allclose(clipped["b"], [[0.0, 4.0]])
    same, _ = clip_by_global_norm(grads, 20.0)
    assert same["a"] is grads["a"]


def test_adam_step_matches_hand_computation():
    s = make_sentence(["x"], [0])
    model = Model(build_vocab([s], 1), SMALL, seed=0)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    grads["arc_b"][0] = 0.5
    before = model.params["arc_b"][0]
    st = OptimizerState(lr=0.1, clip=None)
    step(st, model, grads)
    # first bias-corrected Adam step moves by lr * g / (|g| + eps)
    assert abs(model.params["arc_b"][0] - (before - 0.1 * 0.5 / (0.5 + 1e-8))) < 1e-12
    with pytest.raises(ValueError):
        step(st, model, {"arc_b": grads["arc_b"]})
    grads["arc_b"] = np.zeros(2)
    with pytest.raises(ValueError):
        step(st, model, grads)
    with pytest.raises(ValueError):
        OptimizerState(lr=0.0)


def test_plateau_schedule_decays_after_patience():
    sched = PlateauDecay(1e-3)
    sched.update(50.0)
    for _ in range(2):
        sched.update(50.005)  # below the minimum improvement
    assert sched.lr == 1e-3
    sched.update(50.0)
    assert sched.lr == pytest.approx(7.5e-4)
    for _ in range(30):
        sched.update(0.0)
    assert sched.exhausted and sched.decays == 10


def test_training_loss_decreases_at_the_start():
    tb = treebank(8, seed=2)
    model = Model(build_vocab(tb, 1), SMALL, seed=3)
    st = OptimizerState(lr=2e-3)
    losses = []
    for _ in range(10):
        grads, lb = gradients(tb, model)
        losses.append(lb.total)
        step(st, model, grads)
    increases = sum(1 for a, b in zip(losses, losses[1:]) if b > a)
    assert increases <= 1
    assert losses[-1] < losses[0]


def _tiny_config(**kw):
    base = dict(word_dim=8, pos_dim=4, char_dim=4, char_filters=6, hidden=8, arc_dim=8, order_dim=6,
                label_dim=6, max_epochs=2, batch_size=4, seed=7)
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_deterministic_for_a_seed():
    tb = treebank(8, seed=1)
    m1, h1 = train(_tiny_config(), tb)
    m2, h2 = train(_tiny_config(), tb)
    assert [r.line() for r in h1] == [r.line() for r in h2]
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    m3, _ = train(_tiny_config(seed=8), tb)
    assert not np.array_equal(m1.params["arc_W"], m3.params["arc_W"])


def test_training_keeps_the_best_dev_checkpoint():
    tb = treebank(10, seed=3)
    seen = []
    model, hist = train(_tiny_config(max_epochs=4), tb, on_epoch=seen.append)
    assert seen == hist and len(hist) == 4
    from ggparse.evaluation import evaluate_model
    assert evaluate_model(model, tb).uas == max(r.dev_uas for r in hist)
    with pytest.raises(ValueError):
        train(_tiny_config(), [])


def test_checkpoint_round_trip(tmp_path):
    tb = treebank(5, seed=0)
    model = Model(build_vocab(tb, 1), SMALL, seed=2)
    path = tmp_path / "m.ggp"
    save_model(model, path, {"seed": 2})
    loaded, header = load_model(path)
    assert header["config"] == {"seed": 2}
    assert loaded.vocab == model.vocab and loaded.dims == model.dims
    for k, v in model.params.items():
        assert np.array_equal(loaded.params[k], v.astype(np.float32).astype(np.float64))
    a = score_sentence(tb[0], model)
    b = score_sentence(tb[0], loaded)
    assert np.allclose(a.arc, b.arc, atol=1e-4)
    save_model(loaded, tmp_path / "again.ggp", {"seed": 2})
    assert (tmp_path / "again.ggp").read_bytes() == path.read_bytes()


def test_checkpoint_rejections(tmp_path):
    tb = treebank(3, seed=0)
    model = Model(build_vocab(tb, 1), SMALL, seed=2)
    good = tmp_path / "m.ggp"
    save_model(model, good)
    blob = good.read_bytes()

    def rejected(data):
        p = tmp_path / "bad.ggp"
        p.write_bytes(data)
        with pytest.raises(CheckpointError):
            load_model(p)

    rejected(b"NOTMAGIC" + blob[8:])
    rejected(blob[:-4])
    rejected(blob + b"\0")
    header, offset = read_header(good)
    body = blob[offset:]
    for mutate in (lambda h: h.update(format_version=99), lambda h: h["vocab"]["labels"].append("extra"),
                   lambda h: h.update(vocab_hash="0" * 16)):
        import json
        h = json.loads(json.dumps(header))
        mutate(h)
        js = json.dumps(h, sort_keys=True).encode()
        rejected(MAGIC + struct.pack("<I", len(js)) + js + body)


def test_config_file_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nhidden = 64\nlr=0.002  # inline\nmst-on-prob = yes\ndecoder = mst\n")
    cfg = read_config(p)
    assert (cfg.hidden, cfg.lr, cfg.mst_on_prob, cfg.decoder) == (64, 0.002, True, "mst")
    out = tmp_path / "w.cfg"
    write_config(cfg, out)
    assert read_config(out) == cfg
    for bad in ("nonsense = 1\n", "hidden\n", "hidden = many\n", "mst-on-prob = perhaps\n"):
        p.write_text(bad)
        with pytest.raises(ValueError):
            read_config(p)
    assert "order-offset-on-raw" in TrainConfig.keys()


def test_loss_breakdown_arithmetic():
    a = LossBreakdown(1.0, 2.0, 3.0) + LossBreakdown(1.0, 1.0, 1.0)
    assert a.total == 9.0 and a.scaled(0.5).l_rel == 1.5
