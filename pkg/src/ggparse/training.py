"""Losses, gradients, Adam with global-norm clipping, plateau decay and the epoch loop."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ggparse import nn
from ggparse.scorer import Model, ModelDims, _backward, _forward, sentence_ids
from ggparse.scores import MAX_LAYER
from ggparse.treebank import build_vocab
from ggparse.trees import DepTree, compute_layers, validate_tree

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    def __init__(self, message, sentence_id=None):
        self.sentence_id = sentence_id
        super().__init__(message if sentence_id is None else f"sentence {sentence_id}: {message}")


@dataclass
class LossBreakdown:
    l_arc: float = 0.0
    l_rel: float = 0.0
    l_order: float = 0.0

    @property
    def total(self):
        return self.l_arc + self.l_rel + self.l_order

    def __add__(self, other):
        return LossBreakdown(self.l_arc + other.l_arc, self.l_rel + other.l_rel, self.l_order + other.l_order)

    def scaled(self, k):
        return LossBreakdown(self.l_arc * k, self.l_rel * k, self.l_order * k)


def _label_ids(labels, vocab):
    if labels is None:
        return None
    out = []
    for l in labels:
        if isinstance(l, (int, np.integer)):
            out.append(int(l))
        elif vocab is None:
            raise ValueError("string labels need a vocabulary")
        else:
            out.append(vocab.label2id.get(l, -1))
    return np.array(out, dtype=np.int64)


def _terms(arc, order, label_rows, heads, layer_targets, label_ids):
    """Loss values and their gradients w.r.t. arc, order logits and gold-row label scores."""
    n = len(heads)
    cols = np.arange(1, n + 1)
    A = arc[:, 1:].copy()
    A[cols, np.arange(n)] = -np.inf
    logp = nn.log_softmax(A, axis=0)
    l_arc = -float(logp[heads, np.arange(n)].sum())
    d_arc = np.zeros_like(arc)
    d_arc[:, 1:] = np.exp(logp)
    d_arc[heads, cols] -= 1.0

    logq = nn.log_softmax(order, axis=1)
    l_order = -float(logq[np.arange(n), layer_targets].sum())
    d_order = np.exp(logq)
    d_order[np.arange(n), layer_targets] -= 1.0

    l_rel = 0.0
    d_label = None
    if label_rows is not None and label_ids is not None:
        known = label_ids >= 0
        logr = nn.log_softmax(label_rows, axis=1)
        rows = np.flatnonzero(known)
        l_rel = -float(logr[rows, label_ids[rows]].sum())
        d_label = np.exp(logr)
        d_label[rows, label_ids[rows]] -= 1.0
        d_label[~known] = 0.0
    return LossBreakdown(l_arc, l_rel, l_order), d_arc, d_order, d_label


def _gold_parts(gold):
    check = validate_tree(gold.heads)
    if not check:
        raise ValueError(f"gold tree is invalid ({check.reason})")
    heads = np.array(gold.heads, dtype=np.int64)
    targets = np.array(compute_layers(gold.heads).targets, dtype=np.int64)
    return heads, targets


def loss(sentence, gold, score_set, vocab=None):
    """Summed negative log-likelihoods of gold heads, gold labels (on gold arcs) and gold layers."""
    heads, targets = _gold_parts(gold)
    if score_set.n != len(heads):
        raise ValueError(f"score set has {score_set.n} words, gold tree {len(heads)}")
    rows = None
    if score_set.label is not None:
        rows = score_set.label[heads, np.arange(len(heads))]
    lb, *_ = _terms(score_set.arc, score_set.order_logits, rows, heads, targets, _label_ids(gold.labels, vocab))
    return lb


def sentence_gradients(sentence, model, train=False, rng=None, gold=None):
    gold = gold or DepTree.from_sentence(sentence)
    heads, targets = _gold_parts(gold)
    ids = sentence_ids(sentence, model)
    ss, cache = _forward(model, ids, train=train, rng=rng, gold_heads=heads)
    lb, d_arc, d_order, d_label = _terms(ss.arc, ss.order_logits, cache["label_gold"], heads, targets,
                                         _label_ids(gold.labels, model.vocab))
    if not np.isfinite(lb.total):
        raise NumericError("non-finite loss", sentence.source_id)
    if d_label is None:
        d_label = np.zeros_like(cache["label_gold"])
    return lb, _backward(model, cache, d_arc, d_order, d_label)


def gradients(batch, model, train=False, rng=None):
    """Mean loss and mean gradient over a batch; summation runs in batch order."""
    if not batch:
        raise ValueError("empty batch")
    total = LossBreakdown()
    acc = None
    for sent in batch:
        lb, g = sentence_gradients(sent, model, train=train, rng=rng)
        total = total + lb
        if acc is None:
            acc = g
        else:
            for k in acc:
                acc[k] += g[k]
    k = 1.0 / len(batch)
    for name in acc:
        acc[name] *= k
    return acc, total.scaled(k)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        s = max_norm / norm
        return {k: g * s for k, g in grads.items()}, norm
    return grads, norm


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    clip: float = 5.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def step(state, model, grads):
    """Clip to the global norm threshold, then one Adam update of ``model.params`` in place."""
    params = model.params
    if set(grads) != set(params):
        raise ValueError("gradient names do not match model parameters")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {params[k].shape}")
    grads, _ = clip_by_global_norm(grads, state.clip)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k in params:
        g = grads[k]
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model


class PlateauDecay:
    """Multiply the learning rate by ``decay`` after ``patience`` epochs without a
    dev improvement of at least ``min_delta``.

    Scores are in the units the caller feeds; training feeds dev UAS in
    percentage points.
    """

    def __init__(self, lr, decay=0.75, patience=3, min_delta=0.01, max_decays=10):
        self.lr = lr
        self.decay = decay
        self.patience = patience
        self.min_delta = min_delta
        self.max_decays = max_decays
        self.best = -np.inf
        self.stale = 0
        self.decays = 0

    def update(self, score):
        if self.exhausted:
            return
        if score >= self.best + self.min_delta:
            self.best = score
            self.stale = 0
            return
        self.best = max(self.best, score)
        self.stale += 1
        if self.stale >= self.patience:
            self.lr *= self.decay
            self.decays += 1
            self.stale = 0
            log.info("no dev improvement for %d epochs; lr -> %.3g", self.patience, self.lr)

    @property
    def exhausted(self):
        return self.decays >= self.max_decays


@dataclass
class TrainConfig:
    """Every tunable; the flat key=value config file uses these names with dashes."""

    word_dim: int = 100
    pos_dim: int = 32
    char_dim: int = 8
    char_filters: int = 50
    char_window: int = 3
    hidden: int = 128
    layers: int = 1
    arc_dim: int = 128
    order_dim: int = 64
    label_dim: int = 64
    embed_dropout: float = 0.33
    recurrent_dropout: float = 0.33
    layer_dropout: float = 0.33
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    clip: float = 5.0
    decay: float = 0.75
    patience: int = 3
    min_delta: float = 0.01
    max_decays: int = 10
    max_epochs: int = 100
    batch_size: int = 32
    min_word_freq: int = 2
    seed: int = 1
    decoder: str = "greedy-projective"
    convention: str = "ud"
    order_offset_on_raw: bool = False
    mst_on_prob: bool = False
    order_tie_break: str = "position"
    external_embeddings: str = ""

    def dims(self, ext_dim=0):
        names = {f.name for f in fields(ModelDims)}
        d = {k: v for k, v in asdict(self).items() if k in names}
        d["ext_dim"] = ext_dim
        return ModelDims(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def keys(cls):
        return [f.name.replace("_", "-") for f in fields(cls)]

    def set(self, key, value):
        """Set a dashed or underscored key from a string value."""
        name = key.strip().replace("-", "_")
        types = {f.name: f.type for f in fields(self)}
        if name not in types:
            raise KeyError(f"unknown config key {key!r}")
        typ = types[name]
        current = getattr(self, name)
        if isinstance(current, bool) or typ == "bool":
            low = str(value).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(f"{key}: expected a boolean, got {value!r}")
            parsed = low in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            parsed = int(value)
        elif isinstance(current, float):
            parsed = float(value)
        else:
            parsed = str(value).strip()
        setattr(self, name, parsed)


def read_config(path, config=None):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    config = config or TrainConfig()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            try:
                config.set(k, v.strip())
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return config


def write_config(config, path):
    with open(path, "w", encoding="utf-8") as f:
        for k, v in config.to_dict().items():
            f.write(f"{k.replace('_', '-')} = {str(v).lower() if isinstance(v, bool) else v}\n")


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    dev_uas: float
    dev_las: float
    dev_order_acc: float
    lr: float
    seconds: float

    def line(self):
        return (f"epoch {self.epoch}: loss {self.loss.l_arc:.4f}/{self.loss.l_rel:.4f}/{self.loss.l_order:.4f}, "
                f"dev UAS/LAS/OrderAcc {100 * self.dev_uas:.2f}/{100 * self.dev_las:.2f}/"
                f"{100 * self.dev_order_acc:.2f}, lr {self.lr:.6g}")


def train(config, train_set, dev_set=None, on_epoch=None, external=None):
    """Train a model; returns (best-dev model, list of EpochRecord).

    ``external`` is an optional ``{form: vector}`` map of fixed embeddings.
    """
    from ggparse.evaluation import evaluate_model

    if not train_set:
        raise ValueError("empty training set")
    dev_set = dev_set if dev_set else train_set
    rng = np.random.default_rng(config.seed)
    vocab = build_vocab(train_set, config.min_word_freq)
    ext_dim = len(next(iter(external.values()))) if external else 0
    model = Model(vocab, config.dims(ext_dim), seed=int(rng.integers(2 ** 31)), external=external)
    opt = OptimizerState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps, clip=config.clip)
    sched = PlateauDecay(config.lr, config.decay, config.patience, config.min_delta, config.max_decays)
    best_model, best_uas = model.copy(), -1.0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_set))
        total = LossBreakdown()
        for s in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[s:s + config.batch_size]]
            grads, lb = gradients(batch, model, train=True, rng=rng)
            if not np.isfinite(lb.total) or not np.isfinite(global_norm(grads)):
                raise NumericError(f"training diverged at epoch {epoch}")
            step(opt, model, grads)
            total = total + lb.scaled(len(batch))
        report = evaluate_model(model, dev_set, config.decoder, config.convention,
                                raw=config.order_offset_on_raw, mst_on_prob=config.mst_on_prob,
                                tie_break=config.order_tie_break)
        rec = EpochRecord(epoch, total.scaled(1.0 / len(train_set)), report.uas, report.las,
                          report.order_acc, opt.lr, time.perf_counter() - t0)
        history.append(rec)
        log.info(rec.line())
        if on_epoch is not None:
            on_epoch(rec)
        if report.uas > best_uas:
            best_uas = report.uas
            best_model = model.copy()
        sched.update(100.0 * report.uas)
        opt.lr = sched.lr
        if sched.exhausted:
            log.info("stopping after %d learning-rate decays", sched.decays)
            break
    return best_model, history


__all__ = [
    "LossBreakdown", "NumericError", "OptimizerState", "PlateauDecay", "TrainConfig", "EpochRecord",
    "loss", "gradients", "sentence_gradients", "step", "train", "read_config", "write_config",
    "clip_by_global_norm", "global_norm", "MAX_LAYER",
]
