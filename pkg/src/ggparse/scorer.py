"""One-shot sentence scoring: BiLSTM-CNN encoder, ReLU heads, biaffine and order scorers."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from ggparse import nn
from ggparse.scores import NUM_LAYERS, ScoreSet, order_priority  # noqa: F401  (re-export)

log = logging.getLogger(__name__)


@dataclass
class ModelDims:
    """Network sizes and dropout rates.

    Defaults are desk scale.  ``ModelDims.large()`` is the full-size
    configuration: 3 stacked BiLSTM layers of 512 units per
    direction, a 512-unit arc MLP and 128-unit label and order MLPs.
    """

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
    ext_dim: int = 0
    embed_dropout: float = 0.33
    recurrent_dropout: float = 0.33
    layer_dropout: float = 0.33

    @classmethod
    def large(cls, **kw):
        base = dict(hidden=512, layers=3, arc_dim=512, order_dim=128, label_dim=128)
        base.update(kw)
        return cls(**base)

    @property
    def input_dim(self):
        return self.word_dim + self.pos_dim + self.char_filters + self.ext_dim

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class Model:
    """Vocabulary plus every learnable array, stored in a name-ordered dict."""

    def __init__(self, vocab, dims=None, params=None, seed=0, external=None):
        self.vocab = vocab
        self.dims = dims or ModelDims()
        self.external = external or {}
        if self.external and self.dims.ext_dim == 0:
            self.dims.ext_dim = len(next(iter(self.external.values())))
        if params is None:
            params = self._init_params(np.random.default_rng(seed))
        self.params = params
        self._check_shapes()

    def param_shapes(self):
        d = self.dims
        v = self.vocab
        H2 = 2 * d.hidden
        shapes = {
            "word_emb": (len(v.words), d.word_dim),
            "pos_emb": (len(v.pos), d.pos_dim),
            "char_emb": (len(v.chars), d.char_dim),
            "char_conv_W": (d.char_window * d.char_dim, d.char_filters),
            "char_conv_b": (d.char_filters,),
            "root_emb": (d.input_dim,),
        }
        din = d.input_dim
        for l in range(d.layers):
            for side in ("fw", "bw"):
                shapes[f"lstm{l}_{side}_Wx"] = (din, 4 * d.hidden)
                shapes[f"lstm{l}_{side}_Wh"] = (d.hidden, 4 * d.hidden)
                shapes[f"lstm{l}_{side}_b"] = (4 * d.hidden,)
            din = H2
        for name, out in (("arc_head", d.arc_dim), ("arc_dep", d.arc_dim), ("order", d.order_dim),
                          ("lab_head", d.label_dim), ("lab_dep", d.label_dim)):
            shapes[f"mlp_{name}_W"] = (H2, out)
            shapes[f"mlp_{name}_b"] = (out,)
        nl = len(v.labels)
        shapes.update({
            "arc_W": (d.arc_dim, d.arc_dim),
            "arc_U": (d.arc_dim,),
            "arc_V": (d.arc_dim,),
            "arc_b": (1,),
            "order_W": (NUM_LAYERS, d.order_dim),
            "order_b": (NUM_LAYERS,),
            "label_W": (nl, d.label_dim, d.label_dim),
            "label_U": (nl, d.label_dim),
            "label_V": (nl, d.label_dim),
            "label_b": (nl,),
        })
        return shapes

    def _init_params(self, rng):
        p = {}
        for name, shape in self.param_shapes().items():
            if name.endswith("_emb"):
                p[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[-1]), size=shape)
            elif name.endswith("_b") or name in ("arc_W", "label_W"):
                p[name] = np.zeros(shape)
            elif len(shape) == 1:
                p[name] = rng.normal(0.0, 0.1, size=shape)
            else:
                p[name] = nn.glorot(rng, shape[-2], shape[-1], shape)
        H = self.dims.hidden
        for l in range(self.dims.layers):
            for side in ("fw", "bw"):
                p[f"lstm{l}_{side}_b"][H:2 * H] = 1.0  # forget gate
        return p

    def _check_shapes(self):
        want = self.param_shapes()
        if list(want) != list(self.params):
            raise ValueError("parameter names do not match the model layout")
        for name, shape in want.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.params[name].shape}")

    def copy(self):
        return Model(self.vocab, ModelDims.from_dict(self.dims.to_dict()),
                     {k: v.copy() for k, v in self.params.items()}, external=self.external)


@dataclass
class SentenceIds:
    words: np.ndarray
    pos: np.ndarray
    chars: np.ndarray
    lengths: np.ndarray
    ext: np.ndarray | None

    def __len__(self):
        return len(self.words)


def sentence_ids(sentence, model):
    v = model.vocab
    toks = sentence.tokens
    if not toks:
        raise ValueError(f"sentence {getattr(sentence, 'source_id', '?')} is empty")
    pad = (model.dims.char_window - 1) // 2
    maxlen = max(len(t.form) for t in toks)
    width = maxlen + model.dims.char_window - 1
    chars = np.zeros((len(toks), width), dtype=np.int64)
    for i, t in enumerate(toks):
        ids = v.char_ids(t.form)
        chars[i, pad:pad + len(ids)] = ids
    ext = None
    if model.dims.ext_dim:
        zero = np.zeros(model.dims.ext_dim)
        ext = np.array([model.external.get(t.form, model.external.get(t.form.lower(), zero)) for t in toks])
    return SentenceIds(
        np.array([v.word_id(t.form) for t in toks], dtype=np.int64),
        np.array([v.pos_id(t.upos) for t in toks], dtype=np.int64),
        chars,
        np.array([len(t.form) for t in toks], dtype=np.int64),
        ext,
    )


def _forward(model, ids, train=False, rng=None, gold_heads=None):
    """Run the network; returns (ScoreSet, cache).

    With ``gold_heads`` the label scorer is evaluated only on gold arcs and
    the returned ScoreSet has ``label=None``; the gold-row label scores are
    in ``cache['label_gold']``.
    """
    P = model.params
    d = model.dims
    if train and rng is None:
        raise ValueError("train mode needs an explicit random generator")
    n = len(ids)
    c = {"ids": ids, "train": train}

    ew = P["word_emb"][ids.words]
    ep = P["pos_emb"][ids.pos]
    E = P["char_emb"][ids.chars]
    ec, c["char"] = nn.char_cnn_forward(E, ids.lengths, P["char_conv_W"], P["char_conv_b"], d.char_window)
    if train:
        masks = [nn.dropout_mask(rng, (n, 1), d.embed_dropout) for _ in range(3)]
    else:
        masks = [np.ones((n, 1))] * 3
    c["emb_masks"] = masks
    parts = [ew * masks[0], ep * masks[1], ec * masks[2]]
    if ids.ext is not None:
        parts.append(ids.ext)
    X = np.vstack([P["root_emb"][None, :], np.concatenate(parts, axis=1)])

    inp = X
    c["lstm"] = []
    for l in range(d.layers):
        lmask = nn.dropout_mask(rng, inp.shape, d.layer_dropout) if (train and l > 0) else None
        x = inp * lmask if lmask is not None else inp
        outs = []
        caches = []
        for side in ("fw", "bw"):
            hmask = nn.dropout_mask(rng, (d.hidden,), d.recurrent_dropout) if train else None
            seq = x if side == "fw" else x[::-1]
            h, cc = nn.lstm_forward(seq, P[f"lstm{l}_{side}_Wx"], P[f"lstm{l}_{side}_Wh"], P[f"lstm{l}_{side}_b"], hmask)
            outs.append(h if side == "fw" else h[::-1])
            caches.append(cc)
        c["lstm"].append((lmask, caches))
        inp = np.concatenate(outs, axis=1)
    omask = nn.dropout_mask(rng, inp.shape, d.layer_dropout) if train else None
    c["out_mask"] = omask
    Hctx = inp * omask if omask is not None else inp
    c["H"] = Hctx

    mlp = {}
    for name in ("arc_head", "arc_dep", "order", "lab_head", "lab_dep"):
        mlp[name], c[f"mlp_{name}"] = nn.relu_mlp_forward(Hctx, P[f"mlp_{name}_W"], P[f"mlp_{name}_b"])

    arc, c["arc"] = nn.biaffine_arc_forward(mlp["arc_head"], mlp["arc_dep"], P["arc_W"], P["arc_U"], P["arc_V"], P["arc_b"])
    order = mlp["order"][1:] @ P["order_W"].T + P["order_b"]
    c["order_in"] = mlp["order"]

    label = None
    if gold_heads is None:
        label = nn.biaffine_label_full(mlp["lab_head"], mlp["lab_dep"][1:], P["label_W"], P["label_U"],
                                       P["label_V"], P["label_b"])
    else:
        gh = np.asarray(gold_heads, dtype=np.int64)
        c["gold_heads"] = gh
        c["label_gold"], c["label"] = nn.biaffine_label_pairs_forward(
            mlp["lab_head"][gh], mlp["lab_dep"][1:], P["label_W"], P["label_U"], P["label_V"], P["label_b"])
    return ScoreSet(arc, order, label), c


def _backward(model, c, d_arc, d_order, d_label_gold):
    """Gradients of every parameter given score gradients."""
    P = model.params
    d = model.dims
    ids = c["ids"]
    n = len(ids)
    g = {k: np.zeros_like(v) for k, v in P.items()}

    dmlp = {}
    dAh, dAd, g["arc_W"], g["arc_U"], g["arc_V"], g["arc_b"] = nn.biaffine_arc_backward(d_arc, c["arc"])
    dmlp["arc_head"], dmlp["arc_dep"] = dAh, dAd

    dO = np.zeros_like(c["order_in"])
    dO[1:] = d_order @ P["order_W"]
    g["order_W"] = d_order.T @ c["order_in"][1:]
    g["order_b"] = d_order.sum(axis=0)
    dmlp["order"] = dO

    dG, dD, g["label_W"], g["label_U"], g["label_V"], g["label_b"] = nn.biaffine_label_pairs_backward(
        d_label_gold, c["label"])
    dLh = np.zeros((n + 1, d.label_dim))
    np.add.at(dLh, c["gold_heads"], dG)
    dLd = np.zeros((n + 1, d.label_dim))
    dLd[1:] = dD
    dmlp["lab_head"], dmlp["lab_dep"] = dLh, dLd

    dH = np.zeros_like(c["H"])
    for name, dy in dmlp.items():
        dx, g[f"mlp_{name}_W"], g[f"mlp_{name}_b"] = nn.relu_mlp_backward(dy, c[f"mlp_{name}"])
        dH += dx
    if c["out_mask"] is not None:
        dH = dH * c["out_mask"]

    dinp = dH
    for l in range(d.layers - 1, -1, -1):
        lmask, caches = c["lstm"][l]
        H = d.hidden
        dx_total = None
        for side, cc in zip(("fw", "bw"), caches):
            dh = dinp[:, :H] if side == "fw" else dinp[::-1, H:]
            dx, g[f"lstm{l}_{side}_Wx"], g[f"lstm{l}_{side}_Wh"], g[f"lstm{l}_{side}_b"] = nn.lstm_backward(dh, cc)
            if side == "bw":
                dx = dx[::-1]
            dx_total = dx if dx_total is None else dx_total + dx
        if lmask is not None:
            dx_total = dx_total * lmask
        dinp = dx_total

    dX = dinp
    g["root_emb"] = dX[0].copy()
    dW = dX[1:]
    m = c["emb_masks"]
    o1 = d.word_dim
    o2 = o1 + d.pos_dim
    o3 = o2 + d.char_filters
    np.add.at(g["word_emb"], ids.words, dW[:, :o1] * m[0])
    np.add.at(g["pos_emb"], ids.pos, dW[:, o1:o2] * m[1])
    dE, g["char_conv_W"], g["char_conv_b"] = nn.char_cnn_backward(dW[:, o2:o3] * m[2], c["char"])
    np.add.at(g["char_emb"], ids.chars, dE)
    return g


def encode(sentence, model):
    """Contextual representations, one row per node (row 0 = root), dropout off."""
    ids = sentence_ids(sentence, model)
    _, cache = _forward(model, ids)
    return cache["H"]


def score_sentence(sentence, model, mode="eval", rng=None):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    ids = sentence_ids(sentence, model)
    ss, _ = _forward(model, ids, train=(mode == "train"), rng=rng)
    return ss


def load_external_embeddings(path):
    """Read ``form<TAB>v1 v2 ...`` lines; the first line declares ``dim <k>``."""
    vectors = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != "dim":
            raise ValueError(f"{path}: first line must be 'dim <k>'")
        dim = int(header[1])
        for lineno, line in enumerate(f, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            form, _, rest = line.partition("\t")
            vec = np.array([float(x) for x in rest.split()])
            if vec.shape != (dim,):
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
            vectors[form] = vec
    return vectors, dim
