"""Central finite differences against the analytic sentence gradients."""

import numpy as np

from ggparse.scorer import Model, ModelDims
from ggparse.training import sentence_gradients
from ggparse.treebank import Sentence, Token, build_vocab

# analytic gradients that are exactly zero make a pure ratio meaningless; the
# floor keeps such groups measurable in absolute terms
NORM_FLOOR = 1e-6


def three_word_setup(seed=3, layers=2):
    toks = [Token(1, "The", upos="DET", gold_head=2, gold_label="det"),
            Token(2, "dog", upos="NOUN", gold_head=3, gold_label="nsubj"),
            Token(3, "ran", upos="VERB", gold_head=0, gold_label="root")]
    sent = Sentence(toks, "three")
    dims = ModelDims(word_dim=4, pos_dim=3, char_dim=2, char_filters=3, hidden=3, layers=layers,
                     arc_dim=4, order_dim=3, label_dim=3)
    model = Model(build_vocab([sent], 1), dims, seed=seed)
    rng = np.random.default_rng(seed + 2)
    for k in model.params:
        model.params[k] = model.params[k] + rng.normal(0.0, 0.3, size=model.params[k].shape)
    return sent, model


def check(sent, model, h=1e-4, dropout_seed=None):
    """Per-group (relative error, analytic norm, numeric norm)."""

    def run():
        rng = None if dropout_seed is None else np.random.default_rng(dropout_seed)
        return sentence_gradients(sent, model, train=dropout_seed is not None, rng=rng)

    _, analytic = run()
    out = {}
    for name, p in model.params.items():
        assert p.dtype == np.float64
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = run()[0].total
            p[idx] = orig - h
            down = run()[0].total
            p[idx] = orig
            num[idx] = (up - down) / (2 * h)
        a = analytic[name]
        an, nn_ = float(np.linalg.norm(a)), float(np.linalg.norm(num))
        out[name] = (float(np.linalg.norm(a - num)) / max(an, nn_, NORM_FLOOR), an, nn_)
    return out
