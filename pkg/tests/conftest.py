import numpy as np
import pytest

from ggparse.scores import NUM_LAYERS, ScoreSet
from ggparse.treebank import Sentence, Token

# "The test may come today ." with its gold tree
FIG1_FORMS = ["The", "test", "may", "come", "today", "."]
FIG1_HEADS = [2, 4, 4, 0, 4, 4]
FIG1_LAYERS = [3, 2, 2, 1, 2, 2]
FIG1_LABELS = ["det", "nsubj", "aux", "root", "obl:tmod", "punct"]
FIG1_UPOS = ["DET", "NOUN", "AUX", "VERB", "NOUN", "PUNCT"]


def make_sentence(forms, heads, labels=None, upos=None, sid="s"):
    labels = labels or ["dep"] * len(forms)
    upos = upos or ["X"] * len(forms)
    toks = [Token(i + 1, f, upos=u, gold_head=h, gold_label=l)
            for i, (f, h, l, u) in enumerate(zip(forms, heads, labels, upos))]
    return Sentence(toks, sid)


@pytest.fixture
def fig1_sentence():
    return make_sentence(FIG1_FORMS, FIG1_HEADS, FIG1_LABELS, FIG1_UPOS, "fig1")


def one_hot_order(layers):
    order = np.zeros((len(layers), NUM_LAYERS))
    order[np.arange(len(layers)), layers] = 1.0
    return order


def premature_root_scores(with_layers=True):
    """Arc probabilities under which arc-only greedy decoding attaches root->come
    while "today" and "." are still pending, so they can only reach the root."""
    n = 6
    prob = np.full((n + 1, n + 1), 0.01)
    for h, d, p in [(2, 1, 0.9), (4, 3, 0.85), (4, 2, 0.8), (0, 4, 0.95),
                    (4, 5, 0.6), (4, 6, 0.5), (0, 5, 0.3), (0, 6, 0.3)]:
        prob[h, d] = p
    arc = np.log(prob) - np.log1p(-prob)
    layers = FIG1_LAYERS if with_layers else [0] * n
    return ScoreSet(arc, one_hot_order(layers), arc_prob=prob)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
