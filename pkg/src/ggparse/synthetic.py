"""A toy English-like dependency grammar for fixtures and smoke training."""

from __future__ import annotations

import numpy as np

from ggparse.treebank import Sentence, Token

LEXICON = {
    "DET": (["the", "a", "this", "every"], "DT"),
    "ADJ": (["big", "old", "red", "quiet", "clever", "small"], "JJ"),
    "NOUN": (["dog", "cat", "man", "park", "river", "house", "idea", "child", "book", "tree"], "NN"),
    "PROPN": (["Mary", "John", "Paris", "Anna"], "NNP"),
    "VERB": (["saw", "liked", "found", "took", "read", "made"], "VBD"),
    "IVERB": (["slept", "ran", "laughed", "arrived"], "VBD"),
    "AUX": (["may", "will", "can"], "MD"),
    "ADP": (["in", "near", "with", "under"], "IN"),
    "ADV": (["today", "quickly", "often", "later"], "RB"),
}


class _Builder:
    def __init__(self, rng):
        self.rng = rng
        self.words = []  # (form, upos, xpos, head_local, label); head_local indexes self.words, -1 = root

    def add(self, cat, head, label, form=None):
        forms, xpos = LEXICON.get(cat, ([form], form))
        upos = "VERB" if cat == "IVERB" else cat
        self.words.append([form or forms[int(self.rng.integers(len(forms)))], upos, xpos, head, label])
        return len(self.words) - 1

    def coin(self, p):
        return self.rng.random() < p


def _np(b, head, label, depth):
    """Emit a noun phrase in surface order; returns the noun index."""
    if b.coin(0.2):
        return b.add("PROPN", head, label)
    det = b.add("DET", None, "det")
    adjs = [b.add("ADJ", None, "amod") for _ in range(int(b.rng.integers(0, 3)))]
    noun = b.add("NOUN", head, label)
    b.words[det][3] = noun
    for a in adjs:
        b.words[a][3] = noun
    if depth < 2 and b.coin(0.25):
        _pp(b, noun, depth + 1)
    return noun


def _pp(b, head, depth):
    adp = b.add("ADP", None, "case")
    noun = _np(b, head, "nmod", depth)
    b.words[adp][3] = noun
    return noun


def sentence(rng, idx=0):
    """One sentence: [subject] [aux] verb [object] [pp] [adverb] [.]"""
    b = _Builder(rng)
    subj = _np(b, None, "nsubj", 0)
    aux = b.add("AUX", None, "aux") if b.coin(0.3) else None
    transitive = b.coin(0.6)
    verb = b.add("VERB" if transitive else "IVERB", -1, "root")
    b.words[subj][3] = verb
    if aux is not None:
        b.words[aux][3] = verb
    if transitive:
        _np(b, verb, "obj", 0)
    if b.coin(0.4):
        _pp(b, verb, 0)
    if b.coin(0.4):
        b.add("ADV", verb, "advmod")
    if b.coin(0.8):
        b.words.append([".", "PUNCT", ".", verb, "punct"])
    toks = [Token(i + 1, form, "_", upos, xpos, "_", head + 1, label)
            for i, (form, upos, xpos, head, label) in enumerate(b.words)]
    return Sentence(toks, f"syn-{idx}", [f"# sent_id = syn-{idx}", "# text = " + " ".join(w[0] for w in b.words)])


def treebank(count, seed=0):
    rng = np.random.default_rng(seed)
    return [sentence(rng, i + 1) for i in range(count)]
