"""CoNLL-X / CoNLL-U reading and writing, vocabularies, punctuation classes."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

PAD = "<pad>"
UNK = "<unk>"

PTB_PUNCT = frozenset(["``", "''", ":", ",", "."])


class ConllFormatError(ValueError):
    """Raised for malformed treebank lines; carries the 1-based line number."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = f"{path}:{lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass
class Token:
    index: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    gold_head: int = 0
    gold_label: str = "_"
    # CoNLL-U DEPS/MISC; in CoNLL-X these columns are PHEAD/PDEPREL.
    deps: str = "_"
    misc: str = "_"

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"token index must be >= 1, got {self.index}")
        if not self.form:
            raise ValueError("token form must be non-empty")
        if self.gold_head < 0:
            raise ValueError(f"head must be >= 0, got {self.gold_head}")


@dataclass
class Sentence:
    tokens: list
    source_id: str = ""
    comments: list = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    @property
    def heads(self):
        return [t.gold_head for t in self.tokens]

    @property
    def labels(self):
        return [t.gold_label for t in self.tokens]


def _parse_block(lines, fmt, path, block_no):
    tokens = []
    token_lines = []
    comments = []
    sent_id = None
    for lineno, line in lines:
        if line.startswith("#"):
            comments.append(line)
            if line.startswith("# sent_id"):
                sent_id = line.split("=", 1)[-1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConllFormatError(
                f"expected 10 tab-separated columns, found {len(cols)}", path, lineno
            )
        tid = cols[0]
        if fmt == "conllu" and ("-" in tid or "." in tid):
            continue
        try:
            index = int(tid)
        except ValueError:
            raise ConllFormatError(f"non-integer ID {tid!r}", path, lineno) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConllFormatError(f"non-integer HEAD {cols[6]!r}", path, lineno) from None
        try:
            tokens.append(
                Token(index, cols[1], cols[2], cols[3], cols[4], cols[5], head, cols[7], cols[8], cols[9])
            )
        except ValueError as exc:
            raise ConllFormatError(str(exc), path, lineno) from None
        token_lines.append(lineno)
    for tok, lineno in zip(tokens, token_lines):
        if tok.gold_head > len(tokens):
            raise ConllFormatError(
                f"HEAD {tok.gold_head} out of range for sentence of length {len(tokens)}",
                path,
                lineno,
            )
    return Sentence(tokens, sent_id or str(block_no), comments)


def read_conll(path, format="conllu"):
    """Read a treebank file into a list of :class:`Sentence`.

    Multiword ranges ("3-4") and empty nodes ("5.1") are dropped in conllu
    mode.  Gold structures are not validated here; see ``trees.validate_tree``.
    """
    if format not in ("conllx", "conllu"):
        raise ValueError(f"unknown format {format!r}")
    sentences = []
    block = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if line.strip() == "":
                if block:
                    sentences.append(_parse_block(block, format, path, len(sentences) + 1))
                    block = []
                continue
            block.append((lineno, line))
    if block:
        sentences.append(_parse_block(block, format, path, len(sentences) + 1))
    return [s for s in sentences if s.tokens]


def format_conll(sentences, predicted=None, layers=None):
    """Render sentences as CoNLL text.

    ``predicted`` replaces HEAD/DEPREL with decoded trees.  ``layers``, when
    given, records the predicted parsing-order layer in the MISC column as
    ``Layer=k``.
    """
    if predicted is not None and len(predicted) != len(sentences):
        raise ValueError(f"{len(sentences)} sentences but {len(predicted)} trees")
    if layers is not None and len(layers) != len(sentences):
        raise ValueError(f"{len(sentences)} sentences but {len(layers)} layer rows")
    out = []
    for k, sent in enumerate(sentences):
        tree = predicted[k] if predicted is not None else None
        if tree is not None and len(tree.heads) != len(sent.tokens):
            raise ValueError(
                f"sentence {sent.source_id}: {len(sent.tokens)} tokens but tree has {len(tree.heads)} heads"
            )
        out.extend(sent.comments)
        for i, tok in enumerate(sent.tokens):
            head, label, misc = tok.gold_head, tok.gold_label, tok.misc
            if tree is not None:
                head = tree.heads[i]
                label = tree.labels[i] if tree.labels is not None else "_"
            if layers is not None:
                misc = _set_misc(misc, "Layer", str(int(layers[k][i])))
            cols = [str(tok.index), tok.form, tok.lemma, tok.upos, tok.xpos, tok.feats,
                    str(head), str(label), tok.deps, misc]
            out.append("\t".join(c if c != "" else "_" for c in cols))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def write_conll(sentences, predicted, path, layers=None):
    text = format_conll(sentences, predicted, layers)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _set_misc(misc, key, value):
    items = [] if misc in ("", "_") else [m for m in misc.split("|") if not m.startswith(key + "=")]
    items.append(f"{key}={value}")
    return "|".join(items)


def misc_value(token, key):
    if token.misc in ("", "_"):
        return None
    for item in token.misc.split("|"):
        if item.startswith(key + "="):
            return item.split("=", 1)[1]
    return None


def is_punctuation(token, convention="ud"):
    if convention == "ud":
        return token.upos == "PUNCT"
    if convention == "ptb":
        return token.xpos in PTB_PUNCT
    raise ValueError(f"unknown punctuation convention {convention!r}")


def _ranked(counter):
    return [k for k, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


class Vocab:
    """Symbol tables for words, POS tags, characters and relation labels.

    Ids are assigned by descending frequency, ties broken lexicographically,
    after the reserved PAD (0) and UNK (1) entries.  Labels have no reserved
    entries.
    """

    def __init__(self, words, pos, chars, labels, min_word_freq=2):
        self.min_word_freq = min_word_freq
        self.words = list(words)
        self.pos = list(pos)
        self.chars = list(chars)
        self.labels = list(labels)
        self.word2id = {w: i for i, w in enumerate(self.words)}
        self.pos2id = {p: i for i, p in enumerate(self.pos)}
        self.char2id = {c: i for i, c in enumerate(self.chars)}
        self.label2id = {l: i for i, l in enumerate(self.labels)}

    def word_id(self, w):
        return self.word2id.get(w, self.word2id[UNK])

    def pos_id(self, p):
        return self.pos2id.get(p, self.pos2id[UNK])

    def char_ids(self, w):
        unk = self.char2id[UNK]
        return [self.char2id.get(c, unk) for c in w]

    def label_id(self, l):
        try:
            return self.label2id[l]
        except KeyError:
            raise KeyError(f"label {l!r} not in vocabulary") from None

    def to_dict(self):
        return {
            "min_word_freq": self.min_word_freq,
            "words": self.words,
            "pos": self.pos,
            "chars": self.chars,
            "labels": self.labels,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["words"], d["pos"], d["chars"], d["labels"], d.get("min_word_freq", 2))

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return (f"Vocab(words={len(self.words)}, pos={len(self.pos)}, "
                f"chars={len(self.chars)}, labels={len(self.labels)})")


def build_vocab(sentences, min_word_freq=2):
    if not sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    words, pos, chars, labels = Counter(), Counter(), Counter(), Counter()
    for sent in sentences:
        for tok in sent.tokens:
            words[tok.form] += 1
            pos[tok.upos] += 1
            chars.update(tok.form)
            labels[tok.gold_label] += 1
    kept = [w for w in _ranked(words) if words[w] >= min_word_freq]
    return Vocab(
        [PAD, UNK] + kept,
        [PAD, UNK] + _ranked(pos),
        [PAD, UNK] + _ranked(chars),
        _ranked(labels),
        min_word_freq,
    )


def load_sample(name):
    """Path to a bundled sample treebank (``sample.conllu`` or ``sample.conllx``)."""
    return Path(__file__).with_name("data") / name
