"""Attachment scores, parsing-order accuracy and decoder instrumentation."""

from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ggparse.decoder import DecodeStats, assign_labels, decode
from ggparse.scorer import score_sentence
from ggparse.scores import NUM_LAYERS, ScoreSet
from ggparse.treebank import is_punctuation
from ggparse.trees import compute_layers

log = logging.getLogger(__name__)


@dataclass
class SentenceScore:
    source_id: str
    scored: int
    heads_correct: int
    labels_correct: int

    @property
    def uas(self):
        return self.heads_correct / self.scored if self.scored else 1.0


@dataclass
class EvalReport:
    uas: float
    las: float
    order_acc: float | None
    scored: int
    excluded: int
    sentences: list = field(default_factory=list)
    decode_seconds: float = 0.0
    tokens_per_sec: float = 0.0

    @property
    def total(self):
        return self.scored + self.excluded

    def as_pairs(self):
        pairs = [
            ("UAS", f"{100 * self.uas:.2f}"),
            ("LAS", f"{100 * self.las:.2f}"),
            ("OrderAcc", "n/a" if self.order_acc is None else f"{100 * self.order_acc:.2f}"),
            ("scored_tokens", str(self.scored)),
            ("excluded_punct", str(self.excluded)),
            ("total_tokens", str(self.total)),
            ("sentences", str(len(self.sentences))),
        ]
        if self.decode_seconds:
            pairs += [("decode_seconds", f"{self.decode_seconds:.4f}"),
                      ("tokens_per_sec", f"{self.tokens_per_sec:.1f}")]
        return pairs

    def render(self, fmt="table"):
        pairs = self.as_pairs()
        if fmt == "kv":
            return "\n".join(f"{k}={v}" for k, v in pairs) + "\n"
        if fmt == "tsv":
            return "\t".join(k for k, _ in pairs) + "\n" + "\t".join(v for _, v in pairs) + "\n"
        if fmt != "table":
            raise ValueError(f"unknown report format {fmt!r}")
        width = max(len(k) for k, _ in pairs)
        return "\n".join(f"{k:<{width}}  {v:>10}" for k, v in pairs) + "\n"


def attachment_scores(gold, pred, convention="ud"):
    """UAS/LAS over non-punctuation tokens.

    ``gold`` is a list of Sentences (their gold heads/labels are the
    reference); ``pred`` the aligned list of predicted DepTrees.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    scored = excluded = heads_ok = both_ok = 0
    per = []
    for sent, tree in zip(gold, pred):
        if len(sent.tokens) != len(tree.heads):
            raise ValueError(f"sentence {sent.source_id}: {len(sent.tokens)} gold tokens, {len(tree.heads)} predicted")
        s = h = b = 0
        for i, tok in enumerate(sent.tokens):
            if is_punctuation(tok, convention):
                excluded += 1
                continue
            s += 1
            if tree.heads[i] == tok.gold_head:
                h += 1
                if tree.labels is not None and str(tree.labels[i]) == tok.gold_label:
                    b += 1
        scored += s
        heads_ok += h
        both_ok += b
        per.append(SentenceScore(sent.source_id, s, h, b))
    uas = heads_ok / scored if scored else 1.0
    las = both_ok / scored if scored else 1.0
    return EvalReport(uas, las, None, scored, excluded, per)


def order_accuracy(gold_layers, predicted_layers):
    """Fraction of words whose predicted layer equals the capped gold layer."""
    if len(gold_layers) != len(predicted_layers):
        raise ValueError("gold and predicted layer lists are not aligned")
    total = correct = 0
    for g, p in zip(gold_layers, predicted_layers):
        gt = g.targets if hasattr(g, "targets") else [min(int(x), NUM_LAYERS - 1) for x in g]
        pt = p.targets if hasattr(p, "targets") else [min(int(x), NUM_LAYERS - 1) for x in p]
        if len(gt) != len(pt):
            raise ValueError("sentence layer rows differ in length")
        total += len(gt)
        correct += sum(int(a == b) for a, b in zip(gt, pt))
    if total == 0:
        log.warning("order accuracy over an empty corpus is defined as 1.0")
        return 1.0
    return correct / total


def predict(model, sentences, kind="greedy-projective", raw=False, mst_on_prob=False, jobs=1, tie_break="position"):
    """Decode sentences with a model; returns (labeled trees, predicted layers, seconds)."""
    names = model.vocab.labels

    def one(sent):
        ss = score_sentence(sent, model, "eval")
        tree = assign_labels(ss, decode(ss, kind, raw=raw, mst_on_prob=mst_on_prob, tie_break=tie_break), names)
        return tree, [int(x) for x in ss.priorities()]

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, sentences))
    else:
        results = [one(s) for s in sentences]
    secs = time.perf_counter() - t0
    return [r[0] for r in results], [r[1] for r in results], secs


def evaluate_model(model, sentences, kind="greedy-projective", convention="ud", raw=False, mst_on_prob=False,
                   jobs=1, tie_break="position"):
    trees, layers, secs = predict(model, sentences, kind, raw=raw, mst_on_prob=mst_on_prob, jobs=jobs,
                                  tie_break=tie_break)
    report = attachment_scores(sentences, trees, convention)
    report.order_acc = order_accuracy([compute_layers(s.heads) for s in sentences], layers)
    report.decode_seconds = secs
    ntok = sum(len(s) for s in sentences)
    report.tokens_per_sec = ntok / secs if secs > 0 else 0.0
    return report


@dataclass
class BenchRow:
    length: int
    sentences: int
    candidates: int
    comparisons: int
    attachments: int
    tokens_per_sec: float


def synthetic_score_set(n, rng):
    arc = rng.normal(size=(n + 1, n + 1))
    order = rng.normal(size=(n, NUM_LAYERS))
    return ScoreSet(arc, order)


def benchmark_decode(model, sentences, kind="greedy-projective", repetitions=3, lengths=None, seed=0,
                     per_length=5):
    """Decode repeatedly, recording median throughput and per-length operation counts.

    With ``model=None`` synthetic Gaussian score sets are used, either one per
    sentence length in ``sentences`` or ``per_length`` per entry of
    ``lengths``.
    """
    if repetitions < 3:
        raise ValueError("repetitions must be at least 3")
    rng = np.random.default_rng(seed)
    if model is None:
        if lengths is None:
            lengths = [len(s) for s in sentences]
            sets = [synthetic_score_set(n, rng) for n in lengths]
        else:
            lengths = [n for n in lengths for _ in range(per_length)]
            sets = [synthetic_score_set(n, rng) for n in lengths]
    else:
        sets = [score_sentence(s, model, "eval") for s in sentences]
        lengths = [ss.n for ss in sets]

    rows = {}
    rates = []
    first_counts = None
    for rep in range(repetitions):
        counts = []
        t0 = time.perf_counter()
        for ss in sets:
            st = DecodeStats()
            decode(ss, kind, stats=st)
            counts.append((ss.n, st.candidates, st.comparisons, st.attachments))
        secs = time.perf_counter() - t0
        rates.append(sum(lengths) / secs if secs > 0 else float("inf"))
        if first_counts is None:
            first_counts = counts
        elif counts != first_counts:
            raise RuntimeError("operation counts changed between repetitions")
    median = statistics.median(rates)
    for n, cand, comp, att in first_counts:
        r = rows.setdefault(n, [0, 0, 0, 0])
        r[0] += 1
        r[1] += cand
        r[2] += comp
        r[3] += att
    table = [BenchRow(n, c, cand // c, comp // c, att // c, median) for n, (c, cand, comp, att) in sorted(rows.items())]
    return median, table


def render_bench(table, kind, fmt="table"):
    head = ["decoder", "length", "sentences", "candidates", "comparisons", "attachments", "tokens_per_sec"]
    rows = [[kind, str(r.length), str(r.sentences), str(r.candidates), str(r.comparisons), str(r.attachments),
             f"{r.tokens_per_sec:.1f}"] for r in table]
    if fmt == "tsv":
        return "\n".join("\t".join(x) for x in [head] + rows) + "\n"
    if fmt == "kv":
        return "".join(" ".join(f"{h}={v}" for h, v in zip(head, row)) + "\n" for row in rows)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"
