"""ScoreSet container and the plain-text score interchange format.

File grammar (one or more blocks, ``#`` lines ignored)::

    sentence <id> <n> <num_labels>
    arc
    <n+1 lines of n+1 floats>          row h, column d
    order
    <n lines of NUM_LAYERS floats>     row d-1
    label                              only when num_labels > 0
    <(n+1)*n lines of num_labels floats>   row h*n + (d-1)
    end

Numbers use Python ``repr`` so values survive the round trip exactly;
``inf``/``-inf`` are allowed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LAYER = 32
NUM_LAYERS = MAX_LAYER + 1


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


@dataclass
class ScoreSet:
    """Scores for one sentence of n words; node 0 is the root.

    arc[h, d]          raw biaffine score of head h over dependent d
    arc_prob           elementwise logistic of ``arc``
    order_logits[d-1]  layer-class logits for word d (NUM_LAYERS columns)
    label[h, d-1, r]   score of relation r on arc h -> d
    """

    arc: np.ndarray
    order_logits: np.ndarray
    label: np.ndarray | None = None
    arc_prob: np.ndarray | None = None

    def __post_init__(self):
        self.arc = np.asarray(self.arc, dtype=np.float64)
        self.order_logits = np.asarray(self.order_logits, dtype=np.float64)
        n = self.arc.shape[0] - 1
        if self.arc.shape != (n + 1, n + 1) or n < 1:
            raise ValueError(f"arc matrix must be (n+1)x(n+1) with n>=1, got {self.arc.shape}")
        if self.order_logits.shape != (n, NUM_LAYERS):
            raise ValueError(f"order logits must be {n}x{NUM_LAYERS}, got {self.order_logits.shape}")
        if self.label is not None:
            self.label = np.asarray(self.label, dtype=np.float64)
            if self.label.ndim != 3 or self.label.shape[:2] != (n + 1, n):
                raise ValueError(f"label tensor must be (n+1)xnxL, got {self.label.shape}")
        if self.arc_prob is None:
            self.arc_prob = sigmoid(self.arc)

    @property
    def n(self):
        return self.arc.shape[0] - 1

    def masked_arc(self):
        """Copy of ``arc`` with the diagonal and the root column set to -inf."""
        a = self.arc.copy()
        np.fill_diagonal(a, -np.inf)
        a[:, 0] = -np.inf
        return a

    def order_priority(self, dep):
        if not 1 <= dep <= self.n:
            raise IndexError(f"dependent {dep} out of range 1..{self.n}")
        # np.argmax returns the first maximum, i.e. the lowest layer on ties.
        return int(np.argmax(self.order_logits[dep - 1]))

    def priorities(self):
        return np.argmax(self.order_logits, axis=1)


def order_priority(score_set, dependent_index):
    return score_set.order_priority(dependent_index)


def _fmt_row(row):
    return " ".join(repr(float(x)) for x in row)


def dump_scores(blocks, path):
    """Write ``(sentence_id, ScoreSet)`` pairs to ``path``."""
    with open(path, "w", encoding="utf-8") as f:
        for sid, ss in blocks:
            nl = 0 if ss.label is None else ss.label.shape[2]
            sid = "_".join(str(sid).split()) or "_"
            f.write(f"sentence {sid} {ss.n} {nl}\n")
            f.write("arc\n")
            for row in ss.arc:
                f.write(_fmt_row(row) + "\n")
            f.write("order\n")
            for row in ss.order_logits:
                f.write(_fmt_row(row) + "\n")
            if nl:
                f.write("label\n")
                for row in ss.label.reshape(-1, nl):
                    f.write(_fmt_row(row) + "\n")
            f.write("end\n")


def load_scores(path):
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    out = []
    pos = 0

    def take(count, width, what):
        nonlocal pos
        rows = []
        for _ in range(count):
            if pos >= len(lines):
                raise ValueError(f"unexpected end of file in {what} block")
            vals = [float(x) for x in lines[pos].split()]
            if len(vals) != width:
                raise ValueError(f"{what} row has {len(vals)} values, expected {width}")
            rows.append(vals)
            pos += 1
        return np.array(rows, dtype=np.float64).reshape(count, width)

    def expect(word):
        nonlocal pos
        if pos >= len(lines) or lines[pos] != word:
            got = lines[pos] if pos < len(lines) else "EOF"
            raise ValueError(f"expected {word!r}, got {got!r}")
        pos += 1

    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 4 or head[0] != "sentence":
            raise ValueError(f"expected sentence header, got {lines[pos]!r}")
        sid, n, nl = head[1], int(head[2]), int(head[3])
        pos += 1
        expect("arc")
        arc = take(n + 1, n + 1, "arc")
        expect("order")
        order = take(n, NUM_LAYERS, "order")
        label = None
        if nl:
            expect("label")
            label = take((n + 1) * n, nl, "label").reshape(n + 1, n, nl)
        expect("end")
        out.append((sid, ScoreSet(arc, order, label)))
    return out
