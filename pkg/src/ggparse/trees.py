"""Dependency trees: validity, projectivity, layers, oracles and generators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ggparse.scores import MAX_LAYER, NUM_LAYERS, ScoreSet

MAX_ENUM_WORDS = 7


@dataclass
class DepTree:
    """Heads (and optionally labels) for words 1..n; ``heads[i]`` is the head of word i+1."""

    heads: list
    labels: list | None = None

    def __post_init__(self):
        self.heads = [int(h) for h in self.heads]
        if self.labels is not None and len(self.labels) != len(self.heads):
            raise ValueError("labels and heads differ in length")

    @property
    def n(self):
        return len(self.heads)

    @classmethod
    def from_sentence(cls, sentence):
        return cls(sentence.heads, sentence.labels)


@dataclass(frozen=True)
class TreeCheck:
    valid: bool
    reason: str = "ok"

    def __bool__(self):
        return self.valid


@dataclass
class LayerAssignment:
    layers: list
    cap: int = MAX_LAYER

    @property
    def targets(self):
        return [min(l, self.cap) for l in self.layers]


def _heads_of(tree):
    return tree.heads if isinstance(tree, DepTree) else [int(h) for h in tree]


def validate_tree(heads):
    """Check that ``heads`` encodes an arborescence over 0..n rooted at 0.

    Root may have several children.  The reason is one of ``ok``, ``empty``,
    ``out-of-range``, ``self-loop`` or ``cycle``.
    """
    heads = _heads_of(heads)
    n = len(heads)
    if n == 0:
        return TreeCheck(False, "empty")
    for i, h in enumerate(heads, 1):
        if not 0 <= h <= n:
            return TreeCheck(False, "out-of-range")
        if h == i:
            return TreeCheck(False, "self-loop")
    # 0 = unvisited, 1 = on current path, 2 = reaches root
    state = [0] * (n + 1)
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        v = start
        while state[v] == 0:
            state[v] = 1
            path.append(v)
            v = heads[v - 1]
        if state[v] == 1:
            return TreeCheck(False, "cycle")
        for u in path:
            state[u] = 2
    return TreeCheck(True)


def compute_layers(tree):
    """Depth of every word below the root (root itself is layer 0)."""
    heads = _heads_of(tree)
    check = validate_tree(heads)
    if not check:
        raise ValueError(f"cannot compute layers of an invalid tree ({check.reason})")
    n = len(heads)
    layer = [-1] * (n + 1)
    layer[0] = 0
    for start in range(1, n + 1):
        path = []
        v = start
        while layer[v] < 0:
            path.append(v)
            v = heads[v - 1]
        for u in reversed(path):
            layer[u] = layer[heads[u - 1]] + 1
    return LayerAssignment(layer[1:])


def is_projective(tree):
    """True iff no two arcs cross when drawn above the sentence."""
    heads = _heads_of(tree)
    spans = sorted(((min(h, d), max(h, d)) for d, h in enumerate(heads, 1)), key=lambda s: (s[0], -s[1]))
    # Crossing pairs: a < c < b < e for spans (a,b), (c,e).  Sweep with a stack
    # of open right ends; the spans must nest.
    stack = []
    for a, b in spans:
        while stack and stack[-1] <= a:
            stack.pop()
        if stack and b > stack[-1]:
            return False
        stack.append(b)
    return True


def arcs_cross(heads):
    """Quadratic pairwise crossing test, kept independent of :func:`is_projective`."""
    arcs = [(min(h, d), max(h, d)) for d, h in enumerate(heads, 1)]
    for i in range(len(arcs)):
        a, b = arcs[i]
        for j in range(i + 1, len(arcs)):
            c, e = arcs[j]
            if a < c < b < e or c < a < e < b:
                return True
    return False


def enumerate_arborescences(n):
    """Yield every valid head vector over n words (root may take several children)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_ENUM_WORDS:
        raise ValueError(f"enumeration limited to n <= {MAX_ENUM_WORDS}, got {n}")
    yield from _arborescences(n)


@lru_cache(maxsize=None)
def _arborescences(n):
    out = []
    heads = [0] * n

    def reaches_self(d):
        # does following heads from word d (already partially assigned) loop back?
        v = heads[d - 1]
        steps = 0
        while v != 0 and v <= d and steps <= n:
            if v == d:
                return True
            v = heads[v - 1]
            steps += 1
        return False

    def rec(d):
        if d > n:
            if validate_tree(heads):
                out.append(tuple(heads))
            return
        for h in range(n + 1):
            if h == d:
                continue
            heads[d - 1] = h
            if h < d and reaches_self(d):
                continue
            rec(d + 1)

    rec(1)
    return tuple(out)


def arborescence_array(n):
    """All arborescences over n words as an int array of shape (count, n)."""
    return np.array(_arborescences(n), dtype=np.int64).reshape(-1, n)


def oracle_scores(tree, num_labels=None):
    """Scores under which the gold tree is the unique best decode.

    Gold arcs get probability exactly 1 and all others 0 (raw arc scores are
    +inf / -inf).  Order logits are one-hot at the capped gold layer; label
    scores are one-hot at the gold label id for every head row.
    """
    heads = _heads_of(tree)
    layers = compute_layers(heads).targets
    n = len(heads)
    arc = np.full((n + 1, n + 1), -np.inf)
    prob = np.zeros((n + 1, n + 1))
    for d, h in enumerate(heads, 1):
        arc[h, d] = np.inf
        prob[h, d] = 1.0
    order = np.zeros((n, NUM_LAYERS))
    order[np.arange(n), layers] = 1.0
    label = None
    labels = tree.labels if isinstance(tree, DepTree) else None
    if labels is not None:
        ids = [int(l) for l in labels]
        if num_labels is None:
            num_labels = max(ids) + 1
        label = np.zeros((n + 1, n, num_labels))
        label[:, np.arange(n), ids] = 1.0
    return ScoreSet(arc, order, label, arc_prob=prob)


def random_projective_tree(n, rng):
    """Sample a projective tree over n words by recursive span splitting."""
    heads = [0] * n

    def build(lo, hi, parent):
        # words lo..hi (1-based, inclusive) form a sequence of sibling subtrees under parent
        if lo > hi:
            return
        cuts = sorted(rng.choice(np.arange(lo + 1, hi + 1), size=rng.integers(0, hi - lo + 1), replace=False)) \
            if hi > lo else []
        bounds = [lo] + [int(c) for c in cuts] + [hi + 1]
        for a, b in zip(bounds[:-1], bounds[1:]):
            h = int(rng.integers(a, b))
            heads[h - 1] = parent
            build(a, h - 1, h)
            build(h + 1, b - 1, h)

    build(1, n, 0)
    return heads


def random_tree(n, rng):
    """Sample an arbitrary (possibly non-projective) tree: random recursive attachment."""
    order = [int(x) for x in rng.permutation(np.arange(1, n + 1))]
    heads = [0] * n
    placed = [0]
    for w in order:
        heads[w - 1] = placed[int(rng.integers(0, len(placed)))]
        placed.append(w)
    return heads
