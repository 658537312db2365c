"""Inference: projective greedy over the pending list, two-step non-projective greedy, MST.

The greedy decoders add each dependent's predicted layer (an integer) to the
arc probability of the action attaching it, so any word in a deeper layer is
attached before every word in a shallower one, and the arc probability only
orders actions within a layer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cmp_to_key

import numpy as np

from ggparse.trees import DepTree

DECODERS = ("greedy-projective", "greedy-nonprojective", "mst")


class ActionKind(enum.Enum):
    ATTACH_LEFT = "attach-left"
    ATTACH_RIGHT = "attach-right"
    NP_ATTACH_LEFT = "np-attach-left"
    NP_ATTACH_RIGHT = "np-attach-right"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    head: int
    dep: int
    score: float


@dataclass
class DecodeStats:
    """Operation counters filled in by the decoders when passed as ``stats``."""

    candidates: int = 0
    comparisons: int = 0
    attachments: int = 0
    actions: list = field(default_factory=list)


def _base(score_set, raw):
    return score_set.arc if raw else score_set.arc_prob


def _offsets(score_set, use_order):
    n = score_set.n
    pri = np.zeros(n + 1, dtype=np.int64)
    if use_order:
        pri[1:] = score_set.priorities()
    return pri


def action_score(score_set, head, dep, use_order=True, raw=False):
    """Arc probability of head -> dep plus the dependent's layer priority."""
    n = score_set.n
    if not (0 <= head <= n and 1 <= dep <= n):
        raise IndexError(f"arc {head}->{dep} out of range for n={n}")
    if head == dep:
        raise ValueError("head and dependent must differ")
    s = float(_base(score_set, raw)[head, dep])
    if use_order:
        s += score_set.order_priority(dep)
    return s


def decode_projective(score_set, n=None, use_order=True, raw=False, stats=None):
    """Projective greedy decoding that picks the best action anywhere in the pending list.

    At every step all adjacent pending pairs are scored for ATTACH_LEFT
    (left node heads right node) and ATTACH_RIGHT (right node heads left
    node) and the best action is executed.  Ties go to the leftmost pair,
    and ATTACH_LEFT before ATTACH_RIGHT.  Root is never a dependent.
    """
    n = score_set.n if n is None else n
    if n != score_set.n:
        raise ValueError(f"n={n} does not match score set of size {score_set.n}")
    base = _base(score_set, raw)
    pri = _offsets(score_set, use_order)
    pending = list(range(n + 1))
    heads = [0] * n
    evaluated = 0
    while len(pending) > 1:
        best = -np.inf
        best_pos, best_left = -1, True
        for i in range(len(pending) - 1):
            a, b = pending[i], pending[i + 1]
            s = base[a, b] + pri[b]
            evaluated += 1
            if s > best or best_pos < 0:
                best, best_pos, best_left = s, i, True
            if a != 0:
                s = base[b, a] + pri[a]
                evaluated += 1
                if s > best:
                    best, best_pos, best_left = s, i, False
        a, b = pending[best_pos], pending[best_pos + 1]
        if best_left:
            heads[b - 1] = a
            del pending[best_pos + 1]
            kind, h, d = ActionKind.ATTACH_LEFT, a, b
        else:
            heads[a - 1] = b
            del pending[best_pos]
            kind, h, d = ActionKind.ATTACH_RIGHT, b, a
        if stats is not None:
            stats.attachments += 1
            stats.actions.append(Action(kind, h, d, float(best)))
    if stats is not None:
        stats.candidates += evaluated
    return DepTree(heads)


TIE_BREAKS = ("position", "confidence")


def nonprojective_order(score_set, use_order=True, stats=None, tie_break="position"):
    """Words sorted by predicted layer (descending), then position.

    With ``tie_break="confidence"`` words sharing a layer are ordered by the
    winning layer logit (highest first) before position.
    """
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"tie_break must be one of {TIE_BREAKS}, got {tie_break!r}")
    n = score_set.n
    pri = _offsets(score_set, use_order)
    conf = np.zeros(n + 1)
    if tie_break == "confidence" and use_order:
        conf[1:] = score_set.order_logits.max(axis=1)

    def key(d):
        return (-pri[d], -conf[d], d)

    words = list(range(1, n + 1))
    if stats is None:
        return sorted(words, key=key)

    def cmp(x, y):
        stats.comparisons += 1
        kx, ky = key(x), key(y)
        return -1 if kx < ky else (1 if kx > ky else 0)

    return sorted(words, key=cmp_to_key(cmp))


def decode_nonprojective(score_set, n=None, use_order=True, raw=False, stats=None, tie_break="position"):
    """Two-step non-projective greedy decoding.

    The pending words are sorted once by predicted layer; each word in turn
    takes the best-scoring head among the nodes still pending (root
    included) and leaves the list.  Heads are always pending nodes, so the
    result is acyclic by construction.
    """
    n = score_set.n if n is None else n
    if n != score_set.n:
        raise ValueError(f"n={n} does not match score set of size {score_set.n}")
    base = _base(score_set, raw)
    alive = np.ones(n + 1, dtype=bool)
    heads = [0] * n
    for d in nonprojective_order(score_set, use_order, stats, tie_break):
        alive[d] = False
        cand = np.flatnonzero(alive)
        h = int(cand[np.argmax(base[cand, d])])
        heads[d - 1] = h
        if stats is not None:
            stats.candidates += len(cand)
            stats.attachments += 1
            kind = ActionKind.NP_ATTACH_LEFT if h < d else ActionKind.NP_ATTACH_RIGHT
            stats.actions.append(Action(kind, h, d, float(base[h, d])))
    return DepTree(heads)


def _find_cycle(heads):
    n = len(heads)
    color = [0] * n
    color[0] = 2
    for start in range(1, n):
        path = []
        v = start
        while color[v] == 0:
            color[v] = 1
            path.append(v)
            v = heads[v]
        if color[v] == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _chu_liu_edmonds(s):
    """Max arborescence rooted at 0 for a dense score matrix s[h, d]."""
    N = s.shape[0]
    s = s.copy()
    s[:, 0] = -np.inf
    np.fill_diagonal(s, -np.inf)
    heads = np.argmax(s, axis=0)
    heads[0] = -1
    cycle = _find_cycle(list(heads))
    if cycle is None:
        return heads
    in_cycle = np.zeros(N, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(cycle)
    rest = np.flatnonzero(~in_cycle)  # contains 0 first
    c = len(rest)
    M = np.full((c + 1, c + 1), -np.inf)
    M[:c, :c] = s[np.ix_(rest, rest)]
    with np.errstate(invalid="ignore"):
        enter_gain = s[np.ix_(rest, cyc)] - s[heads[cyc], cyc][None, :]
    enter_gain = np.where(np.isnan(enter_gain), -np.inf, enter_gain)
    enter_idx = np.argmax(enter_gain, axis=1)
    M[:c, c] = enter_gain[np.arange(c), enter_idx]
    leave = s[np.ix_(cyc, rest)]
    leave_idx = np.argmax(leave, axis=0)
    M[c, :c] = leave[leave_idx, np.arange(c)]
    sub = _chu_liu_edmonds(M)
    out = heads.copy()
    for j in range(1, c):
        v = rest[j]
        h = sub[j]
        out[v] = cyc[leave_idx[j]] if h == c else rest[h]
    u = sub[c]
    out[cyc[enter_idx[u]]] = rest[u]
    return out


def decode_mst(score_set, n=None, on_prob=False):
    """Maximum spanning arborescence (Chu-Liu/Edmonds); order scores unused."""
    n = score_set.n if n is None else n
    if n != score_set.n:
        raise ValueError(f"n={n} does not match score set of size {score_set.n}")
    s = score_set.arc_prob if on_prob else score_set.arc
    heads = _chu_liu_edmonds(np.asarray(s, dtype=np.float64))
    return DepTree([int(h) for h in heads[1:]])


def tree_score(arc, heads):
    """Sum of arc[h, d] over the tree's arcs, accumulated in word order."""
    total = 0.0
    for d, h in enumerate(heads, 1):
        total += float(arc[h, d])
    return total


def assign_labels(score_set, tree, names=None):
    """Label each arc with its best relation; ties go to the lowest id."""
    if score_set.label is None:
        raise ValueError("score set carries no label scores")
    ids = [int(np.argmax(score_set.label[h, d - 1])) for d, h in enumerate(tree.heads, 1)]
    labels = [names[i] for i in ids] if names is not None else ids
    return DepTree(list(tree.heads), labels)


def decode(score_set, kind="greedy-projective", use_order=True, raw=False, mst_on_prob=False, stats=None,
           tie_break="position"):
    if kind == "greedy-projective":
        return decode_projective(score_set, use_order=use_order, raw=raw, stats=stats)
    if kind == "greedy-nonprojective":
        return decode_nonprojective(score_set, use_order=use_order, raw=raw, stats=stats, tie_break=tie_break)
    if kind == "mst":
        tree = decode_mst(score_set, on_prob=mst_on_prob)
        if stats is not None:
            stats.attachments += tree.n
        return tree
    raise ValueError(f"unknown decoder {kind!r}; choose from {', '.join(DECODERS)}")
