"""Reconciling independent span scores into a well-formed tree.

Every span ``(i, j)`` has a best constituent log-score ``v_plus`` and a
non-constituent log-score ``v_minus``.  A selection is a pairwise
non-crossing set of spans containing the root ``(0, n)``; its objective is
``sum(v_plus over selected) + sum(v_minus over the rest)``.  Ties go to the
selection with fewer spans, then to the lexicographically smallest sorted
span list.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .treebank import Parse, Sentence, Span, Tree, all_spans, crosses, spans_to_tree, EMPTY

BRUTEFORCE_MAX_N = 12
# larger sentences enumerate without materializing the family table
_TABLE_MAX_N = 8


class DecodeError(ValueError):
    pass


@dataclass
class SpanScores:
    """Per-span scores; arrays are ``(n+1) x (n+1)`` and only ``i < j`` entries are meaningful."""

    n: int
    v_plus: np.ndarray
    v_minus: np.ndarray
    best_label: np.ndarray

    @classmethod
    def from_dict(cls, n: int, v_plus: Dict[Span, float], v_minus: Dict[Span, float],
                  best_label: Optional[Dict[Span, int]] = None) -> "SpanScores":
        vp = np.zeros((n + 1, n + 1))
        vm = np.zeros((n + 1, n + 1))
        bl = np.ones((n + 1, n + 1), dtype=np.int64)
        for s in all_spans(n):
            vp[s] = v_plus[s]
            vm[s] = v_minus[s]
            if best_label is not None:
                bl[s] = best_label[s]
        return cls(n, vp, vm, bl)

    def gain(self, span: Span) -> float:
        return float(self.v_plus[span] - self.v_minus[span])

    def rows(self) -> List[Tuple[int, int, float, float, int]]:
        return [(i, j, float(self.v_plus[i, j]), float(self.v_minus[i, j]), int(self.best_label[i, j]))
                for i, j in all_spans(self.n)]


@dataclass
class Selection:
    spans: Tuple[Span, ...]
    objective: float
    approximate: bool = False

    def __post_init__(self):
        self.spans = tuple(sorted(self.spans))


def objective(scores: SpanScores, selected) -> float:
    """The full objective of a selection, summed in a fixed span order."""
    chosen = set(selected)
    total = 0.0
    for s in all_spans(scores.n):
        total += scores.v_plus[s] if s in chosen else scores.v_minus[s]
    return float(total)


def _better(a: Tuple[float, int], b: Tuple[float, int]) -> bool:
    return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])


def reconcile_dp(scores: SpanScores) -> Selection:
    """Exact optimum by a chart over spans.

    With ``G = v_plus - v_minus``: ``c(i, j)`` is the best gain of a
    non-crossing selection inside ``(i, j)`` (the span itself optional) and
    ``d(i, j)`` the best gain strictly inside it, found by splitting at a
    fencepost no selected span straddles.
    """
    n = scores.n
    gain = scores.v_plus - scores.v_minus
    # best (gain, count) and split back-pointers
    c_val = np.zeros((n + 1, n + 1))
    c_cnt = np.zeros((n + 1, n + 1), dtype=np.int64)
    d_val = np.zeros((n + 1, n + 1))
    d_cnt = np.zeros((n + 1, n + 1), dtype=np.int64)
    split = np.full((n + 1, n + 1), -1, dtype=np.int64)
    take = np.zeros((n + 1, n + 1), dtype=bool)

    def spans_of(i: int, j: int, inside_only: bool) -> List[Span]:
        out: List[Span] = []
        stack = [(i, j, inside_only)]
        while stack:
            a, b, inner = stack.pop()
            if not inner and take[a, b]:
                out.append((a, b))
            k = split[a, b]
            if k >= 0:
                stack.append((a, k, False))
                stack.append((k, b, False))
        return sorted(out)

    for width in range(1, n + 1):
        for i in range(n - width + 1):
            j = i + width
            if width > 1:
                best_k = -1
                best = (-np.inf, 0)
                for k in range(i + 1, j):
                    cand = (c_val[i, k] + c_val[k, j], int(c_cnt[i, k] + c_cnt[k, j]))
                    if best_k < 0 or _better(cand, best):
                        best, best_k = cand, k
                    elif cand == best:
                        split[i, j] = k
                        alt = spans_of(i, j, True)
                        split[i, j] = best_k
                        if alt < spans_of(i, j, True):
                            best_k = k
                split[i, j] = best_k
                d_val[i, j], d_cnt[i, j] = best
            g = gain[i, j]
            take[i, j] = g > 0
            c_val[i, j] = d_val[i, j] + (g if g > 0 else 0.0)
            c_cnt[i, j] = d_cnt[i, j] + (1 if g > 0 else 0)

    take[0, n] = True
    chosen = spans_of(0, n, False)
    return Selection(tuple(chosen), objective(scores, chosen))


@lru_cache(maxsize=None)
def _laminar_families(n: int) -> np.ndarray:
    """Every non-crossing subset of the non-root spans, as bitmasks over ``_non_root(n)``."""
    others = _non_root(n)
    cross = [sum(1 << b for b, t in enumerate(others) if crosses(s, t)) for s in others]
    out: List[int] = []

    def rec(idx: int, mask: int):
        if idx == len(others):
            out.append(mask)
            return
        rec(idx + 1, mask)
        if not cross[idx] & mask:
            rec(idx + 1, mask | (1 << idx))

    rec(0, 0)
    return np.array(out, dtype=np.int64)


def _non_root(n: int) -> List[Span]:
    return [s for s in all_spans(n) if s != (0, n)]


def reconcile_bruteforce(scores: SpanScores) -> Selection:
    """Exhaustive search over every non-crossing span set containing the root."""
    n = scores.n
    if n > BRUTEFORCE_MAX_N:
        raise DecodeError(f"brute force is limited to n <= {BRUTEFORCE_MAX_N} (got {n})")
    others = _non_root(n)
    gains = [scores.gain(span) for span in others]
    if n > _TABLE_MAX_N:
        return _bruteforce_streaming(scores, others, gains)
    families = _laminar_families(n)
    totals = np.zeros(len(families))
    for b, g in enumerate(gains):
        totals += ((families >> b) & 1) * g
    tied = families[totals == totals.max()]

    def key(mask: int):
        chosen = sorted([(0, n)] + [s for b, s in enumerate(others) if mask >> b & 1])
        return (len(chosen), chosen)

    best = min((key(int(m)) for m in tied))[1]
    return Selection(tuple(best), objective(scores, best))


def _bruteforce_streaming(scores: SpanScores, others: List[Span], gains: List[float]) -> Selection:
    n = scores.n
    cross = [sum(1 << b for b, t in enumerate(others) if crosses(s, t)) for s in others]
    best: list = []

    def rec(idx: int, mask: int, total: float):
        if idx == len(others):
            if not best or total > best[0] or total == best[0] and _key(mask) < _key(best[1]):
                best[:] = [total, mask]
            return
        rec(idx + 1, mask, total)
        if not cross[idx] & mask:
            rec(idx + 1, mask | (1 << idx), total + gains[idx])

    def _key(mask: int):
        chosen = sorted([(0, n)] + [s for b, s in enumerate(others) if mask >> b & 1])
        return (len(chosen), chosen)

    rec(0, 0, 0.0)
    chosen = _key(best[1])[1]
    return Selection(tuple(chosen), objective(scores, chosen))


def reconcile_greedy(scores: SpanScores) -> Selection:
    """Keep positive-gain spans, dropping the weaker member of every crossing pair."""
    n = scores.n
    root = (0, n)
    positive = [s for s in all_spans(n) if s != root and scores.gain(s) > 0]
    # stable: strongest first, span order among equal gains
    positive.sort(key=lambda s: -scores.gain(s))
    kept: List[Span] = [root]
    for span in positive:
        if not any(crosses(span, k) for k in kept):
            kept.append(span)
    return Selection(tuple(kept), objective(scores, kept), approximate=True)


METHODS = {
    "dp": reconcile_dp,
    "greedy": reconcile_greedy,
    "bruteforce": reconcile_bruteforce,
}


def reconcile(scores: SpanScores, method: str = "dp") -> Selection:
    try:
        fn = METHODS[method]
    except KeyError:
        raise DecodeError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(scores)


def selection_to_tree(sentence: Sentence, selection: Selection, scores: SpanScores,
                      label_vocab, pos_tags: Sequence[str]) -> Tree:
    labels = dict.fromkeys(all_spans(sentence.n), EMPTY)
    for span in selection.spans:
        labels[span] = label_vocab[int(scores.best_label[span])]
    pos = {(k, k + 1): tag for k, tag in enumerate(pos_tags)}
    return spans_to_tree(Parse(sentence, labels), pos)


# ---------------------------------------------------------------------------
# Model-driven decoding


def _scores_from_logp(n: int, logp: np.ndarray, spans: Sequence[Span]) -> SpanScores:
    vp = np.zeros((n + 1, n + 1))
    vm = np.zeros((n + 1, n + 1))
    bl = np.zeros((n + 1, n + 1), dtype=np.int64)
    best = logp[:, 1:].argmax(axis=1)  # argmax keeps the lowest index on ties
    for row, (i, j) in enumerate(spans):
        bl[i, j] = best[row] + 1
        vp[i, j] = logp[row, best[row] + 1]
        vm[i, j] = logp[row, 0]
    return SpanScores(n, vp, vm, bl)


def score_batch(sentences: Sequence[Sequence[str]], params) -> List[Tuple[SpanScores, List[str]]]:
    """Eval-mode span scores and argmax POS tags for several sentences at once."""
    from .model import Batch, forward

    spans = [list(all_spans(len(toks))) for toks in sentences]
    batch = Batch([tuple(t) for t in sentences], spans, [list(range(len(t))) for t in sentences])
    result = forward(params, batch)
    out = []
    row = prow = 0
    for toks, sp in zip(sentences, spans):
        logp = result.label_logp[row:row + len(sp)]
        tags = [params.tags[int(k)] for k in result.pos_logp[prow:prow + len(toks)].argmax(axis=1)]
        out.append((_scores_from_logp(len(toks), logp, sp), tags))
        row += len(sp)
        prow += len(toks)
    return out


def score_all_spans(sentence, params) -> SpanScores:
    tokens = sentence.tokens if isinstance(sentence, Sentence) else tuple(sentence)
    return score_batch([tokens], params)[0][0]


def decode_many(sentences: Sequence[Sequence[str]], params, method: str = "dp",
                batch_size: int = 32) -> List[Tree]:
    trees = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        for toks, (scores, tags) in zip(chunk, score_batch(chunk, params)):
            selection = reconcile(scores, method)
            trees.append(selection_to_tree(Sentence(tuple(toks)), selection, scores, params.labels, tags))
    return trees


def decode(sentence, params, method: str = "dp") -> Tree:
    tokens = sentence.tokens if isinstance(sentence, Sentence) else tuple(sentence)
    return decode_many([tokens], params, method)[0]
