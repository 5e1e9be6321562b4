"""Labeled bracket scoring and partial-annotation metrics.

The bracket scorer follows evalb loosely: every non-terminal node is a
bracket (unary chains give several brackets on one span), the root counts,
POS preterminals do not, and no punctuation is deleted.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

from .annotation import PartialAnnotation, declaration_satisfied
from .treebank import Leaf, Tree, constituent_labels


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float

    def __str__(self) -> str:
        return f"Rec {self.recall:.2f}  Prec {self.precision:.2f}  F1 {self.f1:.2f}"


@dataclass(frozen=True)
class PartialMetrics:
    correct_constituents_pct: float
    error_free_pct: float
    declarations: int = 0
    correct: int = 0
    sentences: int = 0
    error_free: int = 0


def labeled_brackets(tree: Tree) -> Counter:
    out: Counter = Counter()

    def walk(node: Union[Tree, Leaf], start: int) -> int:
        if isinstance(node, Leaf):
            return start + 1
        end = start
        for child in node.children:
            end = walk(child, end)
        out[((start, end), node.label)] += 1
        return end

    walk(tree, 0)
    return out


def _check_aligned(gold: Sequence[Tree], pred: Sequence[Tree]) -> None:
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold trees but {len(pred)} predicted")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if g.tokens != p.tokens:
            raise EvaluationError(f"sentence {k}: token sequences differ")


def prf_from_counts(matched: int, n_gold: int, n_pred: int) -> PRF:
    recall = 100.0 * matched / n_gold if n_gold else 0.0
    precision = 100.0 * matched / n_pred if n_pred else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(recall, precision, f1)


def bracket_counts(gold: Sequence[Tree], pred: Sequence[Tree]) -> Tuple[int, int, int]:
    _check_aligned(gold, pred)
    matched = n_gold = n_pred = 0
    for g, p in zip(gold, pred):
        gb, pb = labeled_brackets(g), labeled_brackets(p)
        matched += sum((gb & pb).values())
        n_gold += sum(gb.values())
        n_pred += sum(pb.values())
    return matched, n_gold, n_pred


def prf(gold: Sequence[Tree], pred: Sequence[Tree]) -> PRF:
    """Micro-averaged labeled bracket recall, precision and F1, as percentages."""
    return prf_from_counts(*bracket_counts(gold, pred))


def partial_metrics(preds: Sequence[Tree], anns: Sequence[PartialAnnotation]) -> PartialMetrics:
    if len(preds) != len(anns):
        raise EvaluationError(f"{len(preds)} parses but {len(anns)} annotations")
    total = correct = clean = 0
    for k, (tree, ann) in enumerate(zip(preds, anns)):
        if tree.tokens != ann.sentence.tokens:
            raise EvaluationError(f"sentence {k}: parse and annotation tokens differ")
        cons = constituent_labels(tree)
        ok = [declaration_satisfied(d, cons) for d in ann.declarations]
        total += len(ok)
        correct += sum(ok)
        clean += all(ok)
    n = len(anns)
    return PartialMetrics(
        correct_constituents_pct=100.0 * correct / total if total else 100.0,
        error_free_pct=100.0 * clean / n if n else 100.0,
        declarations=total,
        correct=correct,
        sentences=n,
        error_free=clean,
    )


def pos_accuracy(gold: Sequence[Tree], pred: Sequence[Tree]) -> float:
    _check_aligned(gold, pred)
    total = right = 0
    for g, p in zip(gold, pred):
        total += len(g.pos_tags)
        right += sum(a == b for a, b in zip(g.pos_tags, p.pos_tags))
    return 100.0 * right / total if total else 100.0


def span_accuracy(gold: Sequence[Tree], pred: Sequence[Tree]) -> float:
    """Percentage of all spans whose predicted label sequence equals the gold one."""
    _check_aligned(gold, pred)
    total = right = 0
    for g, p in zip(gold, pred):
        n = len(g)
        gc, pc = constituent_labels(g), constituent_labels(p)
        spans = n * (n + 1) // 2
        total += spans
        wrong = sum(1 for s in set(gc) | set(pc) if gc.get(s) != pc.get(s))
        right += spans - wrong
    return 100.0 * right / total if total else 100.0


def two_proportion_test(hits_a: int, n_a: int, hits_b: int, n_b: int) -> float:
    """One-sided p-value for the alternative that proportion b exceeds proportion a (pooled z-test)."""
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be non-empty")
    pa, pb = hits_a / n_a, hits_b / n_b
    pooled = (hits_a + hits_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n_a + 1 / n_b))
    if se == 0:
        return 0.5 if pa == pb else (0.0 if pb > pa else 1.0)
    z = (pb - pa) / se
    return 0.5 * math.erfc(z / math.sqrt(2))
