"""PCFG corpus synthesis and automatic partial annotation.

Grammar text has one production per line, ``WEIGHT LHS -> RHS ...``, with
terminals in double quotes (``3 NN -> "circle"``) and ``#`` comments.  A
non-terminal written ``NAME@tag`` produces a node labeled ``NAME``; the tag
only keeps productions of look-alike constituents apart.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .annotation import CONSTITUENT, NON_CONSTITUENT, PartialAnnotation, SpanDeclaration, write_markup
from .treebank import Leaf, Sentence, Span, Tree, all_spans, constituent_labels, crosses

MAX_ATTEMPTS = 10_000
MAX_DEPTH = 40


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Production:
    weight: float
    lhs: str
    rhs: Tuple[str, ...]
    lexical: bool = False

    def __str__(self) -> str:
        rhs = " ".join(f'"{s}"' if self.lexical else s for s in self.rhs)
        return f"{self.weight:g} {self.lhs} -> {rhs}"


def node_label(symbol: str) -> str:
    return symbol.split("@", 1)[0]


@dataclass
class Grammar:
    productions: List[Production]
    start: str = "S"
    by_lhs: Dict[str, List[Production]] = field(init=False, repr=False)

    def __post_init__(self):
        self.by_lhs = defaultdict(list)
        for p in self.productions:
            self.by_lhs[p.lhs].append(p)
        self.by_lhs = dict(self.by_lhs)
        self.validate()
        self._tables = {
            lhs: (np.cumsum([p.weight for p in ps]) / sum(p.weight for p in ps), ps)
            for lhs, ps in self.by_lhs.items()
        }

    @property
    def nonterminals(self) -> set:
        return set(self.by_lhs)

    @property
    def preterminals(self) -> set:
        return {lhs for lhs, ps in self.by_lhs.items() if all(p.lexical for p in ps)}

    @property
    def terminals(self) -> set:
        return {p.rhs[0] for p in self.productions if p.lexical}

    def validate(self) -> None:
        if self.start not in self.by_lhs:
            raise GrammarError(f"start symbol {self.start!r} has no productions")
        for p in self.productions:
            if not p.weight > 0:
                raise GrammarError(f"non-positive weight in {p}")
            if p.lexical and len(p.rhs) != 1:
                raise GrammarError(f"lexical production must rewrite to one terminal: {p}")
            for sym in p.rhs if not p.lexical else ():
                if sym not in self.by_lhs:
                    raise GrammarError(f"undefined non-terminal {sym!r} in {p}")
        for lhs, ps in self.by_lhs.items():
            kinds = {p.lexical for p in ps}
            if len(kinds) > 1:
                raise GrammarError(f"{lhs!r} mixes lexical and phrasal productions")
        if self.start in self.preterminals:
            raise GrammarError("the start symbol cannot be a preterminal")
        productive = set(self.preterminals)
        changed = True
        while changed:
            changed = False
            for p in self.productions:
                if p.lhs not in productive and all(s in productive for s in p.rhs):
                    productive.add(p.lhs)
                    changed = True
        if productive != self.nonterminals:
            raise GrammarError(f"unproductive non-terminals: {sorted(self.nonterminals - productive)}")
        reachable, frontier = {self.start}, [self.start]
        while frontier:
            for p in self.by_lhs[frontier.pop()]:
                if p.lexical:
                    continue
                for s in p.rhs:
                    if s not in reachable:
                        reachable.add(s)
                        frontier.append(s)
        if reachable != self.nonterminals:
            raise GrammarError(f"unreachable non-terminals: {sorted(self.nonterminals - reachable)}")

    def choose(self, lhs: str, rng: np.random.Generator) -> Production:
        cum, ps = self._tables[lhs]
        return ps[min(int(np.searchsorted(cum, rng.random(), side="right")), len(ps) - 1)]

    def to_text(self) -> str:
        return "\n".join(str(p) for p in self.productions) + "\n"


def parse_productions(text: str) -> List[Production]:
    prods = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            weight = float(parts[0])
            lhs, arrow, rhs = parts[1], parts[2], parts[3:]
        except (ValueError, IndexError):
            raise GrammarError(f"line {lineno}: expected 'WEIGHT LHS -> RHS...'") from None
        if arrow != "->" or not rhs:
            raise GrammarError(f"line {lineno}: expected 'WEIGHT LHS -> RHS...'")
        quoted = [len(s) >= 3 and s[0] == s[-1] == '"' for s in rhs]
        if any(quoted):
            if len(rhs) != 1:
                raise GrammarError(f"line {lineno}: a terminal must be the only right-hand symbol")
            prods.append(Production(weight, lhs, (rhs[0][1:-1],), lexical=True))
        else:
            prods.append(Production(weight, lhs, tuple(rhs)))
    return prods


def parse_grammar(text: str, start: str = "S") -> Grammar:
    return Grammar(parse_productions(text), start)


def read_grammar_file(path, start: str = "S") -> Grammar:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read(), start)


class _TooLong(Exception):
    pass


def _expand(grammar: Grammar, symbol: str, rng, budget: List[int], depth: int,
            counts: Optional[Dict[Production, int]]) -> Union[Tree, Leaf]:
    if depth > MAX_DEPTH:
        raise _TooLong
    prod = grammar.choose(symbol, rng)
    if counts is not None:
        counts[prod] = counts.get(prod, 0) + 1
    if prod.lexical:
        budget[0] -= 1
        if budget[0] < 0:
            raise _TooLong
        return Leaf(node_label(symbol), prod.rhs[0])
    children = tuple(_expand(grammar, s, rng, budget, depth + 1, counts) for s in prod.rhs)
    return Tree(node_label(symbol), children)


def sample_tree(grammar: Grammar, rng: np.random.Generator, max_len: int,
                counts: Optional[Dict[Production, int]] = None) -> Tree:
    for _ in range(MAX_ATTEMPTS):
        local: Optional[Dict[Production, int]] = {} if counts is not None else None
        try:
            tree = _expand(grammar, grammar.start, rng, [max_len], 0, local)
        except _TooLong:
            continue
        if counts is not None and local is not None:
            for p, c in local.items():
                counts[p] = counts.get(p, 0) + c
        return tree  # type: ignore[return-value]
    raise GrammarError(f"no sentence of length <= {max_len} after {MAX_ATTEMPTS} attempts")


def sample_corpus(grammar: Grammar, count: int, max_len: int = 30, seed: int = 0) -> List[Tree]:
    """``count`` trees by weighted top-down expansion, rejecting sentences longer than ``max_len``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return [sample_tree(grammar, rng, max_len) for _ in range(count)]


# ---------------------------------------------------------------------------
# Builtin source / target grammars

CORE_GRAMMAR = """
# shared clause and phrase skeleton
10 S -> NP VP .
3 S -> PP , NP VP .
8 NP -> DT NN
3 NP -> DT JJ NN
3 NP -> NNP
2 NP -> NP PP
4 PP -> IN NP
4 VP -> VBZ NP
2 VP -> VBZ ADJP
3 ADJP -> JJ
1 ADJP -> JJ PP
# shared words
3 DT -> "the"
1 DT -> "a"
1 DT -> "this"
2 IN -> "of"
2 IN -> "in"
1 IN -> "on"
1 IN -> "with"
1 IN -> "at"
1 IN -> "to"
1 JJ -> "large"
1 JJ -> "small"
1 JJ -> "equal"
1 JJ -> "new"
1 NN -> "point"
1 NN -> "line"
1 NN -> "side"
1 NN -> "value"
1 NN -> "number"
2 VBZ -> "is"
1 VBZ -> "has"
1 VBZ -> "contains"
1 . -> "."
1 , -> ","
1 CC -> "and"
"""

SOURCE_ONLY_GRAMMAR = """
# newswire-like constructions
2 NP -> NNP NNP
2 NP -> PRP
1 NP -> CD NN
1 NP -> NP CC NP
4 VP -> VBD NP
2 VP -> VBD NP PP
1 VP -> VBD SBAR
1 VP -> MD VP@base
2 VP@base -> VB NP
1 SBAR -> IN@that S@inner
2 S@inner -> NP VP
1 IN@that -> "that"
1 NNP -> "Ford"
1 NNP -> "Smith"
1 NNP -> "Chicago"
1 NNP -> "Apple"
1 NNP -> "Boston"
1 NNP -> "Jones"
1 PRP -> "it"
1 PRP -> "he"
1 PRP -> "they"
1 CD -> "5"
1 CD -> "10"
1 CD -> "20"
1 MD -> "will"
1 MD -> "may"
1 VB -> "buy"
1 VB -> "sell"
1 VBD -> "rose"
1 VBD -> "reported"
1 VBD -> "said"
1 VBD -> "acquired"
1 VBD -> "named"
1 VBD -> "labeled"
1 VBD -> "marked"
1 VBD -> "designated"
1 NN -> "company"
1 NN -> "market"
1 NN -> "share"
1 NN -> "price"
1 NN -> "director"
1 NN -> "report"
1 NN -> "quarter"
1 NN -> "percent"
1 JJ -> "strong"
1 JJ -> "weak"
"""

TARGET_ONLY_GRAMMAR = """
# geometry-like constructions
6 S -> VP@imp .
6 S -> PP , S@eqs .
4 VP@imp -> VB@imp NP
3 S@eqs -> S@eq
3 S@eqs -> S@eq CC S@eq
2 S@eqs -> S@eq , S@eq CC S@eq
1 S@eq -> NNP SYM CD
# noun-label constructs
5 NP -> NN NNP
5 NP -> DT NN NNP
# right-attaching participial modifiers
6 NP -> NP VP@part
2 VP@part -> VBN NP
1 VP@part -> VBN PP
1 VB@imp -> "Find"
1 VB@imp -> "Compute"
1 VB@imp -> "Determine"
1 SYM -> "="
1 NNP -> "AB"
1 NNP -> "AC"
1 NNP -> "BD"
1 NNP -> "CD"
1 NNP -> "E"
1 NNP -> "PQRS"
1 NNP -> "x"
1 CD -> "3"
1 CD -> "4"
1 CD -> "9"
1 CD -> "24"
1 VBN -> "labeled"
1 VBN -> "marked"
1 VBN -> "designated"
1 VBN -> "named"
1 NN -> "circle"
1 NN -> "chord"
1 NN -> "segment"
1 NN -> "triangle"
1 NN -> "angle"
1 NN -> "diameter"
1 NN -> "radius"
1 NN -> "rhombus"
1 JJ -> "perpendicular"
1 JJ -> "parallel"
"""


def builtin_grammars() -> Tuple[Grammar, Grammar]:
    """(source, target) grammars sharing exactly the productions of ``CORE_GRAMMAR``."""
    source = parse_grammar(CORE_GRAMMAR + SOURCE_ONLY_GRAMMAR)
    target = parse_grammar(CORE_GRAMMAR + TARGET_ONLY_GRAMMAR)
    return source, target


# ---------------------------------------------------------------------------
# Partial annotations


@dataclass
class AnnotationPolicy:
    constituent_mean: float = 2.8
    non_constituent_mean: float = 0.3
    label_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.constituent_mean < 0 or self.non_constituent_mean < 0:
            raise ValueError("declaration means must be non-negative")
        if not 0 <= self.label_probability <= 1:
            raise ValueError("label_probability must lie in [0, 1]")


def annotate_tree(tree: Tree, policy: AnnotationPolicy, rng: np.random.Generator) -> PartialAnnotation:
    """Sample gold-consistent declarations for one tree.

    Constituent candidates are the gold constituents of width 2 or more other
    than the root; non-constituent candidates are spans of width 2 or more
    that are not gold constituents and cross none of the chosen constituents.
    Counts are Poisson with the policy means, truncated to the candidates.
    """
    n = len(tree)
    gold = constituent_labels(tree)
    cons_cands = sorted(s for s in gold if s != (0, n) and s[1] - s[0] >= 2)
    k = min(int(rng.poisson(policy.constituent_mean)), len(cons_cands))
    picked = sorted(cons_cands[i] for i in rng.choice(len(cons_cands), size=k, replace=False)) if k else []
    decls = []
    for span in picked:
        label = gold[span] if rng.random() < policy.label_probability else None
        decls.append(SpanDeclaration(span, CONSTITUENT, label))
    non_cands = [
        s for s in all_spans(n)
        if s[1] - s[0] >= 2 and s not in gold and not any(crosses(s, c) for c in picked)
    ]
    m = int(rng.poisson(policy.non_constituent_mean))
    chosen_non: List[Span] = []
    for idx in rng.permutation(len(non_cands)):
        if len(chosen_non) >= m:
            break
        span = non_cands[idx]
        if not any(crosses(span, c) for c in chosen_non):
            chosen_non.append(span)
    decls.extend(SpanDeclaration(s, NON_CONSTITUENT) for s in sorted(chosen_non))
    decls.sort(key=lambda d: d.span)
    return PartialAnnotation(Sentence(tree.tokens), decls)


def make_partial_annotations(trees: Sequence[Tree], policy: AnnotationPolicy) -> List[str]:
    """Bracket-markup annotation lines, one per tree, deterministic in ``policy.seed``."""
    rng = np.random.default_rng(policy.seed)
    return [write_markup(annotate_tree(t, policy, rng)) for t in trees]
