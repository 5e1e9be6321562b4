"""Phrase-structure trees, bracketed treebank IO and the tree <-> span-labeling correspondence.

A tree over ``n`` tokens is viewed as a total map from every fencepost span
``(i, j)``, ``0 <= i < j <= n``, to a label sequence: the top-down chain of
non-terminals sitting on that span, or the empty tuple for non-constituents.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

Span = Tuple[int, int]
LabelSeq = Tuple[str, ...]

EMPTY: LabelSeq = ()
WRAPPER_LABELS = frozenset({"TOP", "ROOT"})
_ESCAPES = {"(": "-LRB-", ")": "-RRB-"}


class TreebankError(ValueError):
    """Malformed bracketed input or an ill-formed span labeling."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class Leaf:
    pos: str
    token: str


@dataclass(frozen=True)
class Tree:
    """Internal node of a phrase-structure tree; the root of a parse is a ``Tree``."""

    label: str
    children: Tuple[Union["Tree", Leaf], ...]

    def __post_init__(self):
        if not self.children:
            raise TreebankError(f"node {self.label!r} has no children")

    def leaves(self) -> Iterator[Leaf]:
        for child in self.children:
            if isinstance(child, Leaf):
                yield child
            else:
                yield from child.leaves()

    @property
    def tokens(self) -> Tuple[str, ...]:
        return tuple(leaf.token for leaf in self.leaves())

    @property
    def pos_tags(self) -> Tuple[str, ...]:
        return tuple(leaf.pos for leaf in self.leaves())

    def __len__(self) -> int:
        return sum(1 for _ in self.leaves())

    def __str__(self) -> str:
        return write_ptb(self)


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")
        for tok in self.tokens:
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"invalid token {tok!r}")

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def key(self) -> str:
        return " ".join(self.tokens)


def all_spans(n: int) -> Iterator[Span]:
    """Every fencepost span of an ``n``-token sentence, ordered by ``(i, j)``."""
    for i in range(n):
        for j in range(i + 1, n + 1):
            yield (i, j)


@dataclass
class Parse:
    """Total map from spans to label sequences; crossing constituents are allowed here."""

    sentence: Sentence
    labels: Dict[Span, LabelSeq] = field(default_factory=dict)

    def __post_init__(self):
        n = self.sentence.n
        expected = n * (n + 1) // 2
        if len(self.labels) != expected or any(
            not (0 <= i < j <= n) for i, j in self.labels
        ):
            raise TreebankError("parse must label exactly the spans of its sentence")

    def constituents(self) -> List[Span]:
        return sorted(s for s, seq in self.labels.items() if seq)

    def __getitem__(self, span: Span) -> LabelSeq:
        return self.labels[span]


# ---------------------------------------------------------------------------
# Bracketed format


def _lex(text: str) -> Iterator[Tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c, i
            i += 1
        else:
            start = i
            while i < n and not text[i].isspace() and text[i] not in "()":
                i += 1
            yield text[start:i], start


def parse_ptb(text: str) -> List[Tree]:
    """Read every bracketed tree in ``text``.

    Error offsets are 1-based character positions; an unexpected end of input
    is reported one past the last character.

    >>> [str(t) for t in parse_ptb("(TOP (NP (NN test)))")]
    ['(NP (NN test))']
    """
    tokens = list(_lex(text))
    eof = len(text) + 1
    pos = 0

    def parse_node() -> Union[Tree, Leaf]:
        nonlocal pos
        if pos >= len(tokens):
            raise TreebankError("unbalanced parentheses", eof)
        tok, off = tokens[pos]
        if tok != "(":
            raise TreebankError(f"expected '(' but found {tok!r}", off + 1)
        pos += 1
        if pos >= len(tokens):
            raise TreebankError("unbalanced parentheses", eof)
        label, loff = tokens[pos]
        if label == ")":
            raise TreebankError("empty node", loff + 1)
        if label == "(":
            raise TreebankError("internal node without label", loff + 1)
        pos += 1
        if pos >= len(tokens):
            raise TreebankError("unbalanced parentheses", eof)
        tok, toff = tokens[pos]
        if tok not in "()":
            # (POS token)
            pos += 1
            if pos >= len(tokens):
                raise TreebankError("unbalanced parentheses", eof)
            close, coff = tokens[pos]
            if close != ")":
                raise TreebankError("leaf must hold exactly one token", coff + 1)
            pos += 1
            return Leaf(label, tok)
        children = []
        while True:
            if pos >= len(tokens):
                raise TreebankError("unbalanced parentheses", eof)
            tok, toff = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok != "(":
                raise TreebankError(f"stray token {tok!r} among subtrees", toff + 1)
            children.append(parse_node())
        if not children:
            raise TreebankError("empty node", off + 1)
        return Tree(label, tuple(children))

    trees = []
    while pos < len(tokens):
        tok, off = tokens[pos]
        if tok == ")":
            raise TreebankError("unbalanced parentheses", off + 1)
        start = off
        node = parse_node()
        while isinstance(node, Tree) and node.label in WRAPPER_LABELS and len(node.children) == 1:
            node = node.children[0]
        if isinstance(node, Leaf):
            raise TreebankError("tree has no non-terminal root", start + 1)
        trees.append(node)
    return trees


def read_ptb_file(path) -> List[Tree]:
    with open(path, encoding="utf-8") as f:
        return parse_ptb(f.read())


def _escape(token: str) -> str:
    for raw, esc in _ESCAPES.items():
        token = token.replace(raw, esc)
    return token


def write_ptb(tree: Union[Tree, Leaf]) -> str:
    if isinstance(tree, Leaf):
        return f"({_escape(tree.pos)} {_escape(tree.token)})"
    return "(" + " ".join([tree.label] + [write_ptb(c) for c in tree.children]) + ")"


def write_ptb_file(trees: Iterable[Tree], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tree in trees:
            f.write(write_ptb(tree) + "\n")


# ---------------------------------------------------------------------------
# Span view


def _collect(node: Union[Tree, Leaf], start: int, out: Dict[Span, List[str]]) -> int:
    if isinstance(node, Leaf):
        return start + 1
    end = start
    for child in node.children:
        end = _collect(child, end, out)
    # children were visited first, so prepend to keep the chain top-down
    out.setdefault((start, end), []).insert(0, node.label)
    return end


def constituent_labels(tree: Tree) -> Dict[Span, LabelSeq]:
    """Label sequences of the constituent spans only."""
    chains: Dict[Span, List[str]] = {}
    _collect(tree, 0, chains)
    return {span: tuple(chain) for span, chain in chains.items()}


def tree_to_spans(tree: Tree) -> Parse:
    sentence = Sentence(tree.tokens)
    labels = dict.fromkeys(all_spans(sentence.n), EMPTY)
    labels.update(constituent_labels(tree))
    return Parse(sentence, labels)


def crosses(a: Span, b: Span) -> bool:
    """True iff the spans overlap without either containing the other."""
    return a[0] < b[0] < a[1] < b[1] or b[0] < a[0] < b[1] < a[1]


def spans_to_tree(parse: Parse, pos: Mapping[Span, str]) -> Tree:
    """Rebuild the tree whose constituents are exactly the non-empty spans of ``parse``.

    ``pos`` supplies the tag of every token, keyed by its width-1 span.
    """
    n = parse.sentence.n
    selected = parse.constituents()
    if (0, n) not in parse.labels or not parse.labels[(0, n)]:
        raise TreebankError("the full span (0, n) must be labeled")
    for a_idx, a in enumerate(selected):
        for b in selected[a_idx + 1:]:
            if crosses(a, b):
                raise TreebankError(f"crossing spans {a} and {b}")
    tokens = parse.sentence.tokens

    def leaf(k: int) -> Leaf:
        try:
            return Leaf(pos[(k, k + 1)], tokens[k])
        except KeyError:
            raise TreebankError(f"missing POS tag for token {k}") from None

    # Parents precede their descendants when sorted by (start, -end).
    order = sorted(selected, key=lambda s: (s[0], -s[1]))
    kids: Dict[Span, List[Span]] = {s: [] for s in order}
    stack: List[Span] = []
    for span in order:
        while stack and not (stack[-1][0] <= span[0] and span[1] <= stack[-1][1]):
            stack.pop()
        if stack:
            kids[stack[-1]].append(span)
        stack.append(span)

    def build(span: Span) -> Tree:
        i, j = span
        children: List[Union[Tree, Leaf]] = []
        k = i
        for child in kids[span]:
            while k < child[0]:
                children.append(leaf(k))
                k += 1
            children.append(build(child))
            k = child[1]
        while k < j:
            children.append(leaf(k))
            k += 1
        node: Tree = Tree(parse.labels[span][-1], tuple(children))
        for label in reversed(parse.labels[span][:-1]):
            node = Tree(label, (node,))
        return node

    return build((0, n))


def pos_map(tree: Tree) -> Dict[Span, str]:
    return {(k, k + 1): tag for k, tag in enumerate(tree.pos_tags)}


# ---------------------------------------------------------------------------
# Vocabularies


class Vocab:
    """Indexed set of items with a stable order."""

    def __init__(self, items: Sequence):
        self.items = list(items)
        self.index = {item: k for k, item in enumerate(self.items)}
        if len(self.index) != len(self.items):
            raise ValueError("duplicate vocabulary items")

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item) -> bool:
        return item in self.index

    def __getitem__(self, k: int):
        return self.items[k]

    def __iter__(self):
        return iter(self.items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.items == other.items

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.items!r})"

    def id(self, item) -> int:
        return self.index[item]


def _by_frequency(counts: Counter) -> List:
    return sorted(counts, key=lambda item: (-counts[item], item))


def collect_label_vocab(trees: Sequence[Tree]) -> Vocab:
    """Label sequences observed in ``trees``; the empty sequence is always index 0."""
    if not trees:
        raise TreebankError("cannot build a label vocabulary from zero trees")
    counts: Counter = Counter()
    for tree in trees:
        counts.update(constituent_labels(tree).values())
    return Vocab([EMPTY] + _by_frequency(counts))


def collect_pos_vocab(trees: Sequence[Tree]) -> Vocab:
    if not trees:
        raise ValueError("cannot build a POS vocabulary from zero trees")
    counts = Counter(tag for tree in trees for tag in tree.pos_tags)
    return Vocab(_by_frequency(counts))


def format_label(seq: LabelSeq) -> str:
    return "+".join(seq) if seq else "<none>"
