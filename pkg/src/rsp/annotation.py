"""Partial bracket annotations.

Markup is whitespace tokenized.  ``[`` opens an unlabeled constituent,
``[NP`` (or ``[S+VP`` for a unary chain) opens a labeled one and ``]``
closes it.  ``{`` ... ``}`` declares an explicit non-constituent.  Any other
token is a word of the sentence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

from .treebank import LabelSeq, Sentence, Span, Tree, all_spans, constituent_labels, crosses

CONSTITUENT = "constituent"
NON_CONSTITUENT = "non-constituent"

_LABEL_RE = re.compile(r"^[A-Z][A-Za-z0-9_\-]*(\+[A-Z][A-Za-z0-9_\-]*)*$")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class SpanDeclaration:
    span: Span
    kind: str
    label: Optional[LabelSeq] = None

    def __post_init__(self):
        if self.kind not in (CONSTITUENT, NON_CONSTITUENT):
            raise AnnotationError(f"unknown declaration kind {self.kind!r}")
        if self.label is not None and (self.kind != CONSTITUENT or not self.label):
            raise AnnotationError("only constituents carry a (non-empty) label")

    @property
    def is_constituent(self) -> bool:
        return self.kind == CONSTITUENT


@dataclass
class PartialAnnotation:
    sentence: Sentence
    declarations: List[SpanDeclaration] = field(default_factory=list)

    def __post_init__(self):
        validate(self)

    def constituents(self) -> List[SpanDeclaration]:
        return [d for d in self.declarations if d.is_constituent]


def validate(ann: PartialAnnotation) -> None:
    n = ann.sentence.n
    kinds = {}
    for decl in ann.declarations:
        i, j = decl.span
        if not 0 <= i < j <= n:
            raise AnnotationError(f"span {decl.span} outside a {n}-token sentence")
        previous = kinds.setdefault(decl.span, decl.kind)
        if previous != decl.kind:
            raise AnnotationError(f"span {decl.span} declared both constituent and non-constituent")
    cons = [d.span for d in ann.declarations if d.is_constituent]
    for a in cons:
        for b in cons:
            if crosses(a, b):
                raise AnnotationError(f"declared constituents {a} and {b} cross")


def parse_label(text: str) -> LabelSeq:
    if not _LABEL_RE.match(text):
        raise AnnotationError(f"invalid constituent label {text!r}")
    return tuple(text.split("+"))


def parse_markup(line: str) -> PartialAnnotation:
    """Parse one annotated line.

    >>> ann = parse_markup("[ Diameter AC ] is perpendicular [ to chord BD ] [ at E ] .")
    >>> [d.span for d in ann.declarations]
    [(0, 2), (4, 7), (7, 9)]
    """
    tokens: List[str] = []
    stack: List[Tuple[str, int, Optional[LabelSeq], int]] = []  # (opener, start, label, column)
    decls: List[SpanDeclaration] = []
    for col, tok in enumerate(line.split()):
        if tok.startswith("["):
            label = parse_label(tok[1:]) if len(tok) > 1 else None
            stack.append(("[", len(tokens), label, col))
        elif tok == "{":
            stack.append(("{", len(tokens), None, col))
        elif tok in ("]", "}"):
            if not stack:
                raise AnnotationError(f"unmatched {tok!r} (markup token {col})")
            opener, start, label, _ = stack.pop()
            if (opener == "[") != (tok == "]"):
                raise AnnotationError(f"{opener!r} closed by {tok!r} (markup token {col})")
            if start == len(tokens):
                raise AnnotationError(f"empty {opener}{tok} pair (markup token {col})")
            kind = CONSTITUENT if opener == "[" else NON_CONSTITUENT
            decls.append(SpanDeclaration((start, len(tokens)), kind, label))
        else:
            tokens.append(tok)
    if stack:
        raise AnnotationError(f"unclosed {stack[-1][0]!r} (markup token {stack[-1][3]})")
    if not tokens:
        raise AnnotationError("annotation has no words")
    decls.sort(key=lambda d: d.span)
    return PartialAnnotation(Sentence(tuple(tokens)), decls)


def read_markup_file(path) -> List[PartialAnnotation]:
    """One annotation per non-blank line; ``#`` lines are comments."""
    anns = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                anns.append(parse_markup(stripped))
            except AnnotationError as e:
                raise AnnotationError(f"{path}:{lineno}: {e}") from None
    return anns


def write_markup(ann: PartialAnnotation) -> str:
    """Inverse of :func:`parse_markup` (declarations must be pairwise non-crossing)."""
    opens: dict = {}
    closes: dict = {}
    # Outer spans open first and close last.
    for decl in sorted(ann.declarations, key=lambda d: (d.span[0], -d.span[1])):
        i, j = decl.span
        if decl.is_constituent:
            opener = "[" + ("+".join(decl.label) if decl.label else "")
            closer = "]"
        else:
            opener, closer = "{", "}"
        opens.setdefault(i, []).append(opener)
        closes.setdefault(j, []).insert(0, closer)
    for a in ann.declarations:
        for b in ann.declarations:
            if crosses(a.span, b.span):
                raise AnnotationError(f"cannot write crossing declarations {a.span} and {b.span}")
    out: List[str] = []
    for k, tok in enumerate(ann.sentence.tokens):
        out.extend(closes.get(k, []))
        out.extend(opens.get(k, []))
        out.append(tok)
    out.extend(closes.get(ann.sentence.n, []))
    return " ".join(out)


def derive_training_declarations(
    ann: PartialAnnotation, max_implied: Optional[int] = None
) -> List[SpanDeclaration]:
    """Explicit declarations plus a non-constituent for every span crossing a declared constituent.

    ``max_implied`` caps the number of implied spans kept (shortest first).
    """
    explicit = {d.span: d for d in ann.declarations}
    cons = [d.span for d in ann.declarations if d.is_constituent]
    implied = [
        s for s in all_spans(ann.sentence.n)
        if s not in explicit and any(crosses(s, c) for c in cons)
    ]
    if max_implied is not None and len(implied) > max_implied:
        implied = sorted(sorted(implied, key=lambda s: (s[1] - s[0], s))[:max_implied])
    out = list(explicit.values()) + [SpanDeclaration(s, NON_CONSTITUENT) for s in implied]
    return sorted(out, key=lambda d: d.span)


def declaration_satisfied(decl: SpanDeclaration, constituents: dict) -> bool:
    """Whether a tree with the given ``span -> label sequence`` constituents satisfies ``decl``."""
    if not decl.is_constituent:
        return decl.span not in constituents
    if decl.span not in constituents:
        return False
    return decl.label is None or constituents[decl.span] == decl.label


def annotation_from_tree(tree: Tree, spans: Iterable[Span], labeled: bool = False) -> PartialAnnotation:
    """Declare ``spans`` according to ``tree``: constituents where the tree has them, else non-constituents."""
    cons = constituent_labels(tree)
    decls = []
    for span in sorted(set(spans)):
        if span in cons:
            decls.append(SpanDeclaration(span, CONSTITUENT, cons[span] if labeled else None))
        else:
            decls.append(SpanDeclaration(span, NON_CONSTITUENT))
    return PartialAnnotation(Sentence(tree.tokens), decls)
