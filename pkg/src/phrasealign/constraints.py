"""Constraint parsing and lattice filtering.

Structural constraints arrive as paired inline tags (either the
canonical <cN>...</cN> form or simple HTML with one tag per token) and
become a tree of source spans; sentence boundaries act as the tree's
root. Lexical constraints pin a source span to an exact target phrase.
Both kinds restrict decoding by pure lattice filtering, so a filtered
lattice cannot express a violating derivation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import SourceSentence, coverage_for_span, span_mask
from .errors import ConstraintOverlapError, LineFormatError, MarkupError
from .phrasetable import INSERTION, OMISSION, REGULAR, OptionLattice, TranslationOption

TAG_TOKEN = re.compile(r"^<(/?)([^<>\s/]+)>$")
VOID_TAG_TOKEN = re.compile(r"^<[^<>\s]+/>$")


def is_tag_token(token: str) -> bool:
    """True for a paired open/close tag token; void tags are plain."""
    return bool(TAG_TOKEN.match(token)) and not VOID_TAG_TOKEN.match(token)


@dataclass(frozen=True)
class LexicalConstraint:
    """Pin the source span to an exact target phrase."""

    span: tuple[int, int]
    target: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(self.target))
        if not 1 <= self.span[0] <= self.span[1]:
            raise ValueError(f"bad constraint span {self.span}")
        if not self.target:
            raise ValueError("constraint target must be non-empty")


@dataclass
class ConstraintNode:
    """One constrained source region; id 0 is the sentence root."""

    node_id: int
    name: str
    open_token: str
    close_token: str
    span: tuple[int, int]
    children: list["ConstraintNode"] = field(default_factory=list)
    depth: int = 0


class ConstraintTree:
    """Nesting structure of constrained regions over one sentence.

    Trees are built once by parse_tagged and treated as read-only.
    Every source position maps to its innermost enclosing node; spans
    of siblings are disjoint and children lie within their parent.
    """

    def __init__(self, root: ConstraintNode, source_len: int):
        self.source_len = source_len
        self.root = root
        nodes: list[ConstraintNode] = []

        def walk(node: ConstraintNode, depth: int):
            node.depth = depth
            nodes.append(node)
            for child in node.children:
                walk(child, depth + 1)

        walk(root, 0)
        nodes.sort(key=lambda n: n.node_id)
        self._nodes = nodes
        self._parent = [0] * len(nodes)
        for node in nodes:
            for child in node.children:
                self._parent[child.node_id] = node.node_id
        self._masks = [span_mask(n.span[0], n.span[1]) for n in nodes]
        innermost = [0] * (source_len + 1)
        for node in sorted(nodes, key=lambda n: n.depth):
            for pos in range(node.span[0], node.span[1] + 1):
                innermost[pos] = node.node_id
        self._innermost = innermost

    def node(self, node_id: int) -> ConstraintNode:
        return self._nodes[node_id]

    def nodes(self) -> tuple[ConstraintNode, ...]:
        return tuple(self._nodes)

    def parent_id(self, node_id: int) -> int:
        return self._parent[node_id]

    def span_bits(self, node_id: int) -> int:
        return self._masks[node_id]

    def innermost_at(self, pos: int) -> int:
        if not 1 <= pos <= self.source_len:
            raise ValueError(f"position {pos} out of range 1..{self.source_len}")
        return self._innermost[pos]

    def depth(self) -> int:
        return max(n.depth for n in self._nodes)

    def innermost_enclosing(self, span: tuple[int, int]) -> int | None:
        """Deepest node containing the whole span, or None if the span
        crosses a boundary (some token's innermost node does not
        enclose the others)."""
        node_id = self._innermost[span[0]]
        while node_id != 0:
            node = self._nodes[node_id]
            if node.span[0] <= span[0] and span[1] <= node.span[1]:
                break
            node_id = self._parent[node_id]
        else:
            node = self.root
        # the span must not dip into a child of the enclosing node
        for child in node.children:
            if not (span[1] < child.span[0] or child.span[1] < span[0]):
                return None
        return node.node_id

    def open_chain(self, from_id: int, to_id: int) -> list[int] | None:
        """Node ids to open, outermost first, to get from from_id down
        to to_id; None when to_id is not a descendant of from_id."""
        chain = []
        node_id = to_id
        while node_id != from_id:
            if node_id == 0:
                return None
            chain.append(node_id)
            node_id = self._parent[node_id]
        chain.reverse()
        return chain

    def crosses_boundary(self, span: tuple[int, int]) -> bool:
        for node in self._nodes:
            inside = node.span[0] <= span[0] and span[1] <= node.span[1]
            disjoint = span[1] < node.span[0] or node.span[1] < span[0]
            if not inside and not disjoint:
                return True
        return False


def root_only_tree(source_len: int) -> ConstraintTree:
    root = ConstraintNode(0, "root", "", "", (1, source_len))
    return ConstraintTree(root, source_len)


def parse_tagged(line: str | list[str]) -> tuple[SourceSentence, ConstraintTree]:
    """Split a tagged line into plain tokens and a constraint tree.

    Tags must be whitespace-separated tokens. Each paired occurrence
    becomes a fresh node that remembers its literal tag text; pairing
    follows strict stack discipline, so crossing, unclosed, or empty
    pairs are rejected. Void/self-closing tags count as plain tokens.
    """
    tokens = line.split() if isinstance(line, str) else list(line)
    plain: list[str] = []
    root = ConstraintNode(0, "root", "", "", (1, 0))
    next_id = 1
    open_starts: list[int] = [1]
    stack: list[ConstraintNode] = [root]
    for token in tokens:
        match = TAG_TOKEN.match(token)
        if not match or VOID_TAG_TOKEN.match(token):
            plain.append(token)
            continue
        closing, name = match.group(1) == "/", match.group(2)
        if not closing:
            node = ConstraintNode(next_id, name, token, "", (0, 0))
            next_id += 1
            stack.append(node)
            open_starts.append(len(plain) + 1)
        else:
            if len(stack) == 1:
                raise MarkupError(f"close tag {token} without a matching open tag")
            node = stack[-1]
            if node.name != name:
                raise MarkupError(
                    f"close tag {token} crosses the open tag {node.open_token}"
                )
            start = open_starts[-1]
            if start > len(plain):
                raise MarkupError(f"tag pair {node.open_token} {token} encloses no token")
            node.span = (start, len(plain))
            node.close_token = token
            stack.pop()
            open_starts.pop()
            stack[-1].children.append(node)
    if len(stack) > 1:
        raise MarkupError(f"unclosed tag {stack[-1].open_token}")
    if not plain:
        raise MarkupError("line contains no plain tokens")
    root.span = (1, len(plain))
    return SourceSentence(tuple(plain)), ConstraintTree(root, len(plain))


def serialize_tagged(x: SourceSentence, tree: ConstraintTree) -> str:
    """Re-emit tokens with their original tags (inverse of parse_tagged)."""
    opens: dict[int, list[ConstraintNode]] = {}
    closes: dict[int, list[ConstraintNode]] = {}
    for node in tree.nodes():
        if node.node_id == 0:
            continue
        opens.setdefault(node.span[0], []).append(node)
        closes.setdefault(node.span[1], []).append(node)
    out: list[str] = []
    for pos in range(1, len(x) + 1):
        for node in sorted(opens.get(pos, []), key=lambda n: n.depth):
            out.append(node.open_token)
        out.append(x.tokens[pos - 1])
        for node in sorted(closes.get(pos, []), key=lambda n: -n.depth):
            out.append(node.close_token)
    return " ".join(out)


def apply_structural(lattice: OptionLattice, tree: ConstraintTree) -> OptionLattice:
    """Drop options whose span is neither fully inside nor fully outside
    every node. Insertions have no source span and always survive."""
    kept = [
        opt
        for opt in lattice.all_options()
        if opt.kind == INSERTION or not tree.crosses_boundary(opt.span)
    ]
    return OptionLattice(lattice.source_len, kept)


def apply_lexical(lattice: OptionLattice, constraints: list[LexicalConstraint]) -> OptionLattice:
    """Restrict the lattice so each constrained span can only be covered
    by its pinned target phrase.

    Options partially overlapping a constraint span are removed, as are
    regular and omission options exactly at the span; one regular
    option per constraint is injected. Insertions are untouched.
    """
    spans = sorted(c.span for c in constraints)
    for left, right in zip(spans, spans[1:]):
        if right[0] <= left[1]:
            raise ConstraintOverlapError(f"constraint spans {left} and {right} overlap")
    for constraint in constraints:
        if constraint.span[1] > lattice.source_len:
            raise ValueError(f"constraint span {constraint.span} outside 1..{lattice.source_len}")
    kept = []
    for opt in lattice.all_options():
        if opt.kind == INSERTION:
            kept.append(opt)
            continue
        drop = False
        for constraint in constraints:
            c_b, c_e = constraint.span
            o_b, o_e = opt.span
            disjoint = o_e < c_b or c_e < o_b
            equal = (o_b, o_e) == (c_b, c_e)
            if equal or not disjoint:
                drop = True
                break
        if not drop:
            kept.append(opt)
    for constraint in sorted(constraints, key=lambda c: c.span):
        kept.append(
            TranslationOption(
                constraint.span,
                constraint.target,
                REGULAR,
                coverage_for_span(constraint.span[0], constraint.span[1], lattice.source_len),
            )
        )
    return OptionLattice(lattice.source_len, kept)


def locate_constraint_occurrences(x: SourceSentence, source_phrase: list[str] | tuple[str, ...]) -> list[tuple[int, int]]:
    """All exact contiguous matches of the phrase, leftmost first."""
    phrase = tuple(source_phrase)
    if not phrase:
        raise ValueError("source phrase must be non-empty")
    matches = []
    for i_b in range(1, len(x) - len(phrase) + 2):
        if x.tokens[i_b - 1 : i_b - 1 + len(phrase)] == phrase:
            matches.append((i_b, i_b + len(phrase) - 1))
    return matches


def parse_lexical_line(line: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Parse one `source tokens ||| target tokens` constraint line."""
    fields = [f.strip() for f in line.split("|||")]
    if len(fields) != 2 or not fields[0] or not fields[1]:
        raise LineFormatError(f"expected `source ||| target`, got {line!r}")
    return tuple(fields[0].split()), tuple(fields[1].split())
