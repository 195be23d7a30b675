"""Penn-style constituency trees and word-by-word step counts.

Three parsing strategies are covered. Each internal node is visited exactly
once by every strategy; the strategies only differ in which word a visit is
charged to:

* bottom-up: the node is reduced when its rightmost leaf is shifted;
* top-down: the node is predicted just before its leftmost leaf is scanned;
* left-corner: the node is announced once its first child is complete.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from .errors import EmptyNode, TrailingInput, TreeSyntaxError, UnbalancedBrackets

__all__ = [
    "ConstTree",
    "StepTrace",
    "parse_penn_bracketed",
    "to_bracketed",
    "read_trees",
    "strip_punctuation",
    "steps_bottom_up",
    "steps_top_down",
    "steps_left_corner",
    "CFG_STRATEGIES",
]

PUNCTUATION_TAGS = frozenset({",", ".", ":", "``", "''", "-LRB-", "-RRB-", "#", "$", "HYPH", "NFP"})


@dataclass(frozen=True)
class ConstTree:
    """A constituency tree node.

    Leaves have a ``token`` and no children; internal nodes have a ``label``
    and at least one child.
    """

    label: str | None = None
    children: tuple["ConstTree", ...] = ()
    token: str | None = None

    def __post_init__(self):
        if self.token is not None:
            if self.children or self.label is not None:
                raise ValueError("a leaf carries a token and nothing else")
        elif not self.label or not self.children:
            raise ValueError("an internal node needs a label and at least one child")

    @classmethod
    def leaf(cls, token: str) -> "ConstTree":
        return cls(token=token)

    @classmethod
    def node(cls, label: str, *children: "ConstTree") -> "ConstTree":
        return cls(label=label, children=tuple(children))

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.token]
        out: list[str] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def internal_nodes(self) -> Iterator["ConstTree"]:
        """Yield internal nodes in postorder."""
        if self.is_leaf:
            return
        for child in self.children:
            yield from child.internal_nodes()
        yield self

    def __str__(self) -> str:
        return to_bracketed(self)


@dataclass(frozen=True)
class StepTrace:
    """Operations a strategy performs for one word."""

    word_index: int
    word: str
    ops: tuple[str, ...] = field(default_factory=tuple)

    @property
    def count(self) -> int:
        return len(self.ops)


# ---------------------------------------------------------------------------
# reading and writing

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> list[tuple[str, int]]:
    return [(m.group(), m.start()) for m in _TOKEN_RE.finditer(text)]


def parse_penn_bracketed(text: str) -> ConstTree:
    """Parse one bracketed tree such as ``(S (NP Mary) (VP (V reads)))``.

    A label-less wrapper around a single tree (``( (S ...) )``, as found in
    the Penn Treebank) is removed.

    Raises:
        UnbalancedBrackets: a closing bracket is missing or unexpected.
        EmptyNode: a node has no label or no children.
        TrailingInput: text remains after the tree is complete.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise EmptyNode("no tree", 0)
    pos = 0

    def parse_node() -> ConstTree:
        nonlocal pos
        tok, off = tokens[pos]
        if tok == ")":
            raise UnbalancedBrackets("unexpected ')'", off)
        if tok != "(":
            pos += 1
            return ConstTree.leaf(tok)
        pos += 1
        label = None
        if pos < len(tokens) and tokens[pos][0] not in "()":
            label = tokens[pos][0]
            pos += 1
        children = []
        while True:
            if pos >= len(tokens):
                raise UnbalancedBrackets("missing ')'", len(text))
            if tokens[pos][0] == ")":
                pos += 1
                break
            children.append(parse_node())
        if not children:
            raise EmptyNode("node without children", off)
        if label is None:
            if len(children) == 1 and not children[0].is_leaf:
                return children[0]
            raise EmptyNode("node without label", off)
        return ConstTree(label=label, children=tuple(children))

    tree = parse_node()
    if pos < len(tokens):
        tok, off = tokens[pos]
        if tok == ")":
            raise UnbalancedBrackets("unexpected ')'", off)
        raise TrailingInput("text after complete tree", off)
    if tree.is_leaf:
        raise EmptyNode("bare token is not a tree", tokens[0][1])
    return tree


def read_trees(lines) -> Iterator[tuple[int, ConstTree]]:
    """Yield (first line number, tree) for each tree in a text.

    Trees may span several lines; a new tree starts on a line of its own.
    Blank lines and lines starting with ``#`` between trees are skipped.
    """
    buf: list[str] = []
    start = depth = 0
    for lineno, line in enumerate(lines, 1):
        if not buf and (not line.strip() or line.lstrip().startswith("#")):
            continue
        if not buf:
            start = lineno
        buf.append(line)
        depth += line.count("(") - line.count(")")
        if depth <= 0:
            yield start, _parse_at("".join(buf), start)
            buf, depth = [], 0
    if buf:
        yield start, _parse_at("".join(buf), start)


def _parse_at(text: str, lineno: int) -> ConstTree:
    try:
        return parse_penn_bracketed(text)
    except TreeSyntaxError as exc:
        raise type(exc)(f"line {lineno}: {str(exc).rsplit(' at offset', 1)[0]}", exc.offset) from None


def to_bracketed(tree: ConstTree) -> str:
    if tree.is_leaf:
        return tree.token
    return "(" + tree.label + " " + " ".join(to_bracketed(c) for c in tree.children) + ")"


def strip_punctuation(tree: ConstTree, tags: frozenset[str] = PUNCTUATION_TAGS) -> ConstTree | None:
    """Drop preterminals whose label is a punctuation tag.

    Nodes left without children are pruned; returns None when nothing remains.
    """
    if tree.is_leaf:
        return tree
    if tree.label in tags and all(c.is_leaf for c in tree.children):
        return None
    kept = tuple(c for c in (strip_punctuation(ch, tags) for ch in tree.children) if c is not None)
    if not kept:
        return None
    return ConstTree(label=tree.label, children=kept)


# ---------------------------------------------------------------------------
# step counting


def _walk(tree: ConstTree, visit) -> list[str]:
    """Walk leaves left to right, calling ``visit(node, first, last, first_child_last, pre)``.

    ``visit`` is called for every internal node twice: once on entry
    (``pre=True``, only ``first`` is known) and once on exit.
    """
    words: list[str] = []

    def walk(node: ConstTree) -> tuple[int, int]:
        if node.is_leaf:
            words.append(node.token)
            i = len(words) - 1
            return i, i
        first = len(words)
        visit(node, first, None, None, True)
        first_child_last = last = -1
        for k, child in enumerate(node.children):
            _, last = walk(child)
            if k == 0:
                first_child_last = last
        visit(node, first, last, first_child_last, False)
        return first, last

    walk(tree)
    return words


def _collect(tree: ConstTree, charge) -> tuple[list[str], dict[int, list[str]]]:
    ops: dict[int, list[str]] = {}

    def visit(node, first, last, first_child_last, pre):
        hit = charge(node, first, last, first_child_last, pre)
        if hit is not None:
            ops.setdefault(hit[0], []).append(hit[1])

    words = _walk(tree, visit)
    return words, ops


def steps_bottom_up(tree: ConstTree) -> list[StepTrace]:
    words, ops = _collect(
        tree, lambda n, f, l, fcl, pre: None if pre else (l, f"REDUCE({n.label})")
    )
    return [StepTrace(i, w, ("SHIFT", *ops.get(i, ()))) for i, w in enumerate(words)]


def steps_top_down(tree: ConstTree) -> list[StepTrace]:
    words, ops = _collect(
        tree, lambda n, f, l, fcl, pre: (f, f"PREDICT({n.label})") if pre else None
    )
    return [StepTrace(i, w, (*ops.get(i, ()), "SHIFT")) for i, w in enumerate(words)]


def steps_left_corner(tree: ConstTree) -> list[StepTrace]:
    words, ops = _collect(
        tree, lambda n, f, l, fcl, pre: None if pre else (fcl, f"ANNOUNCE({n.label})")
    )
    return [StepTrace(i, w, ("SHIFT", *ops.get(i, ()))) for i, w in enumerate(words)]


CFG_STRATEGIES = {
    "bottomup": steps_bottom_up,
    "topdown": steps_top_down,
    "leftcorner": steps_left_corner,
}
