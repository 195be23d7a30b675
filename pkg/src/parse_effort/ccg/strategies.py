"""Derivation rebracketing and per-word step counts for CCG strategies.

``to_left_branching`` rewrites a derivation so that every word is combined
with the material to its left as soon as the grammar allows (type-raising
bare subjects and replacing application into a right sibling by
composition). ``rotate_to_right`` undoes this. Right adjuncts (X\\X attached
by backward application) are left at their original sites by both.

The revealing strategy replays the left-branching derivation of the
adjunct-free core of a sentence word by word, rotates the built structure
to right-branching after each application that follows a composition or
type-raise, and attaches each right adjunct to the matching node on the
right edge of what has been built so far.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..cfg_trees import StepTrace
from ..errors import InputError, RevealTargetMissing
from .categories import Category, Functor, Rule, combine, is_right_adjunct, matches
from .derivation import Derivation, build, type_raise

STRATEGIES = ("right", "left", "revealing")


@dataclass(frozen=True)
class RevealConfig:
    count_rotation_as_step: bool = True
    adjunct_test: Callable[[Category], bool] = is_right_adjunct
    # which right-edge match receives an adjunct when several fit
    attach: str = "lowest"

    def __post_init__(self):
        if self.attach not in ("lowest", "highest"):
            raise ValueError(f"attach must be 'lowest' or 'highest', not {self.attach!r}")


DEFAULT_CONFIG = RevealConfig()


def is_adjunction(node: Derivation, cfg: RevealConfig = DEFAULT_CONFIG) -> bool:
    return (
        node.rule is Rule.BA
        and cfg.adjunct_test(node.right.category)
        and isinstance(node.right.category, Functor)
        and matches(node.right.category.argument, node.left.category)
    )


def _rebuild(node: Derivation, kids: Sequence[Derivation]) -> Derivation:
    kids = tuple(kids)
    if all(a is b for a, b in zip(kids, node.children)):
        return node
    return Derivation(node.category, node.rule, kids, None, node.tc_id)


# ---------------------------------------------------------------------------
# left-branching normal form


def _decomposable(r: Derivation, cfg: RevealConfig) -> bool:
    return r.rule is Rule.FA or (r.rule is Rule.BA and not is_adjunction(r, cfg))


def _attach_fc(left: Derivation, right: Derivation) -> Derivation:
    # X/Y + (Y/W + W/Z) => (X/Y + Y/W) + W/Z
    if right.rule is Rule.FC:
        return _attach_fc(_attach_fc(left, right.left), right.right)
    return build(Rule.FC, left, right)


def _attach_fa(left: Derivation, right: Derivation, cfg: RevealConfig) -> Derivation:
    if right.rule is Rule.FA:
        # X/Y + (Y/Z + Z) => (X/Y + Y/Z) + Z
        return _attach_fa(_attach_fc(left, right.left), right.right, cfg)
    if right.rule is Rule.BA and not is_adjunction(right, cfg):
        # X/Y + (W + Y\W) => (X/Y + Y/(Y\W)) + Y\W
        raised = type_raise(right.left, right.right.category.result)
        return _attach_fa(_attach_fc(left, raised), right.right, cfg)
    return build(Rule.FA, left, right)


def to_left_branching(d: Derivation, cfg: RevealConfig = DEFAULT_CONFIG) -> Derivation:
    """Rebracket ``d`` into its left-branching form.

    The input is assumed valid. Nodes that admit no rewrite under the
    supported combinators are kept as they are, so the result is always a
    valid derivation with the same semantics.
    """
    if d.is_leaf:
        return d
    kids = [to_left_branching(c, cfg) for c in d.children]
    if d.rule is Rule.FA:
        out = _attach_fa(kids[0], kids[1], cfg)
        return _rebuild(d, kids) if _same_shape(out, kids) else out
    if d.rule is Rule.BA:
        node = _rebuild(d, kids)
        left, right = kids
        if is_adjunction(node, cfg) or not _decomposable(right, cfg):
            return node
        return _attach_fa(type_raise(left, right.category.result), right, cfg)
    if d.rule is Rule.FC:
        out = _attach_fc(kids[0], kids[1])
        return _rebuild(d, kids) if _same_shape(out, kids) else out
    return _rebuild(d, kids)


def _same_shape(out: Derivation, kids: Sequence[Derivation]) -> bool:
    return len(out.children) == len(kids) and all(a is b for a, b in zip(out.children, kids))


# ---------------------------------------------------------------------------
# right-branching normal form


def _right_node(rule: Rule, cat: Category, kids: list[Derivation], tc_id, lower: bool) -> Derivation:
    if rule is Rule.FA:
        left, right = kids
        if left.rule is Rule.FC:
            a, b = left.children
            inner = _right_node(Rule.FA, combine(Rule.FA, b.category, right.category), [b, right], None, lower)
            return _right_node(Rule.FA, cat, [a, inner], None, lower)
        if (
            lower
            and left.rule is Rule.FT
            and matches(left.category.argument, right.category)
        ):
            return _right_node(Rule.BA, cat, [left.left, right], None, lower)
    elif rule is Rule.FC:
        left, right = kids
        if left.rule is Rule.FC:
            a, b = left.children
            inner = _right_node(Rule.FC, combine(Rule.FC, b.category, right.category), [b, right], None, lower)
            return _right_node(Rule.FC, cat, [a, inner], None, lower)
    return Derivation(cat, rule, tuple(kids), None, tc_id)


def rotate_to_right(d: Derivation, *, lower_type_raise: bool = True) -> Derivation:
    """Rebracket ``d`` into right-branching form.

    With ``lower_type_raise`` a forward type-raised argument applied to its
    functor is replaced by the bare argument combined by backward
    application (S/(S\\NP) + S\\NP becomes NP + S\\NP).
    """
    if d.is_leaf:
        return d
    kids = [rotate_to_right(c, lower_type_raise=lower_type_raise) for c in d.children]
    return _right_node(d.rule, d.category, kids, d.tc_id, lower_type_raise)


# ---------------------------------------------------------------------------
# step traces


def _postorder_trace(tree: Derivation) -> list[StepTrace]:
    words = tree.words()
    ops: list[list[str]] = [[] for _ in words]
    k = -1

    def walk(node: Derivation):
        nonlocal k
        if node.is_leaf:
            k += 1
            ops[k].append("SHIFT")
            return
        for c in node.children:
            walk(c)
        ops[k].append(node.rule.op)

    walk(tree)
    return [StepTrace(i, w, tuple(o)) for i, (w, o) in enumerate(zip(words, ops))]


def _has_compose_or_raise(node: Derivation) -> bool:
    if node.rule in (Rule.FC, Rule.BC, Rule.BX, Rule.FT, Rule.BT):
        return True
    return any(_has_compose_or_raise(c) for c in node.children)


def _strip_adjuncts(d: Derivation, offset: int, cfg: RevealConfig):
    """Split ``d`` into its adjunct-free core and the removed adjuncts.

    Returns (core, core word indices, [(first index, adjunct subtree)]).
    """
    if d.is_leaf:
        return d, [offset], []
    if is_adjunction(d, cfg):
        core, idx, adjuncts = _strip_adjuncts(d.left, offset, cfg)
        n_left = sum(1 for _ in d.left.leaves())
        return core, idx, adjuncts + [(offset + n_left, d.right)]
    kids, idx, adjuncts = [], [], []
    pos = offset
    for c in d.children:
        core, ci, ca = _strip_adjuncts(c, pos, cfg)
        kids.append(core)
        idx.extend(ci)
        adjuncts.extend(ca)
        pos += sum(1 for _ in c.leaves())
    return _rebuild(d, kids), idx, adjuncts


def _reveal_plan(d: Derivation, offset: int, cfg: RevealConfig) -> list[tuple]:
    """Ordered simulation events for the words of ``d``."""
    core, idx, adjuncts = _strip_adjuncts(d, offset, cfg)
    tree = to_left_branching(core, cfg)
    blocks: list[tuple[int, int, list[tuple]]] = []
    k = -1

    def walk(node: Derivation):
        nonlocal k
        if node.is_leaf:
            k += 1
            blocks.append((idx[k], len(blocks), [("shift", idx[k], node)]))
            return
        for c in node.children:
            walk(c)
        blocks.append((idx[k], len(blocks), [("reduce", idx[k], node)]))

    walk(tree)
    for start, adj in adjuncts:
        n = sum(1 for _ in adj.leaves())
        events = _reveal_plan(adj, start, cfg)
        events.append(("reveal", start + n - 1, adj))
        blocks.append((start, len(blocks), events))
    blocks.sort(key=lambda b: (b[0], b[1]))
    return [ev for _, _, evs in blocks for ev in evs]


def _right_edge(tree: Derivation) -> list[tuple[tuple[int, ...], Derivation]]:
    out = []
    path: tuple[int, ...] = ()
    node = tree
    while True:
        out.append((path, node))
        if node.is_leaf:
            return out
        path = path + (len(node.children) - 1,)
        node = node.right


def _replace_at(tree: Derivation, path: tuple[int, ...], new: Derivation) -> Derivation:
    if not path:
        return new
    kids = list(tree.children)
    kids[path[0]] = _replace_at(kids[path[0]], path[1:], new)
    return Derivation(tree.category, tree.rule, tuple(kids), None, tree.tc_id)


def reveal_simulation(
    d: Derivation, cfg: RevealConfig = DEFAULT_CONFIG
) -> tuple[list[StepTrace], list[Derivation]]:
    """Run the revealing parser over ``d``.

    Returns the per-word traces and the final parser stack (a single
    derivation when the sentence was fully connected).

    Raises:
        RevealTargetMissing: an adjunct finds no matching right-edge node.
    """
    words = d.words()
    ops: list[list[str]] = [[] for _ in words]
    stack: list[Derivation] = []
    for kind, i, node in _reveal_plan(d, 0, cfg):
        if kind == "shift":
            stack.append(node)
            ops[i].append("SHIFT")
        elif kind == "reduce":
            n = len(node.children)
            if len(stack) < n:
                raise InputError(f"word {i}: parser stack underflow")
            kids = stack[-n:]
            del stack[-n:]
            built = Derivation(node.category, node.rule, tuple(kids), None, node.tc_id)
            ops[i].append(node.rule.op)
            if node.rule in (Rule.FA, Rule.BA) and _has_compose_or_raise(node.left):
                built = rotate_to_right(built, lower_type_raise=False)
                if cfg.count_rotation_as_step:
                    ops[i].append("ROTATE")
            stack.append(built)
        else:
            adjunct = stack.pop()
            want = node.category.argument
            if not stack:
                raise RevealTargetMissing(i, str(want))
            host = rotate_to_right(stack[-1], lower_type_raise=False)
            hits = [(p, t) for p, t in _right_edge(host) if matches(t.category, want)]
            if not hits:
                raise RevealTargetMissing(i, str(want))
            path, target = hits[-1] if cfg.attach == "lowest" else hits[0]
            joined = Derivation(target.category, Rule.BA, (target, adjunct))
            stack[-1] = _replace_at(host, path, joined)
            ops[i].append("REVEAL")
    return [StepTrace(i, w, tuple(o)) for i, (w, o) in enumerate(zip(words, ops))], stack


def steps_ccg(
    d: Derivation, strategy: str, cfg: RevealConfig = DEFAULT_CONFIG
) -> list[StepTrace]:
    """Per-word operations for one derivation under ``strategy``.

    ``right`` and ``left`` replay the rotated derivation bottom-up: each word
    costs one shift plus one step per node whose rightmost leaf it is.
    """
    if strategy == "right":
        return _postorder_trace(rotate_to_right(d))
    if strategy == "left":
        return _postorder_trace(to_left_branching(d, cfg))
    if strategy == "revealing":
        return reveal_simulation(d, cfg)[0]
    raise ValueError(f"unknown CCG strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")


def count_nodes(d: Derivation) -> int:
    return sum(1 for _ in d.nodes())


def sentence_totals(traces: Iterable[StepTrace]) -> int:
    return sum(t.count for t in traces)
